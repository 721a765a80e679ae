"""Acceptance criteria 1-11 at their stated tolerances; each test records one PASS/FAIL line."""
import os
import time
import warnings

import numpy as np
import pytest
from scipy.linalg import expm

from ahmsim import floquet as F
from ahmsim import interaction as I
from ahmsim import mitigation as M
from ahmsim.circuits import (GateSpec, TrotterPlan, count_resources, decompose_mx, decompose_mz, decompose_mzz,
                             fragment_unitary, phase_distance, trotter_error_bound, trotter_evolution)
from ahmsim.experiments import MEMORY_CAP_BYTES, domain_wall_state, resolve, run_string_breaking, state_bytes
from ahmsim.model import LX, LZ, LZ2, PI02, ModelParams, exact_evolution, evolve_exact_state, parse_state
from ahmsim.open_system import (averaged_liouvillian, lindblad_evolve, register_spec, stepwise_cycle)
from ahmsim.pulse import Envelope, device_transmon
from ahmsim.tensor import kron_all
from oracles import global_phase_distance

TWO_PI = 2 * np.pi
KHZ = TWO_PI * 1e3
MHZ = TWO_PI * 1e6
W_S = TWO_PI * 5.08e9


def device_floquet(T_E):
    pair = I.device_pair()
    cal = I.calibrate_stark_amplitude(pair, W_S, MHZ * np.arange(2.0, 15.0))
    driven, _ = I.driven_rates_pt(pair, I.StarkConfig(W_S, cal.amplitude, cal.amplitude))
    return F.floquet_system_for_model(ModelParams(TWO_PI, TWO_PI, TWO_PI, 2), I.bare_rates_pt(pair), driven, T_E)


def test_criterion_01_gate_identities(report):
    t0 = time.perf_counter()
    rng = np.random.default_rng(101)
    worst = 0.0
    for a in rng.uniform(-np.pi, np.pi, 100):
        frag, _ = decompose_mz(a)
        worst = max(worst, global_phase_distance(fragment_unitary(frag, 1), expm(-1j * a * LZ2)))
        frag, _ = decompose_mzz(a)
        worst = max(worst, global_phase_distance(fragment_unitary(frag, 2), expm(1j * a * np.kron(LZ, LZ))))
    ratios = []
    for phi in (0.02, 0.01, 0.005):
        frag, _ = decompose_mx(phi)
        # the chain term is -kappa Lx, so its step is exp(+i phi Lx)
        ratios.append(phase_distance(fragment_unitary(frag, 1), expm(1j * phi * LX)) / phi**2)
    spread = max(ratios) / min(ratios) - 1
    dt = time.perf_counter() - t0
    report(1, worst < 1e-12 and spread < 0.10 and dt < 5,
           f"mz/mzz max err {worst:.2e} (<1e-12); mx err/phi^2 spread {spread:.3%} (<10%); {dt:.2f}s (<5s)")


def test_criterion_02_trotter_convergence(report):
    t0 = time.perf_counter()
    p = ModelParams(TWO_PI, TWO_PI, TWO_PI, 2)
    psi0 = parse_state("|21>")
    devs = []
    for dt in (0.2, 0.1, 0.05):
        res = trotter_evolution(TrotterPlan(p, dt, int(round(3 / dt))), psi0)
        ex = exact_evolution(p, psi0, res["t"])
        devs.append(np.abs(res["lz"] - ex["lz"]).max())
    ratios = [a / b for a, b in zip(devs, devs[1:])]
    elapsed = time.perf_counter() - t0
    ok = all(abs(r - 2) <= 0.4 for r in ratios) and elapsed < 10
    report(2, ok, f"deviations {', '.join(f'{d:.4f}' for d in devs)}; ratios "
                  f"{', '.join(f'{r:.3f}' for r in ratios)} (2 +/- 20%); {elapsed:.2f}s (<10s)")


def test_criterion_03_resource_counts(report):
    plan = TrotterPlan(ModelParams(TWO_PI, TWO_PI, TWO_PI, 2), 0.1, 1)
    r = count_resources(plan).as_dict()
    # one step on two sites holds one Mzz and two Mx
    mzz_qutrit = r["qutrit_entangling"]
    mzz_a2a = r["qubit_cnot_all_to_all"] - 2 * 2
    mzz_hex = r["qubit_cnot_heavy_hex"] - 2 * 2
    mx_qubit = (count_resources(TrotterPlan(ModelParams(TWO_PI, TWO_PI, TWO_PI, 3), 0.1, 1)).as_dict()[
        "qubit_cnot_all_to_all"] - 2 * 12) // 3
    got = (mzz_qutrit, mzz_a2a, mzz_hex, mx_qubit)
    report(3, got == (3, 12, 30, 2), f"qutrit/Mzz {got[0]}, qubit a2a/Mzz {got[1]}, heavy-hex/Mzz {got[2]}, "
                                     f"qubit/Mx {got[3]} (expect 3, 12, 30, 2)")


def test_criterion_04_dd_cancellation(report):
    rng = np.random.default_rng(404)
    worst_avg = 0.0
    for _ in range(100):
        z = rng.normal(size=4)
        H = I.dd_average(I.h_ck_from_z(z))
        worst_avg = max(worst_avg, *np.abs(F.odd_parity_coefficients(H)))
    # effective generator of the full instantaneous-gate Floquet cycle on the device
    s, pp, remap = device_floquet(800e-9)
    U = F.cycle_unitary(s, F.FloquetSchedule(800e-9))
    Heff = F.effective_generator(U, 1600e-9)
    z11 = abs(F.hs_coefficient(Heff, np.kron(LZ, LZ)))
    odd = max(np.abs(F.odd_parity_coefficients(Heff)))
    s_int = F.FloquetSystem(2, s.bare, s.driven, tuple(
        type(d)(0.0, 0.0, d.envelope) for d in s.drives))
    Hint = F.effective_generator(F.cycle_unitary(s_int, F.FloquetSchedule(800e-9)), 1600e-9)
    z11i = abs(F.hs_coefficient(Hint, np.kron(LZ, LZ)))
    odd_i = max(np.abs(F.odd_parity_coefficients(Hint)))
    ok = worst_avg < 1e-14 and odd_i < 1e-10 * z11i and odd < 1e-10 * z11
    report(4, ok, f"averaged z12/z21 max {worst_avg:.1e} (<1e-14); Floquet odd/|z11| interaction only "
                  f"{odd_i / z11i:.1e}, with model drives {odd / z11:.1e} (<1e-10)")


def test_criterion_05_error_budget(report):
    t0 = time.perf_counter()
    T = 800e-9
    a0, b0 = F.alpha_rT(0.0, T), F.beta_rT(0.0, T)
    budget = F.error_budget(F.reference_scale_system(TWO_PI * 100e3, T_E=T, r=0.1))
    scale = TWO_PI * 100e3
    h3 = budget.H3_cont_norm / KHZ
    h2d = budget.H2_disc_norm / KHZ
    checks = {
        "alpha(0,T)=-T^2/18": abs(a0 + T**2 / 18) < 1e-12 * T**2,
        "beta(0,T)=0": b0 == 0.0,
        "H2_cont<1e-10*scale": budget.H2_cont_norm < 1e-10 * scale,
        "H3<0.1kHz": h3 < 0.1,
        "H2_disc~20kHz": 10 <= h2d <= 40,
    }
    elapsed = time.perf_counter() - t0
    failed = [k for k, v in checks.items() if not v]
    report(5, not failed and elapsed < 30,
           f"|H3|/2pi {h3:.2f} kHz (closed form {budget.H3_closed_norm / KHZ:.2f}) vs <0.1; "
           f"|H2_disc|/2pi {h2d:.1f} kHz vs 20 (x2); H2_cont {budget.H2_cont_norm / scale:.1e}*scale; "
           f"{elapsed:.2f}s; failed: {failed or 'none'}")


def test_criterion_06_floquet_trend(report):
    devs = []
    psi0 = parse_state("|21>")
    for T_E in (800e-9, 400e-9, 200e-9):
        s, pp, remap = device_floquet(T_E)
        N = int(round(19 * 800e-9 / T_E))  # fixed total model time
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RuntimeWarning)
            r = F.run_floquet(s, pp, F.FloquetSchedule(T_E, N=N), psi0, remap=remap)
        ex = exact_evolution(pp, psi0, r["t"])
        devs.append(np.abs(r["lz"] - ex["lz"]).max())
    ok = devs[0] > devs[1] > devs[2]
    report(6, ok, f"max |<Lz> - exact| at T_E 800/400/200 ns: {', '.join(f'{d:.4f}' for d in devs)} "
                  f"(monotone; halving ratios {devs[0] / devs[1]:.2f}, {devs[1] / devs[2]:.2f})")


def test_criterion_07_rates_and_calibration(report):
    t0 = time.perf_counter()
    errs = []
    for J in (2.0, 1.0, 0.5):
        pair = I.device_pair(J * MHZ)
        pt, num = I.bare_rates_pt(pair).alpha[0], I.bare_rates_numeric(pair).alpha[0]
        errs.append(abs(pt - num) / abs(num))
    cal = I.calibrate_stark_amplitude(I.device_pair(), W_S, MHZ * np.arange(2.0, 15.0))
    root = cal.amplitude / MHZ
    resid = abs(cal.residual_z22) / KHZ
    elapsed = time.perf_counter() - t0
    ok = (errs[0] < 0.2 and errs[0] > errs[1] > errs[2] and 7.1 / 2 <= root <= 7.1 * 2 and resid <= 2
          and elapsed < 60)
    report(7, ok, f"alpha11 PT vs numeric rel err {', '.join(f'{e:.2e}' for e in errs)} at J 2/1/0.5 MHz; "
                  f"z22 root {root:.2f} MHz (7.1 x2); residual {resid:.3f} kHz (<=2); {elapsed:.2f}s")


def test_criterion_08_jazz(report):
    rng = np.random.default_rng(808)
    T = np.linspace(0, 8e-6, 81)
    labels = [(0, 0), (0, 2), (2, 0), (2, 2)]
    errs = []
    for _ in range(100):
        zt = rng.uniform(-200, 200, size=4) * KHZ
        k = rng.integers(4)
        res = I.simulate_jazz(zt, labels[k], 1000 * KHZ, T)
        errs.append(abs(res["zeta"] - zt[k]) / abs(zt[k]))
    tot = []
    Tt = np.linspace(0, 4e-6, 81)
    for _ in range(10):
        zt = rng.uniform(-150, 150, size=4) * KHZ
        res = I.simulate_total_jazz(zt, 3000 * KHZ, Tt)
        tot.append(abs(res["z22"] - zt.sum() / 4) / abs(zt.sum() / 4))
    ok = max(errs) < 0.01 and max(tot) < 0.01
    report(8, ok, f"JAZZ max rel err {max(errs):.2e} over 100 draws; total JAZZ max rel err {max(tot):.2e}")


def test_criterion_09_open_system(report):
    t0 = time.perf_counter()
    specs = [device_transmon("QA"), device_transmon("QB")]
    reg = register_spec(specs)
    rate = TWO_PI * 100e3
    I3 = np.eye(3)
    Hbar = rate * (np.kron(LX, I3) + np.kron(I3, LX) + np.kron(LZ2, I3) + np.kron(I3, LZ2) + np.kron(LZ, LZ)
                   + 0.3 * np.kron(LZ, LZ2))
    trace_drift, min_eig = 0.0, np.inf
    trajectories = []
    trajectories.append(lindblad_evolve(Hbar, reg, parse_state("|21>"), np.linspace(0, 20e-6, 21)))
    env = Envelope(1e-6, 0.1)
    Hd = TWO_PI * 0.5e6 * (0.5 * LZ2 - LX / np.sqrt(2))
    qb = register_spec(specs[1:])
    trajectories.append(lindblad_evolve(lambda t: env.value(t % 1e-6) * Hd, qb, parse_state("|2>"),
                                        np.linspace(0, 4e-6, 9), breakpoints=list(np.arange(0.1e-6, 4e-6, 0.1e-6))))
    for tr in trajectories:
        trace_drift = max(trace_drift, np.abs(tr["trace"] - 1).max())
        min_eig = min(min_eig, tr["min_eig"].min())
    zero = type(reg)(reg.ops, (0.0,) * len(reg.ops))
    times = np.linspace(0, 10e-6, 6)
    unit = lindblad_evolve(Hbar, zero, parse_state("|21>"), times)
    uerr = max(np.abs(rho - np.outer(v, v.conj())).max()
               for rho, v in zip(unit["rho"], [expm(-1j * Hbar * t) @ parse_state("|21>") for t in times]))
    U = kron_all([PI02, PI02])
    S = averaged_liouvillian(Hbar, reg, U)
    errs = [np.linalg.norm(stepwise_cycle(Hbar, reg, U, T_E) - expm(S * 2 * T_E), 2)
            for T_E in (200e-9, 100e-9, 50e-9)]
    ratios = [a / b for a, b in zip(errs, errs[1:])]
    elapsed = time.perf_counter() - t0
    ok = trace_drift < 1e-9 and min_eig > -1e-9 and uerr < 1e-8 and all(3.6 < r < 4.4 for r in ratios)
    report(9, ok, f"trace drift {trace_drift:.1e}; min eig {min_eig:.1e}; Gamma=0 vs unitary {uerr:.1e}; "
                  f"stepwise error ratios {', '.join(f'{r:.3f}' for r in ratios)} (4); {elapsed:.2f}s")


def test_criterion_10_mitigation(report):
    t0 = time.perf_counter()
    plan = TrotterPlan(ModelParams(TWO_PI, TWO_PI, TWO_PI, 2), 0.1, 2)
    psi0 = parse_state("|21>")
    gen = kron_all([LX, np.eye(3)]) + kron_all([np.eye(3), LX])
    noise = M.NoiseChannel.composite(M.NoiseChannel.overrotation(gen, 0.02), M.NoiseChannel.depolarizing(0.9))
    out = M.mitigated_trotter_run(plan, psi0, noise, n_twirls=30, shots=1024, seed=11)
    ideal = trotter_evolution(plan, psi0)["lz"][1:]
    z = np.abs(out["purified"] - ideal) / out["sigma"]
    R = M.weyl_transfer_matrix(M.twirled_noise_superop(GateSpec("csum", (0, 1)), noise), 2)
    off = np.abs(R - np.diag(np.diag(R))).max()
    elapsed = time.perf_counter() - t0
    ok = z.max() <= 2 and off < 1e-10 and elapsed < 120
    report(10, ok, f"purified <Lz> within {z.max():.2f} sigma (<=2), lam_hat {out['lam_hat']:.4f}; "
                   f"81-twirl off-diagonal {off:.1e} (<1e-10); {elapsed:.2f}s")


def _string_breaking(n):
    rows, rep = run_string_breaking(resolve({"experiment": "string-breaking", "model": {"n_sites": n}}))
    return rep["max_norm_drift"], rep["reflection_error_q"]


def test_criterion_11_string_breaking(report):
    t0 = time.perf_counter()
    norm_err, refl = _string_breaking(9)
    t9 = time.perf_counter() - t0
    p4 = ModelParams(TWO_PI, TWO_PI, TWO_PI, 4)
    psi4 = parse_state(domain_wall_state(4))
    devs, bounds = [], []
    for dt in (0.1, 0.05):
        plan = TrotterPlan(p4, dt, int(round(3.0 / dt)))
        res = trotter_evolution(plan, psi4)
        devs.append(np.linalg.norm(res["state"] - evolve_exact_state(p4, psi4, 3.0)))
        bounds.append(trotter_error_bound(plan, 3.0))
    order = devs[0] / devs[1]
    ok = (norm_err < 1e-10 and refl < 1e-8 and t9 <= 60 and all(d <= b for d, b in zip(devs, bounds))
          and abs(order - 2) <= 0.4)
    report(11, ok, f"9 sites: norm err {norm_err:.1e} (<1e-10), reflection err {refl:.1e} (<1e-8), {t9:.1f}s "
                   f"(<=60s); 4 sites at t=3: state dev {devs[0]:.3f}, {devs[1]:.3f} <= commutator bound "
                   f"{bounds[0]:.1f}, {bounds[1]:.1f}; dt-halving ratio {order:.2f} (first order)")


@pytest.mark.slow
@pytest.mark.skipif(os.environ.get("AHMSIM_ACCEPT_15") != "1", reason="set AHMSIM_ACCEPT_15=1 for the 15-site run")
def test_criterion_11_fifteen_sites(report):
    t0 = time.perf_counter()
    assert state_bytes(15) <= MEMORY_CAP_BYTES
    norm_err, refl = _string_breaking(15)
    el = time.perf_counter() - t0
    report(11, norm_err < 1e-10 and refl < 1e-8 and el <= 1200,
           f"15 sites: norm err {norm_err:.1e}, reflection err {refl:.1e}, {el:.0f}s (<=1200s)")
