import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.linalg import expm

from ahmsim.errors import ConfigError, InvalidArgument, NumericalError
from ahmsim.model import LX, LZ, LZ2, PI02, ModelParams, basis_state, build_hamiltonian, parse_state
from ahmsim.open_system import (LindbladSpec, averaged_liouvillian, check_density_matrix, evolve_superop,
                                jump_ops_from_coherence, lindblad_evolve, liouvillian, register_spec,
                                stepwise_cycle, unvec, vec)
from ahmsim.pulse import TransmonSpec, device_transmon
from ahmsim.tensor import kron_all, unitary_exp
from oracles import lindblad_rk4

TWO_PI = 2 * np.pi
US = 1e-6


def qutrit_spec(**kw):
    return TransmonSpec.from_ghz(5.0, 4.75, **kw)


def device_hbar():
    # model-scale Hamiltonian in rad/s with a coupling that does not commute with the echo
    rate = TWO_PI * 100e3
    I3 = np.eye(3)
    H = rate * (np.kron(LX, I3) + np.kron(I3, LX) + np.kron(LZ2, I3) + np.kron(I3, LZ2)
                + np.kron(LZ, LZ) + 0.3 * np.kron(LZ, LZ2))
    return H


def test_jump_rates_from_coherence_times():
    qb = device_transmon("QB")
    spec = jump_ops_from_coherence(qb)
    rates = dict(zip(spec.labels, spec.rates))
    assert rates["L10"] == pytest.approx(1 / 26e-6)
    assert rates["L21"] == pytest.approx(1 / 17e-6)
    assert rates["L11"] * US == pytest.approx(1 / 36 - 1 / 52, rel=1e-12)
    assert rates["L11"] * US == pytest.approx(8.547e-3, rel=1e-3)
    assert rates["L22"] * US == pytest.approx(1 / 24 - 1 / 34, rel=1e-12)
    ops = dict(zip(spec.labels, spec.ops))
    assert ops["L10"][0, 1] == 1 and np.count_nonzero(ops["L10"]) == 1
    assert ops["L21"][1, 2] == 1 and np.count_nonzero(ops["L21"]) == 1


def test_no_pure_dephasing_at_t2_limit():
    spec = jump_ops_from_coherence(qutrit_spec(T1_01=20e-6, T2_01=40e-6, T1_12=10e-6, T2_12=20e-6))
    assert spec.labels == ("L10", "L21")


def test_infinite_times_give_no_channels():
    assert jump_ops_from_coherence(qutrit_spec()).ops == ()
    spec = jump_ops_from_coherence(qutrit_spec(T1_01=np.inf, T2_01=np.inf, T1_12=10e-6, T2_12=20e-6),
                                   drop_zero=False)
    assert dict(zip(spec.labels, spec.rates))["L10"] == 0.0


def test_t2_above_twice_t1_rejected():
    with pytest.raises(ConfigError):
        jump_ops_from_coherence(qutrit_spec(T1_01=20e-6, T2_01=50e-6))


def test_spec_validation():
    with pytest.raises(InvalidArgument):
        LindbladSpec((np.eye(3),), ())
    with pytest.raises(ConfigError):
        LindbladSpec((np.eye(3),), (-1.0,))
    with pytest.raises(InvalidArgument):
        LindbladSpec((np.eye(3), np.eye(9)), (1.0, 1.0))


def test_register_embedding():
    spec = register_spec([device_transmon("QA"), device_transmon("QB")])
    assert spec.dim == 9 and len(spec.ops) == 8
    assert spec.labels[0] == "L10@0" and spec.labels[4] == "L10@1"
    qb = jump_ops_from_coherence(device_transmon("QB"))
    assert np.array_equal(spec.ops[4], np.kron(np.eye(3), qb.ops[0]))
    assert spec.rates[4:] == qb.rates


def test_vec_convention(rng):
    A, X, B = (rng.normal(size=(3, 3)) + 1j * rng.normal(size=(3, 3)) for _ in range(3))
    assert np.allclose(vec(A @ X @ B), np.kron(B.T, A) @ vec(X))
    assert np.allclose(unvec(vec(X), 3), X)


def test_zero_rates_reduce_to_unitary():
    p = ModelParams(TWO_PI, TWO_PI, TWO_PI, 2)
    H = build_hamiltonian(p)
    psi = parse_state("|21>")
    spec = LindbladSpec(tuple(register_spec([device_transmon("QA"), device_transmon("QB")]).ops), (0.0,) * 8)
    times = np.linspace(0, 2, 9)
    res = lindblad_evolve(H, spec, psi, times)
    for t, rho in zip(times, res["rho"]):
        phi = unitary_exp(H, t) @ psi
        assert np.abs(rho - np.outer(phi, phi.conj())).max() < 1e-8
    # the ODE route gives the same answer
    res2 = lindblad_evolve(lambda t: H, spec, psi, times)
    assert np.abs(res2["rho"] - res["rho"]).max() < 1e-8


def test_pure_decay():
    g = 1 / 30e-6
    L = np.zeros((3, 3), complex)
    L[0, 1] = 1
    spec = LindbladSpec((L,), (g,))
    times = np.linspace(0, 60e-6, 7)
    res = lindblad_evolve(np.zeros((3, 3)), spec, basis_state([1]), times)
    p1 = res["rho"][:, 1, 1].real
    assert np.allclose(p1, np.exp(-g * times), atol=1e-10)
    assert np.allclose(res["lz"][:, 0], 1 - p1, atol=1e-10)


def test_matches_rk4_oracle(rng):
    H = TWO_PI * 0.2e6 * (LX + 0.5 * LZ2)
    spec = jump_ops_from_coherence(device_transmon("QB"))
    rho0 = np.outer(basis_state([2]), basis_state([2]).conj())
    T = 5e-6
    res = lindblad_evolve(H, spec, rho0, [T])
    ref = lindblad_rk4(H, spec.ops, spec.rates, rho0, T, steps=4000)
    assert np.abs(res["rho"][-1] - ref).max() < 1e-9


def test_time_dependent_matches_rk4_piecewise():
    # ODE route with a breakpoint against two constant RK4 segments
    H1 = TWO_PI * 0.3e6 * LX
    H2 = TWO_PI * 0.2e6 * LZ2
    spec = jump_ops_from_coherence(device_transmon("QA"))
    rho0 = np.outer(basis_state([0]), basis_state([0]).conj())
    res = lindblad_evolve(lambda t: H1 if t < 1e-6 else H2, spec, rho0, [2e-6], breakpoints=[1e-6])
    mid = lindblad_rk4(H1, spec.ops, spec.rates, rho0, 1e-6, 2000)
    ref = lindblad_rk4(H2, spec.ops, spec.rates, mid, 1e-6, 2000)
    assert np.abs(res["rho"][-1] - ref).max() < 1e-8


@settings(max_examples=15)
@given(st.integers(0, 2**31 - 1))
def test_trajectory_invariants(seed):
    rng = np.random.default_rng(seed)
    h = rng.normal(size=(9, 9)) + 1j * rng.normal(size=(9, 9))
    H = TWO_PI * 0.2e6 * (h + h.conj().T) / 2
    spec = register_spec([device_transmon("QA"), device_transmon("QB")])
    a = rng.normal(size=9) + 1j * rng.normal(size=9)
    psi = a / np.linalg.norm(a)
    res = lindblad_evolve(H, spec, psi, np.linspace(0, 20e-6, 6))
    assert np.abs(res["trace"] - 1).max() < 1e-9
    assert res["min_eig"].min() > -1e-9
    assert res["herm_err"].max() < 1e-12
    assert np.all(res["purity"] <= 1 + 1e-9)


def test_check_density_matrix_flags():
    with pytest.raises(NumericalError):
        check_density_matrix(np.diag([0.6, 0.5, 0.0]))
    with pytest.raises(NumericalError):
        check_density_matrix(np.diag([1.1, -0.1, 0.0]))


def test_averaged_identity_gate_is_liouvillian():
    H = device_hbar()
    spec = register_spec([device_transmon("QA"), device_transmon("QB")])
    assert np.allclose(averaged_liouvillian(H, spec, U=np.eye(9)), liouvillian(H, spec))


def test_conjugated_relaxation_channel():
    spec = jump_ops_from_coherence(device_transmon("QB"))
    c = spec.conjugated(PI02)
    ops = dict(zip(c.labels, c.ops))
    target = np.zeros((3, 3), complex)
    target[2, 1] = 1
    # pi02 maps |0><1| to |2><1| up to phase
    ov = np.vdot(target, ops["L10"])
    assert abs(abs(ov) - 1) < 1e-12 and np.abs(ops["L10"] - ov * target).max() < 1e-12


def test_averaged_liouvillian_trace_preserving():
    H = device_hbar()
    spec = register_spec([device_transmon("QA"), device_transmon("QB")])
    S = averaged_liouvillian(H, spec)
    tr = vec(np.eye(9)).conj()
    scale = np.abs(S).max()
    assert np.abs(tr @ S).max() < 1e-12 * scale
    rho = evolve_superop(S, np.outer(basis_state([2, 1]), basis_state([2, 1])), [0, 10e-6])[-1]
    check_density_matrix(rho, trace_tol=1e-9, pos_tol=1e-9)


def test_stepwise_cycle_error_quarters():
    H = device_hbar()
    spec = register_spec([device_transmon("QA"), device_transmon("QB")])
    U = kron_all([PI02, PI02])
    S = averaged_liouvillian(H, spec, U)
    errs = []
    for T_E in (200e-9, 100e-9, 50e-9):
        step = stepwise_cycle(H, spec, U, T_E)
        errs.append(np.linalg.norm(step - expm(S * 2 * T_E), 2))
    ratios = [a / b for a, b in zip(errs, errs[1:])]
    assert all(3.6 < r < 4.4 for r in ratios), ratios


def test_dimension_mismatch():
    spec = jump_ops_from_coherence(device_transmon("QB"))
    with pytest.raises(InvalidArgument):
        lindblad_evolve(np.zeros((9, 9)), spec, basis_state([0, 0]), [0.0, 1e-6])
    with pytest.raises(InvalidArgument):
        lindblad_evolve(np.zeros((3, 3)), spec, basis_state([0]), [1e-6, 0.0])
