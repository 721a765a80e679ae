"""Named experiments: defaults, execution and long-format result rows."""
from __future__ import annotations

import copy
import warnings
from dataclasses import dataclass

import numpy as np
from scipy.linalg import expm

from . import floquet as F
from . import interaction as I
from .circuits import TrotterPlan, count_resources, trotter_error_bound, trotter_evolution
from .errors import CapacityError, ConfigError
from .mitigation import NoiseChannel, mitigated_trotter_run
from .model import LX, ModelParams, exact_evolution, parse_state
from .open_system import lindblad_evolve, liouvillian, register_spec, unvec, vec
from .pulse import (RWA_WARN, DEVICE, TransmonSpec, map_model_to_drive, rwa_single_hamiltonian,
                    run_single_analog, device_transmon)
from .tensor import kron_all

TWO_PI = 2 * np.pi
SCHEMA_VERSION = "1"
MEMORY_CAP_BYTES = 3 * 2**30
STATE_COPIES = 8  # working vectors held by the circuit simulator


@dataclass(frozen=True)
class Experiment:
    name: str
    description: str
    reproduces: str


# stable order for scripting
REGISTRY = (
    Experiment("single-analog", "one driven qutrit vs exact single-site model, with master-equation series",
               "single-qutrit analog traces of <Lz>, <Lz^2>"),
    Experiment("two-analog-digital", "two-qutrit Floquet protocol with Stark-tuned couplings and pi02 echoes",
               "two-qutrit analog-digital traces and extended initial-state panels"),
    Experiment("three-transmon", "three-transmon chain with two Stark tones, numeric rates and Floquet traces",
               "three-transmon rate bar chart and local-charge traces"),
    Experiment("digital-trotter", "Trotterized qutrit circuit, optional noise with RC, CB and purification",
               "two-site digital traces with mitigation"),
    Experiment("string-breaking", "Trotterized chain from a two-domain-wall state, per-site local charge",
               "large-chain local-charge heat map"),
    Experiment("calibrate", "Stark amplitude that nulls z22 on the two-transmon device",
               "z22 versus Stark amplitude calibration curve"),
    Experiment("resources", "entangling-gate counts for qutrit and qubit encodings",
               "qutrit vs qubit gate-count comparison"),
)
EXPERIMENTS = tuple(e.name for e in REGISTRY)

_DEVICE_PRESET = {"preset": "reference", "transmons": ["QA", "QB"], "couplings_mhz": [2.0]}

DEFAULTS = {
    "single-analog": {
        "model": {"kappa_over_2pi": 1.0, "chi_over_2pi": 1.0, "beta_over_2pi": 0.0, "n_sites": 1,
                  "scale_freq_hz": 1e6},
        "initial_state": "|2>",
        "times": {"t_max": 3.0, "n_points": 31},
        "schedule": {"r": 0.1},
        "device": {"preset": "reference", "transmons": ["QB"]},
        "noise": {"lindblad": True},
    },
    "two-analog-digital": {
        "model": {"kappa_over_2pi": 1.0, "chi_over_2pi": 1.0, "beta_over_2pi": 1.0, "n_sites": 2},
        "initial_state": "|21>",
        "schedule": {"T_E_ns": 800.0, "N": 12, "r": 0.1, "T_g_ns": 60.0, "gate_mode": "instantaneous",
                     "mode": "effective_segments"},
        "device": {**_DEVICE_PRESET, "stark": {"omega_S_ghz": 5.08, "amplitude_mhz": "calibrate", "dphi": 0.0}},
        "calibration": {"grid_mhz": [2.0, 4.0, 6.0, 8.0, 10.0, 12.0, 14.0]},
        "noise": {"lindblad": True},
    },
    "three-transmon": {
        "model": {"kappa_over_2pi": 1.0, "chi_over_2pi": 1.0, "beta_over_2pi": 1.0, "n_sites": 3},
        "initial_state": "|201>",
        "schedule": {"T_E_ns": 800.0, "N": 10, "r": 0.1, "T_g_ns": 60.0, "gate_mode": "instantaneous",
                     "mode": "effective_segments"},
        "device": {
            "transmons": [
                {"f01_ghz": 5.92, "f12_ghz": 5.58, "f23_ghz": 5.235},
                {"f01_ghz": 5.47, "f12_ghz": 5.13, "f23_ghz": 4.785},
                {"f01_ghz": 5.00, "f12_ghz": 4.66, "f23_ghz": 4.315},
            ],
            "couplings_mhz": [2.42, 2.40],
            "tones": [
                {"freq_ghz": 5.355, "amplitudes_mhz": [15.2467, -15.2467, 0.0]},
                {"freq_ghz": 4.885, "amplitudes_mhz": [0.0, 17.0965, -17.0965]},
            ],
        },
    },
    "digital-trotter": {
        "model": {"kappa_over_2pi": 1.0, "chi_over_2pi": 1.0, "beta_over_2pi": 1.0, "n_sites": 2},
        "initial_state": "|21>",
        "trotter": {"dt": 0.1, "n_steps": 30},
        "noise": {},
        "mitigation": {"n_twirls": 30, "shots": 1024},
    },
    "string-breaking": {
        "model": {"kappa_over_2pi": 1.0, "chi_over_2pi": 1.0, "beta_over_2pi": 1.0, "n_sites": 9},
        "initial_state": "auto",
        "trotter": {"dt": 0.1, "n_steps": 30},
        "exact_max_sites": 12,
    },
    "calibrate": {
        "device": {**_DEVICE_PRESET, "stark": {"omega_S_ghz": 5.08, "amplitude_mhz": "calibrate", "dphi": 0.0}},
        "calibration": {"grid_mhz": [2.0, 4.0, 6.0, 8.0, 10.0, 12.0, 14.0]},
    },
    "resources": {
        "model": {"kappa_over_2pi": 1.0, "chi_over_2pi": 1.0, "beta_over_2pi": 1.0, "n_sites": 2},
        "trotter": {"dt": 0.1, "n_steps": 1},
    },
}


def _merge(base, over):
    out = copy.deepcopy(base)
    for k, v in over.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _merge(out[k], v)
        else:
            out[k] = copy.deepcopy(v)
    return out


def resolve(config):
    """Fill experiment defaults under the user's values."""
    name = config["experiment"]
    res = _merge(DEFAULTS[name], config)
    res.setdefault("schema_version", SCHEMA_VERSION)
    res.setdefault("seed", 0)
    if name == "string-breaking" and res.get("initial_state") == "auto":
        res["initial_state"] = domain_wall_state(res["model"]["n_sites"])
    if "model" in res and "initial_state" in res:
        lab = res["initial_state"].strip().lstrip("|").rstrip(">")
        if len(lab) != res["model"]["n_sites"]:
            raise ConfigError(f"initial_state {res['initial_state']!r} does not match n_sites")
    return res


def domain_wall_state(n):
    """Reflection-symmetric state with two domain walls: outer |1> blocks around a central |0> block."""
    if n < 3:
        raise ConfigError("a two-domain-wall state needs at least 3 sites")
    side = (n - (3 if n >= 5 else 1)) // 2
    mid = n - 2 * side
    return "|" + "1" * side + "0" * mid + "1" * side + ">"


def model_params(cfg):
    m = cfg["model"]
    scale = m.get("scale_freq_hz")
    return ModelParams(TWO_PI * m["kappa_over_2pi"], TWO_PI * m["chi_over_2pi"], TWO_PI * m["beta_over_2pi"],
                       m["n_sites"], scale)


def transmon_from_config(t):
    if isinstance(t, str):
        if t not in DEVICE:
            raise ConfigError(f"unknown transmon preset {t!r}")
        return device_transmon(t)
    us = {k: t[k + "_us"] * 1e-6 for k in ("T1_01", "T2_01", "T1_12", "T2_12") if k + "_us" in t}
    return TransmonSpec.from_ghz(t["f01_ghz"], t["f12_ghz"], t.get("f23_ghz"), **us)


def state_bytes(n_sites):
    return STATE_COPIES * 16 * 3**n_sites


def check_capacity(n_sites, cap=MEMORY_CAP_BYTES):
    need = state_bytes(n_sites)
    if need > cap:
        raise CapacityError(f"{n_sites} sites need about {need / 2**30:.1f} GiB, above the "
                            f"{cap / 2**30:.1f} GiB cap")
    return need


# --- row helpers --------------------------------------------------------------------------

def _rows_from_traces(rows, exp, series, t_model, t_phys, data, stderr=None):
    """Append (experiment, series, site, time_model, time_physical_s, value, stderr) rows."""
    data = np.asarray(data, dtype=float)
    for i, t in enumerate(t_model):
        tp = None if t_phys is None else float(t_phys[i])
        for s in range(data.shape[1]):
            e = None if stderr is None else float(stderr[i][s])
            rows.append((exp, series, s, float(t), tp, float(data[i, s]), e))


def _add_series(rows, exp, tag, t, tp, res, keys=("lz", "lz2", "q")):
    for k in keys:
        if k in res:
            _rows_from_traces(rows, exp, f"{k}_{tag}", t, tp, res[k])


# --- experiments ---------------------------------------------------------------------------

def run_single_analog_exp(cfg):
    p = model_params(cfg)
    if p.n_sites != 1:
        raise ConfigError("single-analog is a one-site experiment")
    spec = transmon_from_config(cfg["device"]["transmons"][0])
    psi0 = parse_state(cfg["initial_state"])
    r = cfg["schedule"]["r"]
    tm = np.linspace(0.0, cfg["times"]["t_max"], cfg["times"]["n_points"])
    pos = tm[tm > 0]
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        pulse = run_single_analog(spec, p, psi0, pos, r=r)
    ex = exact_evolution(p, psi0, tm)
    m = np.array([1.0, 0.0, -1.0])
    p0 = np.abs(psi0) ** 2
    lz = np.concatenate([[p0 @ m], pulse["lz"]])[:, None]
    lz2 = np.concatenate([[p0 @ m**2], pulse["lz2"]])[:, None]
    tp = tm / p.scale_freq
    rows = []
    name = "single-analog"
    _add_series(rows, name, "exact", tm, tp, ex, ("lz", "lz2"))
    _rows_from_traces(rows, name, "lz_pulse", tm, tp, lz)
    _rows_from_traces(rows, name, "lz2_pulse", tm, tp, lz2)
    report = {"rwa_warnings": [str(w.message) for w in caught],
              "max_pulse_vs_exact_lz": float(np.abs(lz[:, 0] - ex["lz"][:, 0]).max())}
    if cfg.get("noise", {}).get("lindblad", False):
        spec_lb = register_spec([spec])
        base = map_model_to_drive(p, r=r)
        llz, llz2 = [lz[0, 0]], [lz2[0, 0]]
        for t in pos:
            d = base.with_duration(float(t) / p.scale_freq)
            out = lindblad_evolve(lambda s, d=d: rwa_single_hamiltonian(spec, d, s), spec_lb, psi0,
                                  [d.envelope.T], n_sites=1, breakpoints=d.envelope.breakpoints)
            llz.append(out["lz"][-1, 0])
            llz2.append(out["lz2"][-1, 0])
        _rows_from_traces(rows, name, "lz_lindblad", tm, tp, np.array(llz)[:, None])
        _rows_from_traces(rows, name, "lz2_lindblad", tm, tp, np.array(llz2)[:, None])
    return rows, report


def _pair_from_config(dev):
    specs = [transmon_from_config(t) for t in dev["transmons"]]
    if len(specs) != 2:
        raise ConfigError("a two-transmon device is required")
    return I.TransmonPairSpec(specs[0], specs[1], TWO_PI * 1e6 * dev["couplings_mhz"][0]), specs


def _calibrated_stark(cfg):
    dev = cfg["device"]
    pair, specs = _pair_from_config(dev)
    st = dev["stark"]
    omega_S = TWO_PI * 1e9 * st["omega_S_ghz"]
    cal = None
    amp = st["amplitude_mhz"]
    if amp == "calibrate":
        grid = TWO_PI * 1e6 * np.asarray(cfg["calibration"]["grid_mhz"], dtype=float)
        cal = I.calibrate_stark_amplitude(pair, omega_S, grid, dphi=st.get("dphi", 0.0))
        amp_rad = cal.amplitude
    else:
        amp_rad = TWO_PI * 1e6 * float(amp)
    stark = I.StarkConfig(omega_S, amp_rad, amp_rad, st.get("dphi", 0.0))
    return pair, specs, stark, cal


def _khz(zd):
    return {"z" + "".join(map(str, k)): v / (TWO_PI * 1e3) for k, v in zd.items()}


def _schedule(cfg):
    s = cfg["schedule"]
    return F.FloquetSchedule(s["T_E_ns"] * 1e-9, s.get("T_g_ns", 60.0) * 1e-9, s["N"],
                             s.get("gate_mode", "instantaneous"), s.get("r", 0.1))


def _floquet_lindblad(system, pp, schedule, psi0, specs, remap):
    """Per-cycle master-equation trajectory: periods under the average Hamiltonian, ideal gates."""
    n = system.n_sites
    for s in remap:
        psi0 = F.remap_site_parity(psi0, s, n)
    H = system.average_hamiltonian()
    L = liouvillian(H, register_spec(specs))
    E = expm(L * schedule.T_E)
    G = F.u02(n)
    Gs = np.kron(G.conj(), G)
    S = Gs @ E @ Gs @ E
    v = vec(np.outer(psi0, psi0.conj()))
    m = np.array([1.0, 0.0, -1.0])
    lz, lz2 = [], []
    d = 3**n
    for _ in range(schedule.N + 1):
        pops = np.real(np.diag(unvec(v, d))).reshape((3,) * n)
        a, b = [], []
        for k in range(n):
            pk = pops.sum(axis=tuple(j for j in range(n) if j != k))
            a.append(pk @ m)
            b.append(pk @ m**2)
        lz.append(a)
        lz2.append(b)
        v = S @ v
    res = {"lz": np.array(lz), "lz2": np.array(lz2)}
    for s in remap:
        res = F.remap_site_parity(res, s)
    return res


def _floquet_rows(name, cfg, system, pp, remap, specs, rows, report):
    schedule = _schedule(cfg)
    psi0 = parse_state(cfg["initial_state"])
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        res = F.run_floquet(system, pp, schedule, psi0, mode=cfg["schedule"].get("mode", "effective_segments"),
                            remap=remap)
    ex = exact_evolution(pp, psi0, res["t"])
    _add_series(rows, name, "floquet", res["t"], res["t_phys"], res)
    _add_series(rows, name, "exact", res["t"], res["t_phys"], ex)
    report.update({"scale_freq_hz": pp.scale_freq, "remapped_sites": list(remap),
                   "warnings": res["warnings"], "max_floquet_vs_exact_lz": float(np.abs(res["lz"] - ex["lz"]).max()),
                   "final_norm": res["norm"]})
    if cfg.get("noise", {}).get("lindblad", False) and all(s.T1_01 for s in specs):
        lb = _floquet_lindblad(system.with_period(schedule.T_E, schedule.r), pp, schedule, psi0, specs, remap)
        _add_series(rows, name, "lindblad", res["t"], res["t_phys"], lb, ("lz", "lz2"))


def run_two_analog_digital(cfg):
    name = "two-analog-digital"
    p = model_params(cfg)
    pair, specs, stark, cal = _calibrated_stark(cfg)
    bare = I.bare_rates_pt(pair)
    driven, shifts = I.driven_rates_pt(pair, stark)
    system, pp, remap = F.floquet_system_for_model(p, bare, driven, cfg["schedule"]["T_E_ns"] * 1e-9,
                                                  cfg["schedule"]["r"])
    report = {"bare_kHz": _khz(F.z_dict_from_rates(bare)), "driven_kHz": _khz(F.z_dict_from_rates(driven)),
              "stark_amplitude_MHz": stark.OmegaS0_A / (TWO_PI * 1e6),
              "stark_shifts_kHz": {k: (v / (TWO_PI * 1e3)).tolist() for k, v in shifts.items()}}
    if cal is not None:
        report["calibration"] = cal.as_dict()
    rows = []
    _floquet_rows(name, cfg, system, pp, remap, specs, rows, report)
    return rows, report


def three_transmon_rates(cfg):
    dev = cfg["device"]
    specs = tuple(transmon_from_config(t) for t in dev["transmons"])
    chain = I.TransmonChain(specs, tuple(TWO_PI * 1e6 * j for j in dev["couplings_mhz"]))
    E = I.labeled_energies(I.chain_hamiltonian(chain), len(specs))
    bare = I.fit_z_coefficients(E, len(specs))
    tones = [I.StarkTone(TWO_PI * 1e9 * t["freq_ghz"], tuple(TWO_PI * 1e6 * a for a in t["amplitudes_mhz"]))
             for t in dev["tones"]]
    driven = I.driven_rates_multitone(chain, tones)
    return specs, bare, driven


def run_three_transmon(cfg):
    name = "three-transmon"
    p = model_params(cfg)
    if p.n_sites != 3:
        raise ConfigError("three-transmon needs n_sites = 3")
    specs, bare, driven = three_transmon_rates(cfg)
    system, pp, remap = F.floquet_system_for_model(p, bare, driven, cfg["schedule"]["T_E_ns"] * 1e-9,
                                                  cfg["schedule"]["r"])
    report = {"bare_kHz": _khz(bare), "driven_kHz": _khz(driven)}
    rows = []
    _floquet_rows(name, cfg, system, pp, remap, specs, rows, report)
    return rows, report


def _noise_from_config(noise, n_sites):
    parts = []
    ang = noise.get("overrotation_angle", 0.0)
    if ang:
        gen = sum(kron_all([LX if j == k else np.eye(3) for j in range(2)]) for k in range(2))
        parts.append(NoiseChannel.overrotation(gen, ang))
    lam = noise.get("depolarizing_lambda")
    if lam is not None:
        parts.append(NoiseChannel.depolarizing(lam))
    if not parts:
        return None
    if n_sites != 2:
        raise ConfigError("noisy digital runs are modelled on two sites")
    return NoiseChannel.composite(*parts)


def run_digital_trotter(cfg, name="digital-trotter"):
    p = model_params(cfg)
    tr = cfg["trotter"]
    plan = TrotterPlan(p, tr["dt"], tr["n_steps"])
    check_capacity(p.n_sites)
    psi0 = parse_state(cfg["initial_state"])
    res = trotter_evolution(plan, psi0)
    t = res["t"]
    tp = None if p.scale_freq is None else t / p.scale_freq
    rows = []
    _add_series(rows, name, "trotter", t, tp, res)
    report = {"max_norm_drift": float(np.abs(res["norm"] - 1).max())}
    n = p.n_sites
    if n <= cfg.get("exact_max_sites", 12):
        ex = exact_evolution(p, psi0, t)
        _add_series(rows, name, "exact", t, tp, ex)
        report["max_trotter_vs_exact_lz"] = float(np.abs(res["lz"] - ex["lz"]).max())
    if name == "string-breaking":
        q = res["q"]
        report["reflection_error_q"] = float(np.abs(q + q[:, ::-1]).max())
        report["memory_estimate_bytes"] = state_bytes(n)
        if n <= 6:
            report["trotter_bound"] = float(trotter_error_bound(plan, t[-1]))
    noise = _noise_from_config(cfg.get("noise", {}), n)
    if noise is not None:
        mit = cfg["mitigation"]
        out = mitigated_trotter_run(plan, psi0, noise, n_twirls=mit["n_twirls"], shots=mit["shots"],
                                    seed=cfg["seed"])
        ts = t[1:]
        tps = None if tp is None else tp[1:]
        _rows_from_traces(rows, name, "lz_raw", ts, tps, out["raw"], out["raw_sigma"])
        _rows_from_traces(rows, name, "lz_mitigated", ts, tps, out["purified"], out["sigma"])
        report["mitigation"] = {"lam_hat": out["lam_hat"], "cycles_per_step": out["cycles"],
                                "unreliable": out["unreliable"],
                                "cb": None if out["cb"] is None else out["cb"].as_dict()}
    return rows, report


def run_string_breaking(cfg):
    check_capacity(cfg["model"]["n_sites"])
    return run_digital_trotter(cfg, name="string-breaking")


def run_calibrate(cfg):
    pair, specs, stark, cal = _calibrated_stark(cfg)
    if cal is None:
        raise ConfigError("calibrate needs device.stark.amplitude_mhz = 'calibrate'")
    rows = [("calibrate", "z22_khz", i, None, None, v / (TWO_PI * 1e3), None) for i, v in enumerate(cal.values)]
    rows += [("calibrate", "amplitude_mhz", i, None, None, g / (TWO_PI * 1e6), None)
             for i, g in enumerate(cal.grid)]
    driven, _ = I.driven_rates_pt(pair, stark)
    return rows, {"calibration": cal.as_dict(), "driven_kHz": _khz(F.z_dict_from_rates(driven))}


def run_resources(cfg):
    p = model_params(cfg)
    plan = TrotterPlan(p, cfg["trotter"]["dt"], cfg["trotter"]["n_steps"])
    rep = count_resources(plan).as_dict()
    rows = [("resources", k, None, None, None, float(v), None) for k, v in rep.items() if v is not None]
    return rows, {"resources": rep}


RUNNERS = {
    "single-analog": run_single_analog_exp,
    "two-analog-digital": run_two_analog_digital,
    "three-transmon": run_three_transmon,
    "digital-trotter": run_digital_trotter,
    "string-breaking": run_string_breaking,
    "calibrate": run_calibrate,
    "resources": run_resources,
}


def diagnostics(cfg):
    """Physics sanity checks of a resolved config without running it."""
    out = []
    name = cfg["experiment"]
    m = cfg.get("model")
    if m is not None:
        try:
            check_capacity(m["n_sites"])
        except CapacityError as exc:
            out.append({"level": "error", "kind": "CapacityError", "message": str(exc)})
    if name == "single-analog":
        p = model_params(cfg)
        spec = transmon_from_config(cfg["device"]["transmons"][0])
        ratio = map_model_to_drive(p, r=cfg["schedule"]["r"]).rwa_ratio(spec)
        if ratio > RWA_WARN:
            out.append({"level": "warning", "kind": "RWA", "message": f"RWA ratio {ratio:.3g} exceeds {RWA_WARN}"})
    dev = cfg.get("device", {})
    if "transmons" in dev and len(dev["transmons"]) >= 2:
        specs = [transmon_from_config(t) for t in dev["transmons"]]
        for a, b in zip(specs[:-1], specs[1:]):
            for i, wa in enumerate(a.transitions):
                for j, wb in enumerate(b.transitions):
                    if abs(wa - wb) < I.DEGENERACY_THRESHOLD:
                        out.append({"level": "warning", "kind": "degeneracy",
                                    "message": f"transitions {i}->{i + 1} and {j}->{j + 1} of neighbours "
                                               f"within 1 MHz"})
    if "schedule" in cfg and cfg["schedule"].get("T_E_ns", 1) <= 0:
        out.append({"level": "error", "kind": "schedule", "message": "T_E must be positive"})
    return out
