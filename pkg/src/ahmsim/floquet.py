"""Analog-digital Floquet protocol: system Hamiltonian, dynamical decoupling and Magnus error terms."""
from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
from scipy.integrate import solve_ivp
from scipy.linalg import logm

from .errors import InvalidArgument, NumericalError
from .interaction import InteractionRates
from .model import LX, LY, LZ, LZ2, PI02, SQRT2, ModelParams, site_expectations
from .pulse import DriveConfig, Envelope, envelope_value, pi02_drive_generator
from .tensor import TimeGrid, embed_local, kron_all, propagator_td, unitary_exp

TWO_PI = 2 * np.pi
Z22_WARN = TWO_PI * 2e3
GATE_MODES = ("instantaneous", "multitone")
RUN_MODES = ("effective_segments", "full_pulse")


def _comm(a, b):
    return a @ b - b @ a


@dataclass(frozen=True)
class FloquetSchedule:
    """N cycles of (evolve T_E, pi02, evolve T_E, pi02)."""

    T_E: float
    T_g: float = 60e-9
    N: int = 1
    gate_mode: str = "instantaneous"
    r: float = 0.1

    def __post_init__(self):
        if self.T_E <= 0:
            raise InvalidArgument("T_E must be positive")
        if self.T_g < 0:
            raise InvalidArgument("T_g must be non-negative")
        if int(self.N) != self.N or self.N < 0:
            raise InvalidArgument("N must be a non-negative integer")
        if self.gate_mode not in GATE_MODES:
            raise InvalidArgument(f"gate_mode must be one of {GATE_MODES}")
        if not 0 <= self.r < 0.5:
            raise InvalidArgument("ramp fraction must lie in [0, 0.5)")

    @property
    def envelope(self):
        return Envelope(self.T_E, self.r)


@dataclass(frozen=True)
class ErrorBudget:
    alpha_rT: float
    beta_rT: float
    H2_cont_norm: float
    H3_cont_norm: float
    H3_closed_norm: float
    H2_disc_norm: float
    dominant: str

    def as_dict(self, unit=TWO_PI * 1e3):
        return {
            "alpha_rT_s2": self.alpha_rT,
            "beta_rT_s2": self.beta_rT,
            "H2_cont_kHz": self.H2_cont_norm / unit,
            "H3_cont_kHz": self.H3_cont_norm / unit,
            "H3_closed_form_kHz": self.H3_closed_norm / unit,
            "H2_disc_kHz": self.H2_disc_norm / unit,
            "dominant": self.dominant,
        }


# --- diagonal interaction operators ---------------------------------------------------

def z_dict_from_rates(rates: InteractionRates):
    z11, z12, z21, z22 = rates.z
    return {(1, 1): z11, (1, 2): z12, (2, 1): z21, (2, 2): z22}


def interaction_diagonal(zd, n_sites):
    """Diagonal of sum_p z_p prod_k Lz_k^{p_k}, keeping only terms on two or more sites."""
    m = np.array([1.0, 0.0, -1.0])
    grids = np.meshgrid(*([m] * n_sites), indexing="ij", sparse=True)
    diag = np.zeros((3,) * n_sites)
    for powers, val in zd.items():
        if len(powers) != n_sites:
            raise InvalidArgument("z coefficient key length must equal the number of sites")
        if sum(1 for q in powers if q) < 2:
            continue
        term = 1.0
        for g, q in zip(grids, powers):
            term = term * g**q
        diag = diag + val * term
    return diag.reshape(-1)


def embed_pair_z(zd_pair, n_sites, left):
    """Place two-site coefficients on sites (left, left + 1) of an n-site chain."""
    out = {}
    for (a, b), v in zd_pair.items():
        key = [0] * n_sites
        key[left], key[left + 1] = a, b
        out[tuple(key)] = v
    return out


@dataclass(frozen=True)
class FloquetSystem:
    """Qutrit chain driven in the chirped drive frame with Stark-modulated couplings."""

    n_sites: int
    bare: dict
    driven: dict
    drives: tuple

    def __post_init__(self):
        if self.n_sites not in (2, 3):
            raise InvalidArgument("the analog-digital protocol is modelled for 2 or 3 qutrits")
        if len(self.drives) != self.n_sites:
            raise InvalidArgument("need one DriveConfig per site")

    @property
    def envelope(self) -> Envelope:
        return self.drives[0].envelope

    def with_period(self, T_E, r=None):
        r = self.envelope.r if r is None else r
        drives = tuple(DriveConfig(d.Omega0, d.Delta0, Envelope(T_E, r), d.phases) for d in self.drives)
        return FloquetSystem(self.n_sites, self.bare, self.driven, drives)

    def local_operator(self):
        """Envelope-free single-site part sum_k (Delta0 Lz^2 - (Omega0/sqrt2) Lx)."""
        n = self.n_sites
        return sum(embed_local(d.Delta0 * LZ2 - (d.Omega0 / SQRT2) * LX, k, n) for k, d in enumerate(self.drives))

    def h0(self):
        return np.diag(interaction_diagonal(self.bare, self.n_sites)).astype(complex)

    def m1(self):
        """Envelope-modulated part: local drives plus the Stark-driven change of the couplings."""
        dz = interaction_diagonal(self.driven, self.n_sites) - interaction_diagonal(self.bare, self.n_sites)
        return self.local_operator() + np.diag(dz)

    def average_hamiltonian(self):
        """First-order Magnus term (unit-area envelope)."""
        return self.m1() + self.h0()


def assemble_system_hamiltonian(system: FloquetSystem, t):
    """H_sys(t) = A(t) M1 + H0."""
    A = envelope_value(system.envelope, t)
    return A * system.m1() + system.h0()


def u02(n_sites):
    return kron_all([PI02] * n_sites)


# --- parity remap -----------------------------------------------------------------------

def remap_site_parity(data, site, n_sites=None):
    """Swap the roles of levels 0 and 2 on one site.

    Accepts a state vector (needs ``n_sites``) or a result dict with 'lz'
    (and optionally 'lz2', 'q') arrays of shape (..., n_sites).
    """
    if isinstance(data, dict):
        out = dict(data)
        lz = np.array(data["lz"], dtype=float)
        lz[..., site] *= -1
        out["lz"] = lz
        if "lz2" in data:
            out["lz2"] = np.array(data["lz2"], dtype=float)
        if "q" in data:
            n = lz.shape[-1]
            edge = np.concatenate([np.zeros(lz.shape[:-1] + (1,)), lz, np.zeros(lz.shape[:-1] + (1,))], axis=-1)
            out["q"] = edge[..., :-1] - edge[..., 1:]
            assert out["q"].shape[-1] == n + 1
        return out
    psi = np.asarray(data)
    if n_sites is None:
        raise InvalidArgument("n_sites required to remap a state vector")
    t = np.moveaxis(psi.reshape((3,) * n_sites), site, 0)[::-1]
    return np.moveaxis(t, 0, site).reshape(-1)


# --- model binding -----------------------------------------------------------------------

def _coupling_scale(driven, n_sites):
    if n_sites == 2:
        return driven[(1, 1)]
    return 0.5 * (driven[(1, 1, 0)] + driven[(0, 1, 1)])


def floquet_system_for_model(p: ModelParams, bare, driven, T_E, r=0.1):
    """Bind model couplings to drives.

    The scale frequency follows from the Lz Lz rate: t_s^-1 = |z11|/beta.
    A positive rate is turned into the model's -beta Lz Lz by remapping every
    other site. Returns (system, params with scale_freq, remapped sites).
    """
    n = p.n_sites
    if isinstance(bare, InteractionRates):
        bare = z_dict_from_rates(bare)
    if isinstance(driven, InteractionRates):
        driven = z_dict_from_rates(driven)
    if p.beta == 0:
        raise InvalidArgument("beta sets the scale frequency and must be nonzero")
    zc = _coupling_scale(driven, n)
    scale = abs(zc) / abs(p.beta)
    sign_flip = np.sign(zc) == np.sign(p.beta)
    remap = tuple(range(1, n, 2)) if sign_flip else ()
    pp = ModelParams(p.kappa, p.chi, p.beta, n, scale)
    drives = []
    for k in range(n):
        boundary = k in (0, n - 1)
        lz2 = 0.5 * (p.kappa + p.beta) if boundary else 0.5 * p.kappa + p.beta
        drives.append(DriveConfig(p.chi * scale, lz2 * scale, Envelope(T_E, r)))
    return FloquetSystem(n, dict(bare), dict(driven), tuple(drives)), pp, remap


def _residual_warnings(system):
    msgs = []
    n = system.n_sites
    keys = [(2, 2)] if n == 2 else [(2, 2, 0), (0, 2, 2)]
    for key in keys:
        v = system.driven.get(key, 0.0)
        if abs(v) > Z22_WARN:
            msgs.append(f"calibration residual z{''.join(map(str, key))}/2pi = {v / TWO_PI / 1e3:.2f} kHz")
    return msgs


def _gate_unitary(system, schedule):
    n = system.n_sites
    if schedule.gate_mode == "instantaneous" or schedule.T_g == 0:
        return u02(n)
    env, G = pi02_drive_generator(schedule.T_g)
    Gs = sum(embed_local(G, k, n) for k in range(n))
    H0 = system.h0()

    def H(t):
        return envelope_value(env, t) * Gs + H0

    return propagator_td(H, TimeGrid(0.0, schedule.T_g, atol=1e-12, rtol=1e-12), breakpoints=env.breakpoints)


def period_unitary(system: FloquetSystem, mode="effective_segments"):
    T = system.envelope.T
    if mode == "effective_segments":
        return unitary_exp(system.average_hamiltonian(), T)
    if mode == "full_pulse":
        return propagator_td(lambda t: assemble_system_hamiltonian(system, t),
                             TimeGrid(0.0, T, atol=1e-12, rtol=1e-11), breakpoints=system.envelope.breakpoints)
    raise InvalidArgument(f"mode must be one of {RUN_MODES}")


def cycle_unitary(system, schedule, mode="effective_segments"):
    U_P = period_unitary(system, mode)
    G = _gate_unitary(system, schedule)
    return G @ U_P @ G @ U_P


def run_floquet(system: FloquetSystem, p: ModelParams, schedule: FloquetSchedule, psi0,
                mode="effective_segments", remap=()):
    """Per-site <Lz>, <Lz^2> and charges after each Floquet cycle (2 periods each).

    ``psi0`` is given in model labels. ``remap`` lists sites whose levels 0
    and 2 are exchanged between model and device labels; the state is mapped
    in before evolution and observables are mapped back out. Model time is
    2 N T_E t_s^-1; gate time does not advance the model clock.
    """
    if mode not in RUN_MODES:
        raise InvalidArgument(f"mode must be one of {RUN_MODES}")
    if p.scale_freq is None:
        raise InvalidArgument("scale_freq required")
    if abs(system.envelope.T - schedule.T_E) > 1e-15 * schedule.T_E:
        system = system.with_period(schedule.T_E, schedule.r)
    n = system.n_sites
    U = cycle_unitary(system, schedule, mode)
    psi = np.asarray(psi0, dtype=complex)
    for s in remap:
        psi = remap_site_parity(psi, s, n)
    lz, lz2, q = [], [], []
    for k in range(schedule.N + 1):
        a, b, c = site_expectations(psi, n)
        lz.append(a)
        lz2.append(b)
        q.append(c)
        psi = U @ psi
    res = {"t": 2 * np.arange(schedule.N + 1) * schedule.T_E * p.scale_freq,
           "t_phys": 2 * np.arange(schedule.N + 1) * schedule.T_E,
           "lz": np.array(lz), "lz2": np.array(lz2), "q": np.array(q)}
    for s in remap:
        res = remap_site_parity(res, s)
    res["warnings"] = _residual_warnings(system)
    for w in res["warnings"]:
        warnings.warn(w, RuntimeWarning, stacklevel=2)
    res["norm"] = float(np.vdot(psi, psi).real)
    return res


# --- effective generator --------------------------------------------------------------

def effective_generator(U, T, guard=1e-6):
    """H_eff with U = exp(-i H_eff T), principal branch; refuses eigenphases near pi."""
    ph = np.angle(np.linalg.eigvals(U))
    if np.max(np.abs(ph)) > np.pi - guard:
        raise NumericalError("eigenphase at the branch cut; rescale the Hamiltonian or shorten T")
    H = 1j * logm(U) / T
    return 0.5 * (H + H.conj().T)


def hs_coefficient(H, O):
    return np.vdot(O, H) / np.vdot(O, O)


def odd_parity_coefficients(H):
    """Hilbert-Schmidt coefficients of Lz (x) Lz^2 and Lz^2 (x) Lz in a two-qutrit operator."""
    return (hs_coefficient(H, np.kron(LZ, LZ2)), hs_coefficient(H, np.kron(LZ2, LZ)))


# --- Magnus expansion -------------------------------------------------------------------

def magnus_continuous(H_of_t, T, order=3, breakpoints=None, rtol=1e-12, atol=1e-14):
    """First ``order`` (<= 3) average-Hamiltonian terms over [0, T].

    Integrates the Magnus ODE  O1' = A,  O2' = -[O1, A]/2,
    O3' = -[O2, A]/2 + [O1, [O1, A]]/12  with A = -i H(t) and returns
    Hbar^(n) = i O_n / T. This is the time-ordered nested-commutator integral
    in differential form.
    """
    if not 1 <= order <= 3:
        raise InvalidArgument("order must be 1, 2 or 3")
    d = H_of_t(0.0).shape[0]
    nd = d * d

    def rhs(t, y):
        A = -1j * H_of_t(t)
        O1 = y[:nd].reshape(d, d)
        out = [A]
        if order >= 2:
            out.append(-0.5 * _comm(O1, A))
        if order >= 3:
            O2 = y[nd:2 * nd].reshape(d, d)
            out.append(-0.5 * _comm(O2, A) + _comm(O1, _comm(O1, A)) / 12)
        return np.concatenate([o.ravel() for o in out])

    y = np.zeros(order * nd, dtype=complex)
    knots = sorted({0.0, T, *[b for b in (breakpoints or []) if 0 < b < T]})
    for a, b in zip(knots[:-1], knots[1:]):
        sol = solve_ivp(rhs, (a, b), y, method="DOP853", rtol=rtol, atol=atol)
        if sol.status != 0 or not np.all(np.isfinite(sol.y[:, -1])):
            raise NumericalError(f"Magnus integration failed on [{a}, {b}]: {sol.message}")
        y = sol.y[:, -1]
    terms = []
    for k in range(order):
        H = 1j * y[k * nd:(k + 1) * nd].reshape(d, d) / T
        scale = max(np.abs(H).max(), 1e-300)
        if np.abs(H - H.conj().T).max() > 1e-10 * max(scale, np.abs(terms[0]).max() if terms else scale):
            raise NumericalError(f"Magnus term {k + 1} is not Hermitian")
        terms.append(0.5 * (H + H.conj().T))
    return terms


def magnus_discrete(H_list, durations):
    """First and second order average Hamiltonian of a piecewise-constant sequence.

    H_list[0] acts first. Requires equal segment durations.
    """
    H_list = [np.asarray(H, dtype=complex) for H in H_list]
    durations = np.atleast_1d(np.asarray(durations, dtype=float))
    if durations.size == 1:
        durations = np.full(len(H_list), durations[0])
    if len(durations) != len(H_list):
        raise InvalidArgument("one duration per Hamiltonian")
    if np.ptp(durations) > 1e-12 * durations.max():
        raise InvalidArgument("discrete Magnus terms assume equal segment durations")
    T = durations[0]
    N = len(H_list)
    H1 = sum(H_list) / N
    H2 = np.zeros_like(H1)
    for i in range(N):
        for j in range(i):
            H2 += _comm(H_list[i], H_list[j])
    H2 = H2 * T / (2j * N)
    return H1, H2


# --- closed forms ---------------------------------------------------------------------

def alpha_rT(r, T):
    pi2 = np.pi**2
    return T**2 * ((33 - 6 * pi2) * r**3 + 3 * r**2 * (pi2 - 8) + 6 * pi2 * r - 4 * pi2) / (72 * pi2 * (1 - r) ** 2)


def beta_rT(r, T):
    return r * T**2 / 12 * (1 + (12 / np.pi**2 - 2) * r)


def m_operators(system: FloquetSystem):
    """M1, H0, M2 = [M1, H0], M31 = [H0, M2], M32 = [M1, M2]."""
    M1 = system.m1()
    H0 = system.h0()
    M2 = _comm(M1, H0)
    return M1, H0, M2, _comm(H0, M2), _comm(M1, M2)


def m32_from_sums(system: FloquetSystem):
    """M32 assembled term by term from the nested single-site commutator sums (two qutrits)."""
    if system.n_sites != 2:
        raise InvalidArgument("commutator sums are written for two qutrits")
    dA, dB = system.drives
    if abs(dA.Omega0 - dB.Omega0) > 0 or abs(dA.Delta0 - dB.Delta0) > 0:
        raise InvalidArgument("commutator sums assume identical site drives")
    x = -dA.Omega0 / SQRT2  # coefficient of Lx
    D0 = dA.Delta0
    P = {0: np.eye(3), 1: LZ, 2: LZ2, 3: LZ @ LZ2, 4: LZ2 @ LZ2}
    z0 = system.bare
    dz = {k: system.driven[k] - z0.get(k, 0.0) for k in system.driven}
    K = np.kron
    out = np.zeros((9, 9), dtype=complex)
    for (i, j), zij in z0.items():
        ci, cj = _comm(LX, P[i]), _comm(LX, P[j])
        acc = x * (K(_comm(LX, ci), P[j]) + K(P[i], _comm(LX, cj)))
        acc = acc + D0 * (K(_comm(LZ2, ci), P[j]) + K(P[i], _comm(LZ2, cj)))
        for (k, l), dkl in dz.items():
            acc = acc + dkl * (K(_comm(P[k], ci), P[j + l]) + K(P[i + k], _comm(P[l], cj)))
        acc = acc + 2 * x * K(ci, cj)
        out += x * zij * acc
    return out


def h2_disc_closed_form(system: FloquetSystem, T_E=None):
    """Second-order term of the two-segment decoupling sequence (H then U02 H U02).

    -(x T/2){z12 (Ly Lz^2 + i Lz [Lx, Lz^2]) + z21 (i [Lx, Lz^2] Lz + Lz^2 Ly)}, x the Lx coefficient.
    """
    if system.n_sites != 2:
        raise InvalidArgument("closed form is written for two qutrits")
    T = system.envelope.T if T_E is None else T_E
    x = -system.drives[0].Omega0 / SQRT2
    z12 = system.driven.get((1, 2), 0.0)
    z21 = system.driven.get((2, 1), 0.0)
    c = _comm(LX, LZ2)
    K = np.kron
    return -(x * T / 2) * (z12 * (K(LY, LZ2) + 1j * K(LZ, c)) + z21 * (1j * K(c, LZ) + K(LZ2, LY)))


def dd_sequence(system: FloquetSystem):
    Hb = system.average_hamiltonian()
    U = u02(system.n_sites)
    return [Hb, U.conj().T @ Hb @ U]


def error_budget(system: FloquetSystem, schedule: FloquetSchedule | None = None):
    """Norms (rad/s) of the second- and third-order in-pulse terms and the decoupling term."""
    if schedule is not None and abs(system.envelope.T - schedule.T_E) > 1e-15 * schedule.T_E:
        system = system.with_period(schedule.T_E, schedule.r)
    env = system.envelope
    T, r = env.T, env.r
    terms = magnus_continuous(lambda t: assemble_system_hamiltonian(system, t), T, 3, env.breakpoints)
    _, _, _, M31, M32 = m_operators(system)
    a, b = alpha_rT(r, T), beta_rT(r, T)
    H3_closed = a * M32 + b * M31
    if system.n_sites == 2:
        H2d = h2_disc_closed_form(system, T)
    else:
        H2d = magnus_discrete(dd_sequence(system), T)[1]
    norms = {
        "H2_cont": np.linalg.norm(terms[1], 2),
        "H3_cont": np.linalg.norm(terms[2], 2),
        "H2_disc": np.linalg.norm(H2d, 2),
    }
    dominant = max(norms, key=norms.get)
    return ErrorBudget(a, b, norms["H2_cont"], norms["H3_cont"], float(np.linalg.norm(H3_closed, 2)),
                       norms["H2_disc"], dominant)


def reference_scale_system(rate=TWO_PI * 100e3, T_E=800e-9, r=0.1, bare=None):
    """Two-qutrit system with every drive and coupling rate equal to ``rate``."""
    if bare is None:
        bare = {(1, 1): rate, (1, 2): rate, (2, 1): rate, (2, 2): rate}
    driven = {(1, 1): rate, (1, 2): rate, (2, 1): rate, (2, 2): rate}
    drives = tuple(DriveConfig(rate, rate, Envelope(T_E, r)) for _ in range(2))
    return FloquetSystem(2, bare, driven, drives)
