"""Transmon drive Hamiltonians, shaped and chirped pulses, pi02 gates."""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import CalibrationError, InvalidArgument, NumericalError
from .model import LX, LZ, LZ2, PI02, SQRT2, ModelParams, single_site_hamiltonian
from .tensor import TimeGrid, evolve_td, propagator_td, unitary_exp

TWO_PI = 2 * np.pi
RWA_WARN = 0.05


@dataclass(frozen=True)
class TransmonSpec:
    """Transition frequencies (rad/s), charge matrix elements and coherence times (s)."""

    omega01: float
    omega12: float
    omega23: float | None = None
    lambda_k: float = SQRT2
    mu: tuple | None = None
    T1_01: float | None = None
    T2_01: float | None = None
    T1_12: float | None = None
    T2_12: float | None = None
    t2_kind: str = "ramsey"

    def __post_init__(self):
        freqs = [self.omega01, self.omega12] + ([self.omega23] if self.omega23 is not None else [])
        if any(f <= 0 for f in freqs):
            raise InvalidArgument("transition frequencies must be positive")
        if self.omega12 == self.omega01:
            raise InvalidArgument("zero anharmonicity")
        if self.mu is not None and abs(self.mu[0] - 1) > 1e-12:
            raise InvalidArgument("explicit charge elements must have mu_1 = 1")
        if self.t2_kind not in ("ramsey", "echo"):
            raise InvalidArgument("t2_kind must be 'ramsey' or 'echo'")

    @property
    def anharmonicity(self):
        return self.omega12 - self.omega01

    @property
    def transitions(self):
        w = [self.omega01, self.omega12]
        if self.omega23 is not None:
            w.append(self.omega23)
        return np.array(w)

    @property
    def mus(self):
        """Charge matrix elements (mu_1, mu_2, mu_3)."""
        if self.mu is not None:
            m = list(self.mu)
        else:
            m = [1.0, self.lambda_k]
        if len(m) < 3:
            m.append(np.sqrt(3.0))
        return np.array(m[:3], dtype=float)

    @classmethod
    def from_ghz(cls, f01, f12, f23=None, **kw):
        return cls(TWO_PI * f01 * 1e9, TWO_PI * f12 * 1e9,
                   None if f23 is None else TWO_PI * f23 * 1e9, **kw)


# reference two-transmon device (frequencies in GHz, coherence times in seconds)
DEVICE = {
    "QA": dict(f01=5.4146, f12=5.1687, f23=4.918, T1_01=30e-6, T2_01=48e-6, T1_12=15e-6, T2_12=20e-6),
    "QB": dict(f01=5.2484, f12=5.0075, f23=4.758, T1_01=26e-6, T2_01=36e-6, T1_12=17e-6, T2_12=24e-6),
}
DEVICE_STARK = dict(omega_S=TWO_PI * 5.08e9, OmegaS0=TWO_PI * 7.1e6, J=TWO_PI * 2e6)


def device_transmon(name):
    d = dict(DEVICE[name])
    return TransmonSpec.from_ghz(d.pop("f01"), d.pop("f12"), d.pop("f23"), **d)


@dataclass(frozen=True)
class Envelope:
    """Flat-top pulse with sin^2 ramps; unit average so that its area is T."""

    T: float
    r: float = 0.1

    def __post_init__(self):
        if self.T < 0:
            raise InvalidArgument("pulse duration must be non-negative")
        if not 0 <= self.r < 0.5:
            raise InvalidArgument("ramp fraction must lie in [0, 0.5)")

    @property
    def a(self):
        return 1.0 / (1.0 - self.r)

    @property
    def breakpoints(self):
        if self.r == 0:
            return []
        return [self.r * self.T, (1 - self.r) * self.T]

    def value(self, t):
        return envelope_value(self, t)

    def area(self, t):
        """B(t) = int_0^t A."""
        T, r, a = self.T, self.r, self.a
        t = float(t)
        if r == 0:
            return a * t
        tr = r * T
        if t <= tr:
            return a * (0.5 * t - tr / (2 * np.pi) * np.sin(np.pi * t / tr))
        if t <= T - tr:
            return a * (0.5 * tr + (t - tr))
        return T - self.area(T - t)


def envelope_value(e: Envelope, t):
    T, r, a = e.T, e.r, e.a
    if t < -1e-15 * max(T, 1) or t > T * (1 + 1e-12) + 1e-300:
        raise InvalidArgument(f"t={t} outside [0, {T}]")
    t = min(max(t, 0.0), T)
    if r == 0:
        return a
    tr = r * T
    if t < tr:
        return a * np.sin(np.pi * t / (2 * tr)) ** 2
    if T - t < tr:
        return a * np.sin(np.pi * (T - t) / (2 * tr)) ** 2
    return a


def phase_ramp(e: Envelope, Delta0, t):
    """delta phi(t) = Delta0 * int_0^t A."""
    if t < 0 or t > e.T * (1 + 1e-12):
        raise InvalidArgument(f"t={t} outside [0, {e.T}]")
    return Delta0 * e.area(min(t, e.T))


@dataclass(frozen=True)
class DriveConfig:
    """Two-tone chirped drive: Omega_1 = lambda Omega_2 = Omega0 A(t), Delta_1 = -Delta_2 = Delta0 A(t)."""

    Omega0: float
    Delta0: float
    envelope: Envelope
    phases: tuple = (-np.pi / 2, -np.pi / 2)

    def rwa_ratio(self, spec: TransmonSpec):
        return abs(self.Omega0 * self.envelope.a) / abs(spec.anharmonicity)

    def check_rwa(self, spec: TransmonSpec):
        ratio = self.rwa_ratio(spec)
        if ratio > RWA_WARN:
            warnings.warn(f"RWA ratio {ratio:.3g} exceeds {RWA_WARN}", RuntimeWarning, stacklevel=2)
        return ratio

    def with_duration(self, T):
        return replace(self, envelope=Envelope(T, self.envelope.r))


def rwa_single_hamiltonian(spec: TransmonSpec | None, d: DriveConfig, t):
    """A(t) (Delta0 Lz^2 - (Omega0/sqrt2) Lx) in the chirped drive frame."""
    A = envelope_value(d.envelope, t)
    return A * (d.Delta0 * LZ2 - (d.Omega0 / SQRT2) * LX)


def map_model_to_drive(p: ModelParams, r=0.1, T=1.0):
    """Omega0 = chi t_s^-1, Delta0 = ((kappa+beta)/2) t_s^-1."""
    if p.scale_freq is None:
        raise InvalidArgument("scale_freq must be set to map onto a drive")
    return DriveConfig(p.chi * p.scale_freq, 0.5 * (p.kappa + p.beta) * p.scale_freq, Envelope(T, r))


@dataclass
class PhaseRegister:
    """Running drive-phase offsets (delta phi_1, delta phi_2) of one transmon."""

    dphi: list = field(default_factory=lambda: [0.0, 0.0])
    clock: float = 0.0

    def advance(self, d: DriveConfig):
        B = d.envelope.area(d.envelope.T)
        self.dphi[0] += d.Delta0 * B
        self.dphi[1] -= d.Delta0 * B
        self.clock += d.envelope.T


def lab_frame_hamiltonian(spec: TransmonSpec, d: DriveConfig, t, offsets=(0.0, 0.0), t_start=0.0):
    """Three-level lab-frame Hamiltonian with the two chirped tones.

    ``t`` is measured from the start of the pulse; ``t_start`` is the absolute
    start time used in the carrier, ``offsets`` the carried phase register.
    """
    lam = spec.mus[1]
    A = envelope_value(d.envelope, t)
    B = d.envelope.area(t)
    Om1 = d.Omega0 * A
    Om2 = d.Omega0 * A / lam
    th1 = spec.omega01 * (t + t_start) + offsets[0] + d.Delta0 * B
    th2 = spec.omega12 * (t + t_start) + offsets[1] - d.Delta0 * B
    V = Om1 * np.cos(th1 + d.phases[0]) + Om2 * np.cos(th2 + d.phases[1])
    H = np.diag([0.0, spec.omega01, spec.omega01 + spec.omega12]).astype(complex)
    C = np.zeros((3, 3), dtype=complex)
    C[1, 0] = 1j
    C[2, 1] = 1j * lam
    return H + V * (C + C.conj().T)


def drive_frame_unitary(spec: TransmonSpec, d: DriveConfig, t, offsets=(0.0, 0.0), t_start=0.0):
    """U_D with psi_lab = U_D psi_drive."""
    B = d.envelope.area(t)
    th1 = spec.omega01 * (t + t_start) + offsets[0] + d.Delta0 * B
    th2 = spec.omega12 * (t + t_start) + offsets[1] - d.Delta0 * B
    return np.diag([1.0, np.exp(-1j * th1), np.exp(-1j * (th1 + th2))])


def evolve_drive_frame(d: DriveConfig, psi0, rtol=1e-10, atol=1e-10):
    e = d.envelope
    if e.T == 0:
        return np.asarray(psi0, dtype=complex)
    grid = TimeGrid(0.0, e.T, atol=atol, rtol=rtol)
    return evolve_td(lambda t: rwa_single_hamiltonian(None, d, t), grid, psi0, breakpoints=e.breakpoints)[-1]


def evolve_lab_frame(spec: TransmonSpec, d: DriveConfig, psi0, offsets=(0.0, 0.0), t_start=0.0,
                     rtol=1e-10, atol=1e-12):
    """Lab-frame evolution without the RWA.

    The bare diagonal part is removed exactly (interaction picture), which keeps
    all counter-rotating terms but spares the integrator the carrier phases.
    """
    e = d.envelope
    E = np.array([0.0, spec.omega01, spec.omega01 + spec.omega12])
    H0 = np.diag(E)

    def H_int(t):
        V = lab_frame_hamiltonian(spec, d, t, offsets, t_start) - H0
        ph = np.exp(1j * E * (t + t_start))
        return (ph[:, None] * V) * ph.conj()[None, :]

    grid = TimeGrid(0.0, e.T, atol=atol, rtol=rtol)
    psi_i0 = np.exp(1j * E * t_start) * np.asarray(psi0, dtype=complex)
    psi_i = evolve_td(H_int, grid, psi_i0, breakpoints=e.breakpoints)[-1]
    return np.exp(-1j * E * (e.T + t_start)) * psi_i


# --- pi02 gates ---------------------------------------------------------------

def pi02_drive_generator(T_g=60e-9, amplitudes=None, r=0.25):
    """Envelope and peak drive-frame generator of the resonant two-tone pi02 pulse."""
    env = Envelope(T_g, r)
    if amplitudes is None:
        amp = SQRT2 * np.pi / T_g
        amplitudes = (amp, amp)
    a01, a12 = amplitudes
    G = np.zeros((3, 3), dtype=complex)
    G[0, 1] = G[1, 0] = -a01 / 2
    G[1, 2] = G[2, 1] = -a12 / 2
    return env, G


def pi02_unitary(mode="instantaneous", phases=(1.0, 1.0, 1.0), T_g=60e-9, amplitudes=None, r=0.25,
                 detuning=0.0, min_fidelity=0.99):
    """0<->2 transposition.

    instantaneous: exact permutation with unit-modulus ``phases``.
    multitone: resonant two-tone pulse of duration ``T_g`` in the drive frame;
    returns (U, fidelity) and raises CalibrationError below ``min_fidelity``.
    ``amplitudes`` are the peak (Omega_01, lambda*Omega_12) rates; the calibrated
    default gives a pi rotation of the spin-1 about x.
    """
    if mode == "instantaneous":
        ph = np.asarray(phases, dtype=complex)
        if np.max(np.abs(np.abs(ph) - 1)) > 1e-12:
            raise InvalidArgument("pi02 phases must have unit modulus")
        return PI02 @ np.diag(ph)
    if mode != "multitone":
        raise InvalidArgument(f"unknown pi02 mode {mode!r}")
    env, G = pi02_drive_generator(T_g, amplitudes, r)
    Hd = detuning * LZ2

    def H(t):
        return envelope_value(env, t) * G + Hd

    U = propagator_td(H, TimeGrid(0.0, T_g, atol=1e-12, rtol=1e-12), breakpoints=env.breakpoints)
    fid = float(np.mean(np.abs(np.diag(PI02.T @ U)) ** 2))
    if fid < min_fidelity:
        raise CalibrationError(f"pi02 multitone fidelity {fid:.4f} below {min_fidelity}")
    return U, fid


# --- single-qutrit analog experiment -------------------------------------------

def run_single_analog(spec: TransmonSpec | None, p: ModelParams, psi0, durations, r=0.1):
    """Integrate the shaped drive-frame Hamiltonian for each pulse length.

    ``durations`` are model times; physical length is T_model / t_s^-1.
    """
    if p.scale_freq is None:
        raise InvalidArgument("scale_freq required")
    base = map_model_to_drive(p, r=r)
    if spec is not None:
        base.check_rwa(spec)
    psi0 = np.asarray(psi0, dtype=complex)
    lz, lz2 = [], []
    probs = np.array([1.0, 0.0, -1.0])
    for tm in durations:
        T = float(tm) / p.scale_freq
        try:
            psi = evolve_drive_frame(base.with_duration(T), psi0)
        except NumericalError:
            raise
        except Exception as exc:  # integrator internals
            raise NumericalError(str(exc)) from exc
        pops = np.abs(psi) ** 2
        lz.append(pops @ probs)
        lz2.append(pops @ probs**2)
    tm = np.asarray(durations, dtype=float)
    return {"t_model": tm, "t_phys": tm / p.scale_freq, "lz": np.array(lz), "lz2": np.array(lz2)}


def pulse_schedule_table(spec: TransmonSpec, d: DriveConfig, n_samples=101, offsets=(0.0, 0.0)):
    """Sampled rows (t, Omega_1, Omega_2, dphi_1, dphi_2)."""
    lam = spec.mus[1]
    rows = []
    for t in np.linspace(0.0, d.envelope.T, n_samples):
        A = envelope_value(d.envelope, t)
        B = phase_ramp(d.envelope, d.Delta0, t)
        rows.append((t, d.Omega0 * A, d.Omega0 * A / lam, offsets[0] + B, offsets[1] - B))
    return rows


def single_site_reference(p: ModelParams, psi0, times):
    """Exact single-site evolution used as the analog oracle."""
    H = single_site_hamiltonian(p)
    out = []
    for t in times:
        psi = unitary_exp(H, t) @ psi0
        out.append(np.abs(psi) ** 2 @ np.array([1.0, 0.0, -1.0]))
    return np.array(out)
