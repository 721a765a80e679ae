"""Cross-Kerr rates of coupled transmons, basis conversions, JAZZ and Stark calibration."""
from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np
from scipy.optimize import curve_fit

from .circuits import rotation, subspace_generator
from .errors import AdiabaticityError, BracketError, DegeneracyError, FitError, InvalidArgument, LabelingError
from .model import LZ, LZ2, PI02
from .pulse import TransmonSpec
from .tensor import TimeGrid, kron_all, propagator_td, unitary_exp

TWO_PI = 2 * np.pi
DEGENERACY_THRESHOLD = TWO_PI * 1e6

# z = ZETA_TO_Z @ zeta, ordering (z11, z12, z21, z22) and (zeta00, zeta02, zeta20, zeta22)
ZETA_TO_Z = 0.25 * np.array([[1, -1, -1, 1], [1, 1, -1, -1], [1, -1, 1, -1], [1, 1, 1, 1]], dtype=float)
Z_TO_ZETA = 4.0 * ZETA_TO_Z.T


def alpha_to_zeta(a):
    a11, a12, a21, a22 = a
    return np.array([a11, a11 - a12, a11 - a21, (a22 - a21) - (a12 - a11)])


def zeta_to_alpha(zt):
    z00, z02, z20, z22 = zt
    return np.array([z00, z00 - z02, z00 - z20, z22 + z00 - z20 - z02])


@dataclass(frozen=True)
class InteractionRates:
    """Diagonal two-body interaction, stored in the alpha basis (rad/s)."""

    alpha: np.ndarray

    @classmethod
    def from_alpha(cls, a):
        return cls(np.asarray(a, dtype=float).copy())

    @classmethod
    def from_zeta(cls, zt):
        return cls(zeta_to_alpha(np.asarray(zt, dtype=float)))

    @classmethod
    def from_z(cls, z):
        return cls.from_zeta(Z_TO_ZETA @ np.asarray(z, dtype=float))

    @property
    def zeta(self):
        return alpha_to_zeta(self.alpha)

    @property
    def z(self):
        return ZETA_TO_Z @ self.zeta

    def as_dict(self, unit=TWO_PI * 1e3):
        names = {"alpha": ("11", "12", "21", "22"), "zeta": ("00", "02", "20", "22"), "z": ("11", "12", "21", "22")}
        out = {}
        for basis, keys in names.items():
            vals = getattr(self, basis) / unit
            out[basis] = {k: float(v) for k, v in zip(keys, vals)}
        return out


def h_ck_from_z(z):
    """sum_{i,j in {1,2}} z_ij Lz^i (x) Lz^j."""
    z11, z12, z21, z22 = z
    return z11 * np.kron(LZ, LZ) + z12 * np.kron(LZ, LZ2) + z21 * np.kron(LZ2, LZ) + z22 * np.kron(LZ2, LZ2)


def h_ck_from_zeta(zt):
    H = np.zeros((9, 9), dtype=complex)
    for val, (a, b) in zip(zt, [(0, 0), (0, 2), (2, 0), (2, 2)]):
        H[3 * a + b, 3 * a + b] = val
    return H


def dd_average(H):
    """Average of H and its conjugate by pi02 (x) pi02."""
    U = np.kron(PI02, PI02)
    return 0.5 * (H + U @ H @ U.conj().T)


# --- device specs ----------------------------------------------------------------

@dataclass(frozen=True)
class TransmonPairSpec:
    specA: TransmonSpec
    specB: TransmonSpec
    J: float

    def dispersive_ratio(self):
        return abs(self.J) / abs(self.specA.omega01 - self.specB.omega01)

    def with_J(self, J):
        return TransmonPairSpec(self.specA, self.specB, J)


@dataclass(frozen=True)
class StarkConfig:
    omega_S: float
    OmegaS0_A: float
    OmegaS0_B: float
    dphi: float = 0.0

    def with_amplitude(self, amp):
        return StarkConfig(self.omega_S, amp, amp, self.dphi)


def _need_four_levels(spec):
    if spec.omega23 is None:
        raise InvalidArgument("cross-Kerr rates need the 2-3 transition frequency")


def _guard(x, label):
    if abs(x) < DEGENERACY_THRESHOLD:
        raise DegeneracyError(f"near-degenerate denominator {label}: {x / TWO_PI / 1e6:.3f} MHz")
    return x


def bare_rates_pt(pair: TransmonPairSpec):
    """Second-order alpha rates."""
    A, B = pair.specA, pair.specB
    _need_four_levels(A)
    _need_four_levels(B)
    a1, a2, a3 = A.transitions
    b1, b2, b3 = B.transitions
    mA = A.mus**2
    mB = B.mus**2
    J2 = pair.J**2

    def den(x, y, lab):
        return _guard(x - y, lab)

    a11 = J2 * (mA[0] * mB[1] / den(a1, b2, "wA01-wB12") - mA[1] * mB[0] / den(a2, b1, "wA12-wB01"))
    a12 = -J2 * (mA[1] * mB[1] / den(a2, b2, "wA12-wB12")
                 + mA[0] * (mB[0] / den(a1, b1, "wA01-wB01") - mB[1] / den(a1, b2, "wA01-wB12")
                            - mB[2] / den(a1, b3, "wA01-wB23")))
    a21 = J2 * (mA[1] * mB[1] / den(a2, b2, "wA12-wB12")
                + mB[0] * (mA[0] / den(a1, b1, "wA01-wB01") - mA[1] / den(a2, b1, "wA12-wB01")
                           - mA[2] / den(a3, b1, "wA23-wB01")))
    a22 = -J2 * (mA[1] * (mB[0] / den(a2, b1, "wA12-wB01") - mB[2] / den(a2, b3, "wA12-wB23"))
                 - mB[1] * (mA[0] / den(a1, b2, "wA01-wB12") - mA[2] / den(a3, b2, "wA23-wB12")))
    return InteractionRates.from_alpha([a11, a12, a21, a22])


def _ladder(spec: TransmonSpec, levels=4):
    a = np.zeros((levels, levels), dtype=complex)
    mus = spec.mus
    for n in range(1, levels):
        a[n - 1, n] = mus[n - 1]
    return a


def _energies(spec: TransmonSpec, levels=4):
    w = spec.transitions
    if len(w) < levels - 1:
        raise InvalidArgument("not enough transition frequencies for requested levels")
    return np.concatenate([[0.0], np.cumsum(w[: levels - 1])])


@dataclass(frozen=True)
class TransmonChain:
    """Linear chain of transmons with nearest-neighbour couplings."""

    specs: tuple
    J: tuple

    def __post_init__(self):
        if len(self.J) != len(self.specs) - 1:
            raise InvalidArgument("need one coupling per neighbouring pair")

    @classmethod
    def from_pair(cls, pair: TransmonPairSpec):
        return cls((pair.specA, pair.specB), (pair.J,))


def chain_hamiltonian(chain: TransmonChain, omega_S=None, drives=None, levels=4):
    """Coupled-transmon Hamiltonian, optionally in the frame of a Stark tone.

    ``drives`` are complex Stark amplitudes Omega_k e^{i phi_k} per transmon.
    """
    n = len(chain.specs)
    eye = np.eye(levels)
    ops = []
    H = 0
    for k, s in enumerate(chain.specs):
        E = _energies(s, levels)
        if omega_S is not None:
            E = E - np.arange(levels) * omega_S
        local = np.diag(E).astype(complex)
        if drives is not None and drives[k] != 0:
            a = _ladder(s, levels)
            term = 0.5j * np.conj(drives[k]) * a.conj().T
            local = local + term + term.conj().T
        H = H + kron_all([local if j == k else eye for j in range(n)])
        ops.append(kron_all([_ladder(s, levels) if j == k else eye for j in range(n)]))
    for k, J in enumerate(chain.J):
        hop = ops[k] @ ops[k + 1].conj().T
        H = H + J * (hop + hop.conj().T)
    return H


def _computational_indices(n, levels=4, d=3):
    labels = list(itertools.product(range(d), repeat=n))
    idx = [sum(l * levels ** (n - 1 - k) for k, l in enumerate(lab)) for lab in labels]
    return labels, np.array(idx)


def labeled_eigensystem(H, n, levels=4, d=3, min_overlap=0.5):
    """Eigenpairs assigned to bare computational labels by maximum overlap."""
    w, v = np.linalg.eigh(H)
    labels, idx = _computational_indices(n, levels, d)
    ov = np.abs(v[idx, :]) ** 2
    cols = np.argmax(ov, axis=1)
    best = ov[np.arange(len(idx)), cols]
    if np.any(best < min_overlap) or len(set(cols)) != len(cols):
        bad = labels[int(np.argmin(best))]
        raise LabelingError(f"ambiguous eigenstate assignment for |{''.join(map(str, bad))}> "
                            f"(overlap {best.min():.3f})")
    return labels, w[cols], v[:, cols]


def labeled_energies(H, n, levels=4, d=3, min_overlap=0.5):
    labels, w, _ = labeled_eigensystem(H, n, levels, d, min_overlap)
    return dict(zip(labels, w))


def alpha_from_energies(E):
    return np.array([(E[(i, j)] - E[(i, 0)]) - (E[(0, j)] - E[(0, 0)]) for i in (1, 2) for j in (1, 2)])


def bare_rates_numeric(pair: TransmonPairSpec, levels=4):
    chain = TransmonChain.from_pair(pair)
    E = labeled_energies(chain_hamiltonian(chain, levels=levels), 2, levels)
    return InteractionRates.from_alpha(alpha_from_energies(E))


def stark_shifts(spec: TransmonSpec, omega_S, Omega):
    """AC-Stark shifts of the 0-1 and 1-2 transitions (three-term formula, mu_0 = 0)."""
    mus = np.concatenate([[0.0], spec.mus])  # mu_0..mu_3
    det = np.concatenate([[np.inf], spec.transitions - omega_S])  # Delta_0 unused
    out = []
    for i in (1, 2):
        s = 0.0
        if i - 1 >= 1:
            s += -0.25 * mus[i - 1] ** 2 * Omega**2 / _guard(det[i - 1], f"Delta_{i - 1}")
        s += 0.5 * mus[i] ** 2 * Omega**2 / _guard(det[i], f"Delta_{i}")
        s += -0.25 * mus[i + 1] ** 2 * Omega**2 / _guard(det[i + 1], f"Delta_{i + 1}")
        out.append(s)
    return np.array(out)


def driven_rates_pt(pair: TransmonPairSpec, stark: StarkConfig):
    """Third-order Stark-driven alpha rates plus the per-transmon AC-Stark shifts."""
    A, B = pair.specA, pair.specB
    bare = bare_rates_pt(pair)
    mA, mB = A.mus**2, B.mus**2
    DA = np.array([_guard(x, f"Delta^A_{i + 1}") for i, x in enumerate(A.transitions - stark.omega_S)])
    DB = np.array([_guard(x, f"Delta^B_{i + 1}") for i, x in enumerate(B.transitions - stark.omega_S)])
    P = pair.J * stark.OmegaS0_A * stark.OmegaS0_B * np.cos(stark.dphi)
    SA = mA[0] / DA[0] + mA[1] / DA[1] - mA[2] / DA[2]
    SB = mB[0] / DB[0] + mB[1] / DB[1] - mB[2] / DB[2]
    kB = 2 * mB[0] / DB[0] - mB[1] / DB[1]
    d11 = P * (mA[0] / DA[0] * kB - mA[1] / (2 * DA[1]) * kB)
    d12 = P * (mA[0] / DA[0] - mA[1] / (2 * DA[1])) * SB
    d21 = P * (mB[0] / DB[0] - mB[1] / (2 * DB[1])) * SA
    d22 = P * (mA[0] / (2 * DA[0]) + mA[1] / (2 * DA[1]) - mA[2] / (2 * DA[2])) * SB
    rates = InteractionRates.from_alpha(bare.alpha + np.array([d11, d12, d21, d22]))
    shifts = {"A": stark_shifts(A, stark.omega_S, stark.OmegaS0_A),
              "B": stark_shifts(B, stark.omega_S, stark.OmegaS0_B)}
    return rates, shifts


# --- numeric Stark-driven rates ------------------------------------------------------

def z_basis_labels(n):
    return list(itertools.product(range(3), repeat=n))


def fit_z_coefficients(E, n):
    """Solve E(labels) = sum_p z_p prod_k m_k^{p_k} for the 3^n coefficients."""
    labels = z_basis_labels(n)
    powers = z_basis_labels(n)
    m = {0: 1.0, 1: 0.0, 2: -1.0}
    M = np.array([[np.prod([m[l] ** p for l, p in zip(lab, pw)]) for pw in powers] for lab in labels])
    y = np.array([E[lab] for lab in labels])
    coef, *_ = np.linalg.lstsq(M, y, rcond=None)
    return dict(zip(powers, coef))


def driven_rates_numeric(chain, drives, omega_S, ramp=200e-9, holds=None, levels=4, min_population=0.99):
    """Dressed diagonal energies from simulated phase accumulation.

    Every dressed computational state of the undriven chain is carried through a sin^2 amplitude ramp,
    a hold of variable length and the reverse ramp. The accumulated phase per
    unit hold time gives its Stark-frame energy; the energies are then expanded
    in products of Lz powers. Returns the dict of z coefficients keyed by the
    power tuple, e.g. (1, 1) for z11 or (1, 1, 0) for z110.
    """
    if isinstance(chain, TransmonPairSpec):
        chain = TransmonChain.from_pair(chain)
    n = len(chain.specs)
    drives = np.asarray(drives, dtype=complex)
    if holds is None:
        holds = np.arange(0, 21) * 10e-9
    H_hold = chain_hamiltonian(chain, omega_S, drives, levels)
    H_bare = chain_hamiltonian(chain, omega_S, None, levels)
    H_drive = H_hold - H_bare
    labels, ref, vecs = labeled_eigensystem(H_bare, n, levels)
    if np.all(drives == 0):
        U_up = U_dn = np.eye(levels**n, dtype=complex)
    else:
        def up(t):
            return H_bare + np.sin(np.pi * t / (2 * ramp)) ** 2 * H_drive

        def dn(t):
            return H_bare + np.cos(np.pi * t / (2 * ramp)) ** 2 * H_drive

        grid = TimeGrid(0.0, ramp, atol=1e-11, rtol=1e-11)
        U_up = propagator_td(up, grid)
        U_dn = propagator_td(dn, grid)
    w, v = np.linalg.eigh(H_hold)
    phases = []
    for T in holds:
        U = U_dn @ (v * np.exp(-1j * w * T)) @ v.conj().T @ U_up
        amp = np.einsum("ik,ij,jk->k", vecs.conj(), U, vecs)
        pops = np.abs(amp) ** 2
        if np.any(pops < min_population):
            k = int(np.argmin(pops))
            raise AdiabaticityError(f"population of |{''.join(map(str, labels[k]))}> dropped to {pops[k]:.4f}")
        phases.append(np.angle(amp * np.exp(1j * ref * T)))
    phases = np.unwrap(np.array(phases), axis=0)
    holds = np.asarray(holds)
    Hm = np.vstack([holds, np.ones_like(holds)]).T
    slope, *_ = np.linalg.lstsq(Hm, phases, rcond=None)
    E = {lab: ref[k] - slope[0][k] for k, lab in enumerate(labels)}
    return fit_z_coefficients(E, n)


@dataclass(frozen=True)
class StarkTone:
    """One Stark tone: frequency and complex amplitude Omega e^{i phi} on each transmon."""

    omega: float
    amplitudes: tuple


def _tone_period(tones):
    freqs = sorted({t.omega for t in tones})
    if len(freqs) > 2:
        raise InvalidArgument("at most two distinct Stark frequencies are supported")
    if len(freqs) == 1:
        return None
    return TWO_PI / (freqs[1] - freqs[0])


def _chain_parts(chain, tones, levels):
    """Static part, coupling terms and drive terms of the chain in per-transmon tone frames.

    Each transmon rotates at the first tone that drives it. Time-dependent
    pieces are returned as (V, nu) meaning V e^{-i nu t} + h.c.
    """
    n = len(chain.specs)
    eye = np.eye(levels)
    frames = []
    for k in range(n):
        f = next((t.omega for t in tones if abs(t.amplitudes[k]) > 0), tones[0].omega)
        frames.append(f)
    lad = [kron_all([_ladder(s, levels) if j == k else eye for j in range(n)]) for k, s in enumerate(chain.specs)]
    H0 = 0
    for k, s in enumerate(chain.specs):
        E = _energies(s, levels) - np.arange(levels) * frames[k]
        H0 = H0 + kron_all([np.diag(E).astype(complex) if j == k else eye for j in range(n)])
    couplings, drives = [], []
    for k, J in enumerate(chain.J):
        couplings.append((J * lad[k] @ lad[k + 1].conj().T, frames[k] - frames[k + 1]))
    for t in tones:
        for k, amp in enumerate(t.amplitudes):
            if amp != 0:
                drives.append((0.5j * np.conj(amp) * lad[k].conj().T, t.omega - frames[k]))
    return H0, couplings, drives, np.array(frames)


def _assemble(H0, terms, t, scale=1.0):
    H = H0.copy()
    for V, nu in terms:
        X = scale * V * np.exp(-1j * nu * t)
        H += X + X.conj().T
    return H


def _number_operator(chain, frames, levels):
    n = len(chain.specs)
    N = np.zeros(levels**n)
    for k in range(n):
        occ = np.arange(levels)
        N = N + frames[k] * kron_all([np.diag(occ) if j == k else np.eye(levels) for j in range(n)]).diagonal()
    return N


def _driven_energies_periodic(chain, tones, ramp, n_hold, levels, min_population):
    period = _tone_period(tones)
    H0, couplings, drives, frames = _chain_parts(chain, tones, levels)
    n = len(chain.specs)
    H_lab = chain_hamiltonian(chain, None, None, levels)
    labels, ref, vecs = labeled_eigensystem(H_lab, n, levels)
    F = _number_operator(chain, frames, levels)

    def up(t):
        return _assemble(_assemble(H0, couplings, t), drives, t, np.sin(np.pi * t / (2 * ramp)) ** 2)

    def hold(t):
        return _assemble(_assemble(H0, couplings, t), drives, t)

    grid = TimeGrid(0.0, ramp, atol=1e-11, rtol=1e-11)
    U_up = propagator_td(up, grid)
    U_F = propagator_td(hold, TimeGrid(ramp, ramp + period, atol=1e-11, rtol=1e-11))

    def dn(t):
        # hold lengths are whole periods, so the ramp-down sees the same drive phase
        tau = t - ramp - period
        return _assemble(_assemble(H0, couplings, t), drives, t, np.cos(np.pi * tau / (2 * ramp)) ** 2)

    U_dn = propagator_td(dn, TimeGrid(ramp + period, 2 * ramp + period, atol=1e-11, rtol=1e-11))
    # frame -> lab at time t: e^{-i F t}; the state starts in the lab frame at t = 0
    amps, holds = [], []
    U_m = np.eye(U_F.shape[0], dtype=complex)
    for m in range(n_hold + 1):
        T = m * period
        total = 2 * ramp + period + T
        # U_dn was built for a single-period offset; the shift by whole periods leaves it unchanged
        U = np.exp(-1j * F * total)[:, None] * (U_dn @ U_F @ U_m @ U_up)
        amps.append(np.einsum("ik,ij,jk->k", vecs.conj(), U, vecs))
        holds.append(T)
        U_m = U_F @ U_m
    amps = np.array(amps)
    pops = np.abs(amps) ** 2
    if np.any(pops < min_population):
        m, k = np.unravel_index(np.argmin(pops), pops.shape)
        raise AdiabaticityError(f"population of |{''.join(map(str, labels[k]))}> dropped to {pops[m, k]:.4f}")
    holds = np.array(holds)
    return labels, ref, holds, amps


def driven_rates_multitone(chain, tones, ramp=200e-9, hold_time=200e-9, levels=4, min_population=0.99):
    """Dressed diagonal rates under one or two Stark tones.

    With two distinct frequencies the rotating-frame Hamiltonian is periodic
    and holds are taken in whole periods of the tone beat. Energies are
    lab-frame energies; only local (single-transmon) coefficients depend on
    this choice.
    """
    if isinstance(chain, TransmonPairSpec):
        chain = TransmonChain.from_pair(chain)
    tones = list(tones)
    period = _tone_period(tones)
    if period is None:
        t = tones[0]
        return driven_rates_numeric(chain, t.amplitudes, t.omega, ramp=ramp, levels=levels,
                                    min_population=min_population)
    n_hold = max(8, int(np.ceil(hold_time / period)))
    labels, ref, holds, amps = _driven_energies_periodic(chain, tones, ramp, n_hold, levels, min_population)
    phases = np.unwrap(np.angle(amps * np.exp(1j * np.outer(holds, ref))), axis=0)
    Hm = np.vstack([holds, np.ones_like(holds)]).T
    slope, *_ = np.linalg.lstsq(Hm, phases, rcond=None)
    E = {lab: ref[k] - slope[0][k] for k, lab in enumerate(labels)}
    return fit_z_coefficients(E, len(chain.specs))


def rates_from_zdict(zd):
    return InteractionRates.from_z([zd[(1, 1)], zd[(1, 2)], zd[(2, 1)], zd[(2, 2)]])


def stark_drives(stark: StarkConfig):
    return np.array([stark.OmegaS0_A, stark.OmegaS0_B * np.exp(1j * stark.dphi)])


# --- JAZZ ------------------------------------------------------------------------------

def _decaying_cosine(t, A, g, w, ph, c):
    return A * np.exp(-g * t) * np.cos(w * t + ph) + c


def fit_decaying_cosine(t, y, max_rel_residual=1e-2):
    """Fit A e^{-t/tau} cos(w t + phi) + c; returns dict with w (rad/s) and tau."""
    t = np.asarray(t, dtype=float)
    y = np.asarray(y, dtype=float)
    if len(t) < 6:
        raise FitError("too few points for a cosine fit")
    dt = np.median(np.diff(t))
    c0 = y.mean()
    yc = y - c0
    nfft = 16 * len(t)
    spec = np.abs(np.fft.rfft(yc, nfft))
    freqs = np.fft.rfftfreq(nfft, dt) * TWO_PI
    k = int(np.argmax(spec[1:]) + 1)
    w0 = freqs[k]
    A0 = np.sqrt(2) * yc.std()
    # decay seed from the log of a crude envelope
    env = np.abs(yc) + 1e-12
    half = len(t) // 2
    g0 = max(0.0, np.log(env[:half].max() / env[half:].max()) / (t[-1] - t[0]) * 2) if half > 1 else 0.0
    ph0 = np.angle(np.sum(yc * np.exp(-1j * w0 * t)))
    try:
        popt, pcov = curve_fit(_decaying_cosine, t, y, p0=[A0, g0, w0, ph0, c0],
                               bounds=([0, 0, 0, -np.inf, -np.inf], [np.inf, np.inf, np.inf, np.inf, np.inf]),
                               maxfev=20000, x_scale="jac")
    except (RuntimeError, ValueError) as exc:
        raise FitError(f"decaying-cosine fit failed: {exc}") from exc
    resid = y - _decaying_cosine(t, *popt)
    rel = np.sqrt(np.mean(resid**2)) / max(popt[0], 1e-15)
    if rel > max_rel_residual:
        raise FitError(f"fit residual {rel:.3g} above threshold")
    err = np.sqrt(np.abs(np.diag(pcov))) if pcov is not None else np.full(5, np.nan)
    return {"A": popt[0], "tau": np.inf if popt[1] == 0 else 1 / popt[1], "w": popt[2],
            "phi": popt[3], "c": popt[4], "w_err": err[2], "residual": rel}


def _phased_rotation(subspace, angle, phase):
    s = np.cos(phase) * subspace_generator("x", subspace) + np.sin(phase) * subspace_generator("y", subspace)
    return unitary_exp(0.5 * angle * s, 1.0)


def _jazz_signal(H, target, T, branch_phase):
    i, j = target
    sA = "01" if i == 0 else "12"
    sB = "01" if j == 0 else "12"
    psi = np.zeros(9, dtype=complex)
    psi[3 * i + j] = 1.0
    diag = np.diag(H).real
    half = np.kron(_phased_rotation(sA, np.pi / 2, 0.0), np.eye(3))
    flip = np.kron(rotation("x", sA, np.pi), rotation("x", sB, np.pi))
    psi = half @ psi
    psi = np.exp(-1j * diag * T) * psi
    psi = flip @ psi
    psi = np.exp(-1j * diag * T) * psi
    psi = np.kron(_phased_rotation(sA, np.pi / 2, branch_phase), np.eye(3)) @ psi
    p = np.abs(psi.reshape(3, 3)) ** 2
    return p[i].sum()


def simulate_jazz(rates, target, delta_art, T_list, tau=None):
    """Two-period echo (JAZZ-type) sequence for zeta_ij, i, j in {0, 2}.

    Returns the fitted branch frequencies and the signed zeta estimate.
    """
    if tuple(target) not in [(0, 0), (0, 2), (2, 0), (2, 2)]:
        raise InvalidArgument("target must be one of (0,0), (0,2), (2,0), (2,2)")
    zt = rates.zeta if isinstance(rates, InteractionRates) else np.asarray(rates)
    H = h_ck_from_zeta(zt)
    T_list = np.asarray(T_list, dtype=float)
    fits = {}
    for name, sgn in (("plus", 1.0), ("minus", -1.0)):
        y = np.array([_jazz_signal(H, target, T, -sgn * delta_art * T) for T in T_list])
        if tau is not None:
            y = 0.5 + (y - 0.5) * np.exp(-T_list / tau)
        fits[name] = fit_decaying_cosine(T_list, y)
    wp, wm = fits["plus"]["w"], fits["minus"]["w"]
    zeta = 0.5 * (wm - wp) if target[0] == 0 else 0.5 * (wp - wm)
    err = 0.5 * np.hypot(fits["plus"]["w_err"], fits["minus"]["w_err"])
    return {"zeta": zeta, "zeta_err": err, "omega_plus": wp, "omega_minus": wm, "fits": fits}


def jazz_frequencies(zeta, delta_art, i):
    """Expected (omega_plus, omega_minus) of the two branches."""
    if i == 0:
        return abs(delta_art - zeta), abs(-delta_art - zeta)
    return abs(delta_art + zeta), abs(-delta_art + zeta)


# eight evolution periods: (A coherence pair (p, q), B level)
_TOTAL_JAZZ_PERIODS = [((1, 0), 0), ((0, 1), 1), ((1, 0), 2), ((0, 1), 1),
                       ((2, 1), 1), ((1, 2), 0), ((2, 1), 1), ((1, 2), 2)]


def _perm_unitary(src, dst):
    """Unitary sending |src_k> -> |dst_k| (a permutation of levels)."""
    P = np.zeros((3, 3), dtype=complex)
    for a, b in zip(src, dst):
        P[b, a] = 1.0
    return P


def _total_jazz_signal(H, T, phase):
    diag = np.diag(H).real
    # A starts in (|1> + |0>)/sqrt2 built by a pi/2 on the 0-1 subspace from |1>; B in |0>
    psi = np.zeros(9, dtype=complex)
    psi[3 * 1 + 0] = 1.0
    psi = np.kron(_phased_rotation("01", np.pi / 2, 0.0), np.eye(3)) @ psi
    prev = _TOTAL_JAZZ_PERIODS[0]
    for k, (pq, b) in enumerate(_TOTAL_JAZZ_PERIODS):
        if k > 0:
            (p0, q0), b0 = prev
            rest_a = ({0, 1, 2} - {p0, q0}).pop()
            ua = _perm_unitary((p0, q0, rest_a), (pq[0], pq[1], ({0, 1, 2} - set(pq)).pop()))
            others = [x for x in range(3) if x != b0]
            ub = _perm_unitary((b0, *others), (b, *[x for x in range(3) if x != b]))
            psi = np.kron(ua, ub) @ psi
            prev = (pq, b)
        psi = np.exp(-1j * diag * T) * psi
    # final analysis pulse in the 1-2 subspace with phase
    psi = np.kron(_phased_rotation("12", np.pi / 2, phase), np.eye(3)) @ psi
    p = np.abs(psi.reshape(3, 3)) ** 2
    return p[1].sum()


def simulate_total_jazz(rates, delta_art, T_list, tau=None):
    """Eight-period sequence oscillating at delta_art + (zeta00+zeta02+zeta20+zeta22)."""
    zt = rates.zeta if isinstance(rates, InteractionRates) else np.asarray(rates)
    H = h_ck_from_zeta(zt)
    T_list = np.asarray(T_list, dtype=float)
    y = np.array([_total_jazz_signal(H, T, delta_art * T) for T in T_list])
    if tau is not None:
        y = 0.5 + (y - 0.5) * np.exp(-T_list / tau)
    fit = fit_decaying_cosine(T_list, y)
    z22 = (fit["w"] - delta_art) / 4
    return {"z22": z22, "z22_err": fit["w_err"] / 4, "omega": fit["w"], "fit": fit}


# --- Stark amplitude calibration ------------------------------------------------------

@dataclass(frozen=True)
class StarkCalibration:
    amplitude: float
    residual_z22: float
    coeffs: tuple
    grid: tuple
    values: tuple

    def as_dict(self):
        u = TWO_PI * 1e6
        return {"OmegaS0_MHz": self.amplitude / u, "residual_z22_kHz": self.residual_z22 / (TWO_PI * 1e3),
                "quadratic_coeffs": list(self.coeffs), "grid_MHz": [g / u for g in self.grid],
                "z22_kHz": [v / (TWO_PI * 1e3) for v in self.values]}


def calibrate_stark_amplitude(pair=None, omega_S=None, grid=None, dphi=0.0, z22_fn=None):
    """Amplitude that nulls z22 from a quadratic fit over ``grid``.

    ``z22_fn(amplitude)`` overrides the default perturbative model.
    """
    grid = np.asarray(grid, dtype=float)
    if z22_fn is None:
        def z22_fn(amp):
            return driven_rates_pt(pair, StarkConfig(omega_S, amp, amp, dphi))[0].z[3]
    vals = np.array([z22_fn(a) for a in grid])
    sign_change = np.nonzero(np.sign(vals[:-1]) * np.sign(vals[1:]) <= 0)[0]
    if sign_change.size == 0:
        raise BracketError("z22 does not change sign over the amplitude grid")
    lo, hi = grid[sign_change[0]], grid[sign_change[0] + 1]
    scale = np.max(np.abs(grid))
    c2, c1, c0 = np.polyfit(grid / scale, vals, 2)
    disc = c1**2 - 4 * c2 * c0
    if disc < 0:
        raise FitError("quadratic fit of z22 has complex roots")
    if c2 == 0:
        roots = np.array([-c0 / c1])
    else:
        roots = np.array([(-c1 + np.sqrt(disc)) / (2 * c2), (-c1 - np.sqrt(disc)) / (2 * c2)])
    roots = roots * scale
    inside = [r for r in roots if lo - 1e-12 * scale <= r <= hi + 1e-12 * scale]
    if not inside:
        raise FitError("no quadratic root inside the bracketing interval")
    root = float(inside[0])
    return StarkCalibration(root, float(z22_fn(root)), (float(c0), float(c1), float(c2)),
                            tuple(grid), tuple(vals))


def device_pair(J=None):
    from .pulse import DEVICE_STARK, device_transmon

    return TransmonPairSpec(device_transmon("QA"), device_transmon("QB"),
                            DEVICE_STARK["J"] if J is None else J)
