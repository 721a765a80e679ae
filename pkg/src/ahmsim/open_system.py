"""Lindblad evolution of qutrit registers and the pi02-averaged Liouvillian."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import solve_ivp
from scipy.linalg import expm

from .errors import ConfigError, InvalidArgument, NumericalError
from .model import PI02
from .pulse import TransmonSpec
from .tensor import embed_local, kron_all

SUPEROP_MAX_DIM = 9
POSITIVITY_TOL = 1e-6


@dataclass(frozen=True)
class LindbladSpec:
    ops: tuple
    rates: tuple
    labels: tuple = ()
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if len(self.ops) != len(self.rates):
            raise InvalidArgument("one rate per jump operator")
        if any(g < 0 for g in self.rates):
            raise ConfigError("negative Lindblad rate")
        dims = {np.shape(L) for L in self.ops}
        if len(dims) > 1:
            raise InvalidArgument("jump operators must share one dimension")

    @property
    def dim(self):
        return np.shape(self.ops[0])[0] if self.ops else None

    def embed(self, site, n_sites):
        ops = tuple(embed_local(L, site, n_sites) for L in self.ops)
        labels = tuple(f"{lab}@{site}" for lab in self.labels) if self.labels else ()
        return LindbladSpec(ops, self.rates, labels, dict(self.meta))

    def conjugated(self, U):
        """Jump operators U^dag L U (toggling frame of a gate U)."""
        Ud = U.conj().T
        return LindbladSpec(tuple(Ud @ L @ U for L in self.ops), self.rates, self.labels, dict(self.meta))

    def __add__(self, other):
        return LindbladSpec(self.ops + other.ops, self.rates + other.rates, self.labels + other.labels,
                            {**self.meta, **other.meta})


def _ket_bra(i, j, d=3):
    M = np.zeros((d, d), dtype=complex)
    M[i, j] = 1.0
    return M


def _inv(t):
    return 0.0 if t is None or np.isinf(t) else 1.0 / t


def jump_ops_from_coherence(spec: TransmonSpec, drop_zero=True):
    """Relaxation and pure-dephasing channels of one transmon qutrit.

    L10 = |0><1| (1/T1_01), L21 = |1><2| (1/T1_12),
    L11 = |1><1| (1/T2_01 - 1/(2 T1_01)), L22 = |2><2| (1/T2_12 - 1/(2 T1_12)).
    Missing or infinite times contribute zero rate.
    """
    g10 = _inv(spec.T1_01)
    g21 = _inv(spec.T1_12)
    g11 = _inv(spec.T2_01) - 0.5 * g10
    g22 = _inv(spec.T2_12) - 0.5 * g21
    for g, pair in ((g11, "T2_01/T1_01"), (g22, "T2_12/T1_12")):
        if g < -1e-12 * max(g10, g21, 1.0):
            raise ConfigError(f"negative pure-dephasing rate from {pair} (T2 > 2 T1)")
    entries = [("L10", _ket_bra(0, 1), g10), ("L21", _ket_bra(1, 2), g21),
               ("L11", _ket_bra(1, 1), max(g11, 0.0)), ("L22", _ket_bra(2, 2), max(g22, 0.0))]
    if drop_zero:
        entries = [e for e in entries if e[2] > 0]
    return LindbladSpec(tuple(e[1] for e in entries), tuple(e[2] for e in entries),
                        tuple(e[0] for e in entries), {"t2_kind": spec.t2_kind})


def register_spec(specs):
    """Per-site channels of a qutrit register built from TransmonSpecs (or LindbladSpecs)."""
    n = len(specs)
    total = LindbladSpec((), ())
    for k, s in enumerate(specs):
        ls = s if isinstance(s, LindbladSpec) else jump_ops_from_coherence(s)
        total = total + ls.embed(k, n)
    return total


# --- superoperators (column stacking: vec(A X B) = (B^T kron A) vec X) --------------------

def vec(rho):
    return np.asarray(rho).reshape(-1, order="F")


def unvec(v, d):
    return np.asarray(v).reshape((d, d), order="F")


def hamiltonian_super(H):
    d = H.shape[0]
    I = np.eye(d)
    return -1j * (np.kron(I, H) - np.kron(H.T, I))


def dissipator_super(L, rate=1.0):
    d = L.shape[0]
    I = np.eye(d)
    LdL = L.conj().T @ L
    return rate * (np.kron(L.conj(), L) - 0.5 * np.kron(I, LdL) - 0.5 * np.kron(LdL.T, I))


def liouvillian(H, spec: LindbladSpec | None):
    S = hamiltonian_super(np.asarray(H, dtype=complex))
    if spec is not None:
        for L, g in zip(spec.ops, spec.rates):
            if g:
                S = S + dissipator_super(L, g)
    return S


def lindblad_rhs(H, rho, spec: LindbladSpec | None):
    out = -1j * (H @ rho - rho @ H)
    if spec is not None:
        for L, g in zip(spec.ops, spec.rates):
            if g:
                Ld = L.conj().T
                LdL = Ld @ L
                out += g * (L @ rho @ Ld - 0.5 * (LdL @ rho + rho @ LdL))
    return out


def averaged_liouvillian(Hbar, spec: LindbladSpec | None, U=None):
    """Average of the Liouvillians before and after conjugation by the instantaneous gate U."""
    Hbar = np.asarray(Hbar, dtype=complex)
    d = Hbar.shape[0]
    if U is None:
        n = int(round(np.log(d) / np.log(3)))
        U = kron_all([PI02] * n)
    Ht = U.conj().T @ Hbar @ U
    L1 = liouvillian(Hbar, spec)
    L2 = liouvillian(Ht, spec.conjugated(U) if spec is not None else None)
    return 0.5 * (L1 + L2)


def stepwise_cycle(Hbar, spec, U, T_E):
    """exp(L~ T_E) exp(L T_E): one period in each toggling frame."""
    Ht = U.conj().T @ Hbar @ U
    L1 = liouvillian(Hbar, spec)
    L2 = liouvillian(Ht, spec.conjugated(U) if spec is not None else None)
    return expm(L2 * T_E) @ expm(L1 * T_E)


# --- evolution -----------------------------------------------------------------------------

def _populations_to_sites(p, n_sites):
    probs = np.asarray(p).reshape((3,) * n_sites)
    m = np.array([1.0, 0.0, -1.0])
    lz, lz2 = np.empty(n_sites), np.empty(n_sites)
    for k in range(n_sites):
        pk = probs.sum(axis=tuple(a for a in range(n_sites) if a != k))
        lz[k] = pk @ m
        lz2[k] = pk @ m**2
    return lz, lz2


def check_density_matrix(rho, trace_tol=1e-9, pos_tol=POSITIVITY_TOL):
    tr = np.trace(rho).real
    herm = np.abs(rho - rho.conj().T).max()
    ev = np.linalg.eigvalsh(0.5 * (rho + rho.conj().T))
    if abs(tr - 1) > max(trace_tol, 1e-8):
        raise NumericalError(f"trace drifted to {tr:.12f}")
    if ev.min() < -pos_tol:
        raise NumericalError(f"density matrix lost positivity (min eigenvalue {ev.min():.3e})")
    return tr, ev.min(), herm


def lindblad_evolve(H, spec: LindbladSpec | None, rho0, times, n_sites=None, rtol=1e-10, atol=1e-12,
                    breakpoints=None):
    """Density-matrix trajectory under a constant or time-dependent Hamiltonian.

    Returns dict with rho (len(times), d, d), lz, lz2 per site, trace,
    min_eig, purity and hermiticity error along the trajectory.
    """
    rho0 = np.asarray(rho0, dtype=complex)
    if rho0.ndim == 1:
        rho0 = np.outer(rho0, rho0.conj())
    d = rho0.shape[0]
    times = np.asarray(times, dtype=float)
    if np.any(np.diff(times) < 0) or times[0] < 0:
        raise InvalidArgument("times must be non-negative and sorted")
    if n_sites is None:
        n_sites = int(round(np.log(d) / np.log(3)))
        if 3**n_sites != d:
            raise InvalidArgument("cannot infer qutrit count; pass n_sites")
    if spec is not None and spec.ops and spec.dim != d:
        raise InvalidArgument("jump operators and density matrix differ in dimension")
    timedep = callable(H)
    states = []
    if not timedep and d <= SUPEROP_MAX_DIM:
        S = liouvillian(H, spec)
        v, t_prev = vec(rho0), 0.0
        for t in times:
            v = expm(S * (t - t_prev)) @ v
            t_prev = t
            states.append(unvec(v, d))
    else:
        Hf = H if timedep else (lambda t, H0=np.asarray(H, dtype=complex): H0)
        if d <= SUPEROP_MAX_DIM:
            D = liouvillian(np.zeros((d, d)), spec)

            def rhs(t, y):
                return hamiltonian_super(Hf(t)) @ y + D @ y

            y0 = vec(rho0)
        else:
            def rhs(t, y):
                return lindblad_rhs(Hf(t), y.reshape(d, d), spec).ravel()

            y0 = rho0.ravel()
        knots = sorted({0.0, *times.tolist(), *[b for b in (breakpoints or []) if 0 < b < times[-1]]})
        y, t_prev, out = y0, 0.0, {}
        for t in knots:
            if t > t_prev:
                sol = solve_ivp(rhs, (t_prev, t), y, method="DOP853", rtol=rtol, atol=atol)
                if sol.status != 0:
                    raise NumericalError(sol.message)
                y = sol.y[:, -1]
                t_prev = t
            out[t] = y
        for t in times:
            y = out[float(t)]
            states.append(unvec(y, d) if d <= SUPEROP_MAX_DIM else y.reshape(d, d))
    res = {"t": times, "rho": np.array(states), "lz": [], "lz2": [], "trace": [], "min_eig": [],
           "purity": [], "herm_err": []}
    for rho in states:
        tr, mn, herm = check_density_matrix(rho)
        lz, lz2 = _populations_to_sites(np.diag(rho).real, n_sites)
        res["lz"].append(lz)
        res["lz2"].append(lz2)
        res["trace"].append(tr)
        res["min_eig"].append(mn)
        res["purity"].append(np.trace(rho @ rho).real)
        res["herm_err"].append(herm)
    for k in ("lz", "lz2", "trace", "min_eig", "purity", "herm_err"):
        res[k] = np.array(res[k])
    return res


def evolve_superop(S, rho0, times):
    """Trajectory under a constant generator given as a superoperator matrix."""
    rho0 = np.asarray(rho0, dtype=complex)
    d = rho0.shape[0]
    out, v, t_prev = [], vec(rho0), 0.0
    for t in times:
        v = expm(S * (t - t_prev)) @ v
        t_prev = t
        out.append(unvec(v, d))
    return np.array(out)
