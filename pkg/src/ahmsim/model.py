"""Spin-1 truncated Abelian Higgs chain: operators, Hamiltonian, exact dynamics."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import CapacityError, InvalidArgument
from .tensor import embed_local, unitary_exp

SQRT2 = np.sqrt(2.0)
D = 3
DENSE_MAX_SITES = 8

# transmon ordering |0>,|1>,|2>  <->  m = +1, 0, -1
LZ = np.diag([1.0, 0.0, -1.0]).astype(complex)
LZ2 = LZ @ LZ
FPLUS = np.array([[0, 1, 0], [0, 0, 1], [0, 0, 0]], dtype=complex)
FMINUS = FPLUS.conj().T
FX = 0.5 * (FPLUS + FMINUS)
LX = SQRT2 * FX
LY = (FPLUS - FMINUS) / (1j * SQRT2)
PI02 = np.array([[0, 0, 1], [0, 1, 0], [1, 0, 0]], dtype=complex)


@dataclass(frozen=True)
class SpinOperators:
    Lz: np.ndarray = LZ
    Lz2: np.ndarray = LZ2
    Fplus: np.ndarray = FPLUS
    Fminus: np.ndarray = FMINUS
    Fx: np.ndarray = FX
    Lx: np.ndarray = LX
    Ly: np.ndarray = LY


@dataclass(frozen=True)
class ModelParams:
    """Model couplings.

    With ``scale_freq`` set, kappa/chi/beta are dimensionless multiples of
    t_s^-1 (so kappa = 2*pi means kappa/2pi = 1 in units of t_s^-1) and model
    time is measured in units of t_s.
    """

    kappa: float
    chi: float
    beta: float
    n_sites: int = 1
    scale_freq: float | None = None

    def __post_init__(self):
        if int(self.n_sites) != self.n_sites or self.n_sites < 1:
            raise InvalidArgument("n_sites must be a positive integer")
        if self.scale_freq is not None and self.scale_freq <= 0:
            raise InvalidArgument("scale_freq must be positive")

    @property
    def dim(self):
        return D**self.n_sites

    def model_to_seconds(self, t):
        if self.scale_freq is None:
            raise InvalidArgument("scale_freq not set")
        return np.asarray(t) / self.scale_freq


def basis_state(labels, d=D):
    """Product state from transmon labels, e.g. (2, 1) -> |21>."""
    idx = 0
    for n in labels:
        if not 0 <= int(n) < d:
            raise InvalidArgument(f"level {n} outside 0..{d - 1}")
        idx = idx * d + int(n)
    psi = np.zeros(d ** len(labels), dtype=complex)
    psi[idx] = 1.0
    return psi


def parse_state(s):
    """'|21>' or '21' -> basis vector."""
    s = s.strip().lstrip("|").rstrip(">").strip()
    if not s.isdigit():
        raise InvalidArgument(f"cannot parse state {s!r}")
    return basis_state([int(c) for c in s])


def diagonal_energies(p: ModelParams):
    """Diagonal of H (kappa and beta terms) as a length 3^n real vector."""
    n = p.n_sites
    m = np.array([1.0, 0.0, -1.0])
    grids = np.meshgrid(*([m] * n), indexing="ij", sparse=True)
    diag = np.zeros((D,) * n)
    for k in range(n):
        diag = diag + 0.5 * p.kappa * grids[k] ** 2
    for k in range(n - 1):
        diag = diag + 0.5 * p.beta * (grids[k + 1] - grids[k]) ** 2
    return diag.reshape(-1)


def build_hamiltonian(p: ModelParams, max_sites=DENSE_MAX_SITES):
    """Dense H = (k/2) sum Lz^2 - chi sum Fx + (b/2) sum (Lz_{k+1} - Lz_k)^2."""
    n = p.n_sites
    if n > max_sites:
        raise CapacityError(f"dense Hamiltonian for {n} sites exceeds cap of {max_sites} sites")
    H = np.diag(diagonal_energies(p)).astype(complex)
    for k in range(n):
        H -= p.chi * embed_local(FX, k, n)
    return H


def apply_hamiltonian(p: ModelParams, psi, diag=None):
    """Matrix-free H @ psi."""
    n = p.n_sites
    if diag is None:
        diag = diagonal_energies(p)
    out = diag * psi
    if p.chi != 0:
        psi_t = psi.reshape((D,) * n)
        acc = np.zeros_like(psi_t)
        for k in range(n):
            acc += np.moveaxis(np.tensordot(FX, psi_t, axes=(1, k)), 0, k)
        out = out - p.chi * acc.reshape(-1)
    return out


def single_site_hamiltonian(p: ModelParams):
    """Boundary-site Hamiltonian ((k+b)/2) Lz^2 - (chi/sqrt2) Lx."""
    return 0.5 * (p.kappa + p.beta) * LZ2 - (p.chi / SQRT2) * LX


def lz_op(k, n_sites):
    return embed_local(LZ, k, n_sites)


def charge_observable(k, n_sites):
    """Q^k = Lz^(k-1) - Lz^(k), with fictitious edge sites at <Lz> = 0.

    k runs over 0..n_sites; k = n_sites is the right-edge charge Lz^(n-1).
    """
    if not 0 <= k <= n_sites:
        raise InvalidArgument(f"charge index {k} outside 0..{n_sites}")
    Q = np.zeros((D**n_sites, D**n_sites), dtype=complex)
    if k >= 1:
        Q += lz_op(k - 1, n_sites)
    if k < n_sites:
        Q -= lz_op(k, n_sites)
    return Q


def site_expectations(psi, n_sites):
    """Per-site <Lz>, <Lz^2> and charges <Q^k> (k = 0..n) from a state vector."""
    probs = np.abs(np.asarray(psi).reshape((D,) * n_sites)) ** 2
    m = np.array([1.0, 0.0, -1.0])
    lz = np.empty(n_sites)
    lz2 = np.empty(n_sites)
    for k in range(n_sites):
        axes = tuple(a for a in range(n_sites) if a != k)
        pk = probs.sum(axis=axes)
        lz[k] = pk @ m
        lz2[k] = pk @ (m**2)
    edge = np.concatenate([[0.0], lz, [0.0]])
    q = edge[:-1] - edge[1:]
    return lz, lz2, q


def _expm_multiply_free(p, psi, t, diag, tol=1e-13):
    """exp(-iHt) psi by Taylor steps on the matrix-free operator."""
    # crude norm bound for step selection
    hnorm = np.max(np.abs(diag)) + abs(p.chi) * p.n_sites
    nsteps = max(1, int(np.ceil(abs(t) * hnorm / 0.5)))
    h = t / nsteps
    out = psi.astype(complex)
    for _ in range(nsteps):
        term = out
        acc = out.copy()
        for j in range(1, 60):
            term = (-1j * h / j) * apply_hamiltonian(p, term, diag)
            acc += term
            if np.linalg.norm(term) < tol:
                break
        out = acc
    return out


def exact_evolution(p: ModelParams, psi0, times):
    """<Lz^(k)>, <(Lz^(k))^2>, <Q^k> along exact e^{-iHt} psi0.

    Returns a dict of arrays with shapes (len(times), n) and (len(times), n+1).
    """
    times = np.asarray(times, dtype=float)
    n = p.n_sites
    psi0 = np.asarray(psi0, dtype=complex)
    res = {"t": times, "lz": [], "lz2": [], "q": []}
    if n <= DENSE_MAX_SITES:
        from scipy.linalg import eigh

        w, v = eigh(build_hamiltonian(p))
        c0 = v.conj().T @ psi0
        states = [v @ (np.exp(-1j * w * t) * c0) for t in times]
    else:
        diag = diagonal_energies(p)
        states = []
        order = np.argsort(times)
        psi, t_prev = psi0, 0.0
        tmp = {}
        for i in order:
            psi = _expm_multiply_free(p, psi, times[i] - t_prev, diag)
            t_prev = times[i]
            tmp[i] = psi
        states = [tmp[i] for i in range(len(times))]
    for psi in states:
        lz, lz2, q = site_expectations(psi, n)
        res["lz"].append(lz)
        res["lz2"].append(lz2)
        res["q"].append(q)
    for key in ("lz", "lz2", "q"):
        res[key] = np.array(res[key])
    return res


def reflection_permutation(n_sites):
    """Permutation matrix reversing the site order."""
    dim = D**n_sites
    idx = np.arange(dim).reshape((D,) * n_sites)
    perm = np.transpose(idx, tuple(range(n_sites - 1, -1, -1))).reshape(-1)
    P = np.zeros((dim, dim))
    P[perm, np.arange(dim)] = 1.0
    return P


def evolve_exact_state(p: ModelParams, psi0, t):
    return unitary_exp(build_hamiltonian(p), t) @ np.asarray(psi0, dtype=complex)
