"""Dense linear algebra helpers: tensor products, exponentials, propagation."""
from __future__ import annotations

from dataclasses import dataclass
from functools import reduce

import numpy as np
from scipy.integrate import solve_ivp
from scipy.linalg import eigh, expm

from .errors import InvalidArgument, NumericalError, StiffnessError


@dataclass(frozen=True)
class TimeGrid:
    t0: float
    t1: float
    atol: float = 1e-10
    rtol: float = 1e-10
    max_step: float = np.inf

    def __post_init__(self):
        if self.t1 < self.t0:
            raise InvalidArgument("t1 must be >= t0")
        if self.atol <= 0 or self.rtol <= 0:
            raise InvalidArgument("tolerances must be positive")


def kron_all(ops):
    """Tensor product of a list of square matrices, in list order."""
    ops = list(ops)
    if not ops:
        raise InvalidArgument("kron_all needs at least one operator")
    return reduce(np.kron, [np.asarray(o) for o in ops])


def is_hermitian(H, tol=1e-10):
    H = np.asarray(H)
    return H.ndim == 2 and H.shape[0] == H.shape[1] and np.max(np.abs(H - H.conj().T), initial=0.0) < tol


def is_unitary(U, tol=1e-12):
    U = np.asarray(U)
    return np.max(np.abs(U.conj().T @ U - np.eye(U.shape[0]))) < tol


def matrix_exp(A):
    """exp(A) by Pade scaling and squaring."""
    A = np.asarray(A, dtype=complex)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise InvalidArgument("matrix_exp expects a square matrix")
    if not np.all(np.isfinite(A)):
        raise NumericalError("non-finite entries in exponent")
    return expm(A)


def unitary_exp(H, t):
    """exp(-i H t) for Hermitian H via eigendecomposition."""
    H = np.asarray(H, dtype=complex)
    if not np.all(np.isfinite(H)) or not np.isfinite(t):
        raise NumericalError("non-finite Hamiltonian or time")
    w, v = eigh(H)
    return (v * np.exp(-1j * w * t)) @ v.conj().T


def evolve_piecewise(segments, psi0):
    """Apply exp(-i H_k tau_k) for each (H_k, tau_k) in time order."""
    psi = np.asarray(psi0, dtype=complex)
    for H, tau in segments:
        H = np.asarray(H)
        if H.shape != (psi.shape[0], psi.shape[0]):
            raise InvalidArgument("segment dimension does not match state")
        if tau < 0:
            raise InvalidArgument("negative segment duration")
        if tau == 0:
            continue
        psi = unitary_exp(H, tau) @ psi
    return psi


def _solve(rhs, y0, grid, t_eval, breakpoints, method="DOP853"):
    """Integrate y' = rhs(t, y), restarting at breakpoints of the drive."""
    t_eval = np.asarray(t_eval, dtype=float)
    knots = sorted({grid.t0, grid.t1, *[b for b in (breakpoints or []) if grid.t0 < b < grid.t1]})
    out = np.empty((len(t_eval), y0.shape[0]), dtype=complex)
    y = y0.astype(complex)
    done = np.zeros(len(t_eval), dtype=bool)
    # points equal to t0
    at0 = np.isclose(t_eval, grid.t0, rtol=0, atol=1e-15 * max(1.0, abs(grid.t1)))
    out[at0] = y
    done |= at0
    for a, b in zip(knots[:-1], knots[1:]):
        sel = (~done) & (t_eval > a) & (t_eval <= b)
        te = t_eval[sel]
        if te.size == 0 or te[-1] != b:
            te_full = np.append(te, b)
        else:
            te_full = te
        sol = solve_ivp(rhs, (a, b), y, method=method, t_eval=te_full,
                        rtol=grid.rtol, atol=grid.atol, max_step=grid.max_step)
        if sol.status != 0:
            raise StiffnessError(f"integrator failed on [{a}, {b}]: {sol.message}")
        ys = sol.y.T
        out[sel] = ys[: te.size]
        done |= sel
        y = ys[-1]
    return out


def evolve_td(H_of_t, grid, psi0, t_eval=None, breakpoints=None, check_norm=True):
    """Integrate i dpsi/dt = H(t) psi adaptively.

    Returns the states at ``t_eval`` (default: only the end point) with shape
    (len(t_eval), dim).
    """
    psi0 = np.asarray(psi0, dtype=complex)
    if t_eval is None:
        t_eval = [grid.t1]

    def rhs(t, y):
        return -1j * (H_of_t(t) @ y)

    states = _solve(rhs, psi0, grid, t_eval, breakpoints)
    if check_norm:
        n0 = np.linalg.norm(psi0)
        drift = np.max(np.abs(np.linalg.norm(states, axis=1) - n0))
        if drift > 1e-8:
            raise NumericalError(f"norm drift {drift:.2e} exceeds 1e-8")
    return states


def propagator_td(H_of_t, grid, breakpoints=None):
    """Time-ordered propagator over the grid interval."""
    d = H_of_t(grid.t0).shape[0]

    def rhs(t, y):
        return (-1j * (H_of_t(t) @ y.reshape(d, d))).ravel()

    U = _solve(rhs, np.eye(d, dtype=complex).ravel(), grid, [grid.t1], breakpoints)
    return U[0].reshape(d, d)


def expect(O, psi, check=True):
    """Real expectation value <psi|O|psi>."""
    O = np.asarray(O)
    psi = np.asarray(psi)
    if O.shape[0] != psi.shape[0]:
        raise InvalidArgument("operator and state dimensions differ")
    if check and not is_hermitian(O):
        raise InvalidArgument("observable must be Hermitian")
    val = np.vdot(psi, O @ psi)
    if abs(val.imag) > 1e-10 * max(1.0, abs(val.real)):
        raise NumericalError(f"expectation has imaginary residue {val.imag:.2e}")
    return float(val.real)


def embed_local(op, site, n_sites, d=3):
    """I^(site) (x) op (x) I^(n_sites - site - 1)."""
    if not 0 <= site < n_sites:
        raise InvalidArgument(f"site {site} out of range for {n_sites} sites")
    op = np.asarray(op)
    left = np.eye(d**site)
    right = np.eye(d ** (n_sites - site - 1))
    return np.kron(np.kron(left, op), right)


def apply_local(psi, op, sites, n_sites, d=3):
    """Apply a k-site operator to a state vector by tensor contraction."""
    sites = list(sites)
    k = len(sites)
    psi_t = np.asarray(psi).reshape((d,) * n_sites)
    op_t = np.asarray(op).reshape((d,) * (2 * k))
    out = np.tensordot(op_t, psi_t, axes=(list(range(k, 2 * k)), sites))
    # tensordot puts the new indices first; move them back
    out = np.moveaxis(out, list(range(k)), sites)
    return out.reshape(-1)


def apply_diagonal(psi, diag, sites, n_sites, d=3):
    """Multiply by a diagonal k-site operator given as its diagonal."""
    sites = list(sites)
    shape = [1] * n_sites
    diag_t = np.asarray(diag).reshape((d,) * len(sites))
    order = np.argsort(sites)
    diag_t = np.transpose(diag_t, order)
    for s in sites:
        shape[s] = d
    psi_t = np.asarray(psi).reshape((d,) * n_sites)
    return (psi_t * diag_t.reshape(shape)).reshape(-1)
