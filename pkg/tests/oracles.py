"""Independent reference implementations used only by the tests.

Each oracle is written from scratch with explicit loops or textbook series so
that it shares no code path with the package.
"""
import math

import numpy as np


def kron_loop(A, B):
    """Kronecker product by explicit index loops."""
    m, n = A.shape
    p, q = B.shape
    out = np.zeros((m * p, n * q), dtype=complex)
    for i in range(m):
        for j in range(n):
            for k in range(p):
                for l in range(q):
                    out[i * p + k, j * q + l] = A[i, j] * B[k, l]
    return out


def expm_taylor(A, terms=30):
    """Scaled-and-squared Taylor series exponential."""
    A = np.asarray(A, dtype=complex)
    nrm = np.abs(A).sum(axis=1).max()
    s = max(0, int(math.ceil(math.log2(nrm))) + 1) if nrm > 0 else 0
    B = A / 2**s
    out = np.eye(A.shape[0], dtype=complex)
    term = np.eye(A.shape[0], dtype=complex)
    for k in range(1, terms + 1):
        term = term @ B / k
        out = out + term
    for _ in range(s):
        out = out @ out
    return out


def expect_loop(O, psi):
    tot = 0j
    for i in range(len(psi)):
        for j in range(len(psi)):
            tot += np.conj(psi[i]) * O[i, j] * psi[j]
    return tot


def spin1_ops():
    """Spin-1 matrices in the m = +1, 0, -1 ordering from ladder algebra."""
    ms = [1, 0, -1]
    Lp = np.zeros((3, 3), dtype=complex)
    for a, m_out in enumerate(ms):
        for b, m_in in enumerate(ms):
            if m_out == m_in + 1:
                Lp[a, b] = math.sqrt(2 - m_in * (m_in + 1))
    Lz = np.diag(ms).astype(complex)
    Lx = (Lp + Lp.conj().T) / 2
    return Lz, Lx


def chain_hamiltonian_loop(kappa, chi, beta, n):
    """AHM chain assembled element by element in the product basis."""
    Lz, Lx = spin1_ops()
    Fx = Lx / math.sqrt(2)
    dim = 3**n
    H = np.zeros((dim, dim), dtype=complex)
    m_of = [1, 0, -1]

    def digits(x):
        out = []
        for _ in range(n):
            out.append(x % 3)
            x //= 3
        return out[::-1]

    for a in range(dim):
        da = digits(a)
        ma = [m_of[v] for v in da]
        H[a, a] += 0.5 * kappa * sum(m * m for m in ma)
        H[a, a] += 0.5 * beta * sum((ma[k + 1] - ma[k]) ** 2 for k in range(n - 1))
        for b in range(dim):
            db = digits(b)
            diff = [k for k in range(n) if da[k] != db[k]]
            if len(diff) == 1:
                k = diff[0]
                H[a, b] += -chi * Fx[da[k], db[k]]
    return H


def apply_gate_loop(psi, U, sites, n):
    """Apply a k-site gate by summing over basis indices."""
    dim = 3**n
    k = len(sites)
    out = np.zeros(dim, dtype=complex)
    for a in range(dim):
        da = [(a // 3 ** (n - 1 - s)) % 3 for s in range(n)]
        row = 0
        for s in sites:
            row = row * 3 + da[s]
        for col in range(3**k):
            sub = [(col // 3 ** (k - 1 - j)) % 3 for j in range(k)]
            db = list(da)
            for j, s in enumerate(sites):
                db[s] = sub[j]
            b = 0
            for v in db:
                b = b * 3 + v
            out[a] += U[row, col] * psi[b]
    return out


def global_phase_distance(A, B):
    """min over phase of max |A - e^{i phi} B|, phase from the trace overlap."""
    ov = np.trace(B.conj().T @ A)
    ph = ov / abs(ov) if abs(ov) > 0 else 1.0
    return np.max(np.abs(A - ph * B))


def lindblad_rk4(H, ops, rates, rho0, T, steps=4000):
    """Fixed-step RK4 integration of the master equation."""
    def f(r):
        out = -1j * (H @ r - r @ H)
        for L, g in zip(ops, rates):
            Ld = L.conj().T
            out = out + g * (L @ r @ Ld - 0.5 * (Ld @ L @ r + r @ Ld @ L))
        return out

    h = T / steps
    r = rho0.astype(complex)
    for _ in range(steps):
        k1 = f(r)
        k2 = f(r + 0.5 * h * k1)
        k3 = f(r + 0.5 * h * k2)
        k4 = f(r + h * k3)
        r = r + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
    return r
