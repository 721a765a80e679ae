"""Weyl twirling, noisy density-matrix circuits, cycle benchmarking, purification and readout correction."""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import schur
from scipy.optimize import curve_fit

from .circuits import Circuit, GateSpec, build_trotter_circuit, materialize, weyl_matrix
from .errors import CliffordError, FitError, InvalidArgument
from .tensor import apply_local, kron_all, matrix_exp

D = 3
PURIFY_FLOOR = 0.05
DEFAULT_CB_LENGTHS = (2, 4, 8, 16)


def task_rng(seed, *index):
    """Generator for one task derived from a master seed and a stable index."""
    return np.random.default_rng(np.random.SeedSequence([int(seed), *[int(i) for i in index]]))


# --- Weyl group ---------------------------------------------------------------------------

def weyl(k, l):
    return weyl_matrix(k, l)


@dataclass(frozen=True)
class WeylOperator:
    """Tensor product of single-qutrit Weyls; labels ((k0, l0), (k1, l1), ...)."""

    labels: tuple

    def __post_init__(self):
        lab = tuple((int(k) % D, int(l) % D) for k, l in self.labels)
        object.__setattr__(self, "labels", lab)

    @property
    def n_sites(self):
        return len(self.labels)

    def matrix(self):
        return kron_all([weyl(k, l) for k, l in self.labels])

    @property
    def is_identity(self):
        return all(k == 0 and l == 0 for k, l in self.labels)

    @classmethod
    def identity(cls, n):
        return cls(((0, 0),) * n)


def all_weyls(n_sites):
    singles = [(k, l) for k in range(D) for l in range(D)]
    return [WeylOperator(lab) for lab in itertools.product(singles, repeat=n_sites)]


def match_weyl(M, n_sites, tol=1e-10):
    """Write M = phase * W; raises CliffordError if M is not a Weyl times a phase."""
    dim = D**n_sites
    M = np.asarray(M, dtype=complex)
    # column structure: a Weyl is a monomial matrix, X part fixed by the first column
    for W in all_weyls(n_sites):
        Wm = W.matrix()
        c = np.vdot(Wm, M) / dim
        if abs(abs(c) - 1) < tol and np.abs(M - c * Wm).max() < tol:
            return W, c
    raise CliffordError("operator is not a Weyl operator up to phase")


def conjugation_table(G, n_sites=2):
    """G W G^dag for every n-site Weyl, as (Weyl, phase)."""
    table = {}
    for W in all_weyls(n_sites):
        table[W.labels] = match_weyl(G @ W.matrix() @ G.conj().T, n_sites)
    return table


# --- noise channels --------------------------------------------------------------------------

@dataclass(frozen=True)
class NoiseChannel:
    """Channel attached after each entangling cycle, acting on the cycle's targets.

    kind: 'unitary_overrotation' (generator, angle), 'weyl_stochastic'
    (weights: dict Weyl labels -> probability), 'depolarizing' (lam),
    'composite' (parts applied in order), 'identity'.
    """

    kind: str
    generator: np.ndarray | None = field(default=None, compare=False)
    angle: float = 0.0
    weights: dict | None = None
    lam: float = 1.0
    parts: tuple = ()

    def __post_init__(self):
        kinds = ("unitary_overrotation", "weyl_stochastic", "depolarizing", "composite", "identity")
        if self.kind not in kinds:
            raise InvalidArgument(f"unknown channel kind {self.kind!r}")
        if self.kind == "weyl_stochastic":
            w = np.array(list(self.weights.values()), dtype=float)
            if np.any(w < 0) or abs(w.sum() - 1) > 1e-12:
                raise InvalidArgument("Weyl weights must be non-negative and sum to 1")
        if self.kind == "depolarizing" and not 0 <= self.lam <= 1:
            raise InvalidArgument("depolarizing parameter must lie in [0, 1]")
        if self.kind == "unitary_overrotation":
            G = np.asarray(self.generator)
            if np.abs(G - G.conj().T).max() > 1e-12:
                raise InvalidArgument("overrotation generator must be Hermitian")

    @classmethod
    def depolarizing(cls, lam):
        return cls("depolarizing", lam=lam)

    @classmethod
    def overrotation(cls, generator, angle):
        return cls("unitary_overrotation", generator=np.asarray(generator, dtype=complex), angle=angle)

    @classmethod
    def weyl_stochastic(cls, weights):
        return cls("weyl_stochastic", weights=dict(weights))

    @classmethod
    def composite(cls, *parts):
        return cls("composite", parts=tuple(parts))


def _apply_op(rho, M, sites, n):
    """U rho U^dag for a k-site U, contracting row and column indices separately."""
    sites = list(sites)
    shape = rho.shape
    v = apply_local(rho.reshape(-1), M, sites, 2 * n)
    v = apply_local(v, np.conj(M), [n + s for s in sites], 2 * n)
    return v.reshape(shape)


def _partial_trace_replace(rho, sites, n, lam):
    """lam rho + (1 - lam) I_T/d_T (x) Tr_T rho on target sites T."""
    if lam == 1:
        return rho
    t = rho.reshape((D,) * (2 * n))
    others = [k for k in range(n) if k not in sites]
    # trace out targets
    red = t
    for s in sorted(sites, reverse=True):
        red = np.trace(red, axis1=s, axis2=s + red.ndim // 2)
    m = len(others)
    red = red.reshape(D**m, D**m) if m else red.reshape(1, 1)
    mixed = np.kron(np.eye(D ** len(sites)) / D ** len(sites), red)
    # mixed is ordered (targets, others); permute back to site order
    order = list(sites) + others
    mt = mixed.reshape((D,) * (2 * n))
    inv = np.argsort(order)
    mt = np.transpose(mt, list(inv) + [n + i for i in inv])
    return lam * rho + (1 - lam) * mt.reshape(rho.shape)


def apply_channel(rho, channel: NoiseChannel, sites, n_sites):
    """Apply ``channel`` to the qutrits ``sites`` of an n-site density matrix."""
    rho = np.asarray(rho, dtype=complex)
    dim = D**n_sites
    if rho.shape != (dim, dim):
        raise InvalidArgument("density matrix does not match register size")
    k = channel.kind
    dT = D ** len(sites)
    if k == "identity":
        return rho
    if k == "depolarizing":
        return _partial_trace_replace(rho, list(sites), n_sites, channel.lam)
    if k == "unitary_overrotation":
        G = np.asarray(channel.generator)
        if G.shape != (dT, dT):
            raise InvalidArgument("overrotation generator does not match the cycle targets")
        return _apply_op(rho, matrix_exp(-1j * channel.angle * G), sites, n_sites)
    if k == "weyl_stochastic":
        out = np.zeros_like(rho)
        for lab, w in channel.weights.items():
            W = WeylOperator(lab)
            if W.n_sites != len(sites):
                raise InvalidArgument("Weyl channel does not match the cycle targets")
            if w:
                out += w * _apply_op(rho, W.matrix(), sites, n_sites)
        return out
    for part in channel.parts:
        rho = apply_channel(rho, part, sites, n_sites)
    return rho


def channel_superop(channel: NoiseChannel, n_sites):
    """Column-stacked superoperator of a channel on n qutrits."""
    dim = D**n_sites
    S = np.zeros((dim * dim, dim * dim), dtype=complex)
    for j in range(dim * dim):
        E = np.zeros(dim * dim, dtype=complex)
        E[j] = 1
        S[:, j] = apply_channel(E.reshape((dim, dim), order="F"), channel, range(n_sites), n_sites).reshape(-1, order="F")
    return S


def weyl_transfer_matrix(S, n_sites):
    """R_ij = Tr(W_i^dag E(W_j)) / d in the Weyl basis."""
    dim = D**n_sites
    Ws = [W.matrix() for W in all_weyls(n_sites)]
    R = np.zeros((len(Ws), len(Ws)), dtype=complex)
    for j, Wj in enumerate(Ws):
        out = (S @ Wj.reshape(-1, order="F")).reshape((dim, dim), order="F")
        for i, Wi in enumerate(Ws):
            R[i, j] = np.vdot(Wi, out) / dim
    return R


# --- density-matrix circuit simulation -------------------------------------------------------

def simulate_density(c: Circuit, rho0, noise: NoiseChannel | None = None, callback=None):
    """Propagate a density matrix gate by gate; ``noise`` follows every entangling cycle."""
    n = c.n_sites
    rho = np.asarray(rho0, dtype=complex)
    if rho.ndim == 1:
        rho = np.outer(rho, rho.conj())
    if rho.shape != (D**n, D**n):
        raise InvalidArgument("state dimension does not match circuit")
    cycle_gates = {a for a, _ in c.cycles}
    ends = set(c.step_ends)
    step = 0
    for i, g in enumerate(c.gates):
        rho = _apply_op(rho, materialize(g), g.targets, n)
        if noise is not None and i in cycle_gates:
            rho = apply_channel(rho, noise, g.targets, n)
        if callback is not None and (i + 1) in ends:
            callback(step, rho)
            step += 1
    return rho


# --- randomized compiling -------------------------------------------------------------------

def _uniform_sampler(rng, n_targets):
    return tuple((int(rng.integers(D)), int(rng.integers(D))) for _ in range(n_targets))


def _weyl_gate(site, kl):
    return GateSpec("weyl", (site,), weyl=tuple(kl))


def twirl_cycle(G, targets, labels):
    """Gates (before, cycle, after) implementing G with a Weyl twirl; corrections C = G W^dag G^dag."""
    W = WeylOperator(labels)
    Gm = materialize(G)
    C, _ = match_weyl(Gm @ W.matrix().conj().T @ Gm.conj().T, len(targets))
    before = [_weyl_gate(t, kl) for t, kl in zip(targets, W.labels) if kl != (0, 0)]
    after = [_weyl_gate(t, kl) for t, kl in zip(targets, C.labels) if kl != (0, 0)]
    return before, after


def randomized_compile(c: Circuit, n_twirls, seed=0, sampler=None):
    """Weyl-twirled copies of ``c``; each entangling cycle gets a random twirl and its correction.

    Identity Weyls are omitted, so an all-identity sampler reproduces ``c``.
    """
    sampler = sampler or _uniform_sampler
    cycle_starts = {a for a, _ in c.cycles}
    for a, b in c.cycles:
        if b - a != 1:
            raise CliffordError("only single-gate cycles can be twirled")
    out = []
    for k in range(n_twirls):
        rng = task_rng(seed, k)
        tc = Circuit(c.n_sites)
        ends = set(c.step_ends)
        for i, g in enumerate(c.gates):
            if i in cycle_starts:
                labels = sampler(rng, len(g.targets))
                before, after = twirl_cycle(g, g.targets, labels)
                for w in before:
                    tc.append(w)
                tc.append(g, cycle=True)
                for w in after:
                    tc.append(w)
            else:
                tc.append(g)
            if (i + 1) in ends:
                tc.step_ends.append(len(tc.gates))
        out.append(tc)
    return out


def twirled_noise_superop(G, noise: NoiseChannel, twirls=None, n_sites=2):
    """Average over twirls of C . N . G . W, composed with G^-1: the effective per-cycle noise."""
    dim = D**n_sites
    if twirls is None:
        twirls = [W.labels for W in all_weyls(n_sites)]
    Gm = materialize(G) if isinstance(G, GateSpec) else np.asarray(G)
    N = channel_superop(noise, n_sites)
    acc = np.zeros((dim * dim, dim * dim), dtype=complex)

    def conj_super(U):
        return np.kron(U.conj(), U)

    for lab in twirls:
        W = WeylOperator(lab).matrix()
        C = Gm @ W.conj().T @ Gm.conj().T
        acc += conj_super(C) @ N @ conj_super(Gm @ W)
    acc /= len(twirls)
    return acc @ conj_super(Gm.conj().T)


# --- cycle benchmarking --------------------------------------------------------------------

def cycle_order(G, max_order=12):
    U = materialize(G) if isinstance(G, GateSpec) else np.asarray(G)
    P = U.copy()
    for m in range(1, max_order + 1):
        c = np.trace(P) / P.shape[0]
        if abs(abs(c) - 1) < 1e-10 and np.abs(P - c * np.eye(P.shape[0])).max() < 1e-10:
            return m
        P = U @ P
    raise InvalidArgument("cycle order exceeds search bound")


def _eig_sample(rho, W, shots, rng):
    """Estimate <W> by measuring in the eigenbasis of the normal operator W."""
    # complex Schur form of a normal matrix is diagonal with a unitary eigenbasis
    T, v = schur(W, output="complex")
    lam = np.diag(T)
    probs = np.real(np.einsum("ij,jk,ki->i", v.conj().T, rho, v))
    probs = np.clip(probs, 0, None)
    probs = probs / probs.sum()
    if shots is None:
        return probs @ lam
    counts = rng.multinomial(shots, probs)
    return counts @ lam / shots


def _decay(N, A, p):
    return A * p**N


@dataclass
class CBResult:
    lengths: np.ndarray
    channels: list
    fidelities: np.ndarray  # (channel, length)
    A: np.ndarray
    p: np.ndarray
    p_err: np.ndarray
    fid_sigma: np.ndarray | None = None

    @property
    def mean_decay(self):
        return float(np.mean(self.p))

    def as_dict(self):
        return {"lengths": self.lengths.tolist(),
                "channels": [list(map(list, ch)) for ch in self.channels],
                "A": self.A.tolist(), "p": self.p.tolist(), "p_err": self.p_err.tolist(),
                "mean_decay": self.mean_decay, "infidelity": 1 - self.mean_decay}


def cycle_benchmark(cycle=None, noise: NoiseChannel | None = None, lengths=DEFAULT_CB_LENGTHS, shots=None,
                    seed=0, n_channels=9, n_sequences=10, channels=None):
    """Simulated cycle benchmarking of a two-qutrit Clifford cycle.

    ``lengths`` are multiplied by the cycle order so that the ideal sequence
    returns every Weyl to itself. ``shots`` per (channel, length) are split
    evenly over ``n_sequences`` random twirl sequences; ``shots=None`` gives
    exact expectations.
    """
    G = cycle if cycle is not None else GateSpec("csum", (0, 1))
    if isinstance(G, np.ndarray):
        G = GateSpec("custom", (0, 1), matrix=G)
    n = len(G.targets)
    if n != 2:
        raise InvalidArgument("cycle benchmarking is implemented for two-qutrit cycles")
    Gm = materialize(G)
    conjugation_table(Gm, n)  # raises CliffordError for non-Clifford cycles
    if len(lengths) < 2:
        raise InvalidArgument("need at least two sequence lengths")
    order = cycle_order(Gm)
    Ns = np.array([int(L) * order for L in lengths])
    per = None if shots is None else max(1, shots // n_sequences)
    rng0 = task_rng(seed, 0)
    if channels is None:
        nonid = [W.labels for W in all_weyls(n) if not W.is_identity]
        pick = rng0.choice(len(nonid), size=min(n_channels, len(nonid)), replace=False)
        channels = [nonid[i] for i in pick]
    fids = np.zeros((len(channels), len(Ns)))
    fsig = np.zeros_like(fids)
    for ci, lab in enumerate(channels):
        P = WeylOperator(lab).matrix()
        _, v = schur(P, output="complex")
        psi = v[:, 0]
        rho0 = np.outer(psi, psi.conj())
        ideal = np.vdot(psi, P @ psi)
        for li, N in enumerate(Ns):
            vals = []
            for s in range(n_sequences):
                rng = task_rng(seed, 1, ci, li, s)
                rho = rho0
                U_ideal = np.eye(D**n, dtype=complex)
                for _ in range(N):
                    Wl = _uniform_sampler(rng, n)
                    Wm = WeylOperator(Wl).matrix()
                    step = Gm @ Wm
                    rho = step @ rho @ step.conj().T
                    if noise is not None:
                        rho = apply_channel(rho, noise, range(n), n)
                    U_ideal = step @ U_ideal
                P_N = U_ideal @ P @ U_ideal.conj().T
                meas = _eig_sample(rho, P_N, per, rng)
                vals.append(np.real(meas * np.conj(ideal)))
            fids[ci, li] = np.mean(vals)
            # spread over sequences carries both shot noise and twirl sampling
            fsig[ci, li] = np.std(vals, ddof=1) / np.sqrt(len(vals)) if len(vals) > 1 else 0.0
    A = np.zeros(len(channels))
    p = np.zeros(len(channels))
    perr = np.zeros(len(channels))
    for ci in range(len(channels)):
        y, sig = fids[ci], fsig[ci]
        weighted = bool(np.all(sig > 1e-12))
        try:
            popt, pcov = curve_fit(_decay, Ns.astype(float), y, p0=[1.0, 0.99], maxfev=10000,
                                   sigma=sig if weighted else None, absolute_sigma=weighted)
        except (RuntimeError, ValueError) as exc:
            raise FitError(f"decay fit failed for channel {channels[ci]}: {exc}") from exc
        if not np.all(np.isfinite(popt)) or not 0 < popt[1] < 1.5:
            raise FitError(f"decay fit diverged for channel {channels[ci]}")
        A[ci], p[ci] = popt
        perr[ci] = np.sqrt(abs(pcov[1, 1])) if np.all(np.isfinite(pcov)) else np.nan
    return CBResult(Ns, list(channels), fids, A, p, perr, fsig)


def weyl_eigenvalue(noise: NoiseChannel, labels, n_sites=2):
    """Diagonal Weyl-transfer element of ``noise`` for Weyl ``labels``."""
    dim = D**n_sites
    W = WeylOperator(labels).matrix()
    out = apply_channel(W, noise, range(n_sites), n_sites)
    return np.vdot(W, out) / dim


def orbit_decay(G, noise, labels, n_sites=2):
    """Per-cycle decay of a tracked Weyl: geometric mean of eigenvalues along its orbit under G.

    Raises InvalidArgument when the orbit product is not real and positive; the
    CB signal then oscillates instead of decaying as A p^N (qutrit Weyl channels
    need w(Q) = w(Q^-1) for real eigenvalues).
    """
    Gm = materialize(G) if isinstance(G, GateSpec) else np.asarray(G)
    order = cycle_order(Gm)
    lab = labels
    prod = 1.0 + 0j
    for _ in range(order):
        W, _ = match_weyl(Gm @ WeylOperator(lab).matrix() @ Gm.conj().T, n_sites)
        lab = W.labels
        prod *= weyl_eigenvalue(noise, lab, n_sites)
    if abs(prod.imag) > 1e-12 or prod.real <= 0:
        raise InvalidArgument(f"orbit eigenvalue {prod:.6g} is not real and positive")
    return float(prod.real ** (1 / order))


# --- purification and readout ------------------------------------------------------------------

def purify_expectation(raw, lam_hat, n_cycles, sigma=None, floor=PURIFY_FLOOR):
    """Rescale traceless-observable expectations by lam_hat^-n_cycles."""
    if not 0 < lam_hat <= 1:
        raise InvalidArgument("lam_hat must lie in (0, 1]")
    factor = lam_hat ** np.asarray(n_cycles, dtype=float)
    raw = np.asarray(raw, dtype=float)
    corrected = raw / factor
    out = {"corrected": corrected, "factor": factor, "unreliable": bool(np.any(factor < floor))}
    if sigma is not None:
        out["sigma"] = np.asarray(sigma, dtype=float) / factor
    return out


def sample_shots(probabilities, n_shots, seed=0, index=()):
    p = np.asarray(probabilities, dtype=float)
    if np.any(p < -1e-12) or abs(p.sum() - 1) > 1e-9:
        raise InvalidArgument("probabilities must be non-negative and normalized")
    p = np.clip(p, 0, None)
    return task_rng(seed, *index).multinomial(int(n_shots), p / p.sum())


@dataclass(frozen=True)
class ConfusionMatrix:
    """Column-stochastic readout matrix M[measured, prepared] for one qutrit."""

    M: np.ndarray

    def __post_init__(self):
        M = np.asarray(self.M, dtype=float)
        if M.shape != (D, D) or np.any(M < 0) or np.abs(M.sum(axis=0) - 1).max() > 1e-12:
            raise InvalidArgument("confusion matrix must be 3x3 column-stochastic")

    @classmethod
    def symmetric(cls, eps):
        M = np.full((D, D), eps / 2)
        np.fill_diagonal(M, 1 - eps)
        return cls(M)

    def lift(self, n_sites):
        return kron_all([np.asarray(self.M)] * n_sites)

    def condition_number(self, n_sites=1):
        return float(np.linalg.cond(self.lift(n_sites)))


def mitigate_readout(counts, cm: ConfusionMatrix, n_sites=1):
    """Invert the readout map; negative quasi-probabilities are clipped and renormalized."""
    counts = np.asarray(counts, dtype=float)
    M = cm.lift(n_sites)
    if M.shape[0] != counts.shape[0]:
        raise InvalidArgument("counts do not match register size")
    if np.linalg.matrix_rank(M) < M.shape[0]:
        raise InvalidArgument("confusion matrix is singular")
    freq = counts / counts.sum()
    quasi = np.linalg.solve(M, freq)
    probs = np.clip(quasi, 0, None)
    probs = probs / probs.sum()
    return {"quasi": quasi, "probs": probs, "condition_number": float(np.linalg.cond(M))}


def apply_readout(probabilities, cm: ConfusionMatrix, n_sites=1):
    return cm.lift(n_sites) @ np.asarray(probabilities, dtype=float)


# --- end-to-end pipeline --------------------------------------------------------------------

def _lz_values(n_sites):
    m = np.array([1.0, 0.0, -1.0])
    idx = np.array(list(itertools.product(range(D), repeat=n_sites)))
    return m[idx]  # (dim, n_sites)


def mitigated_trotter_run(plan, psi0, noise: NoiseChannel, n_twirls=30, shots=1024, seed=0, lam_hat=None,
                          cb_kwargs=None):
    """RC + shots + CB-estimated depolarizing purification of per-step <Lz>.

    Returns raw and purified means with statistical errors per (step, site),
    the estimated lam_hat and the cycle counts per step.
    """
    c = build_trotter_circuit(plan)
    n = c.n_sites
    lzv = _lz_values(n)
    twirled = randomized_compile(c, n_twirls, seed)
    n_steps = len(c.step_ends)
    sums = np.zeros((n_steps, n))
    sq = np.zeros((n_steps, n))
    for k, tc in enumerate(twirled):
        def record(step, rho, k=k):
            p = np.clip(np.real(np.diag(rho)), 0, None)
            counts = sample_shots(p / p.sum(), shots, seed, index=(7, k, step))
            sums[step] += counts @ lzv
            sq[step] += counts @ lzv**2

        simulate_density(tc, psi0, noise, callback=record)
    total = n_twirls * shots
    mean = sums / total
    var = sq / total - mean**2
    sigma = np.sqrt(var / total)
    cycles_per_step = [sum(1 for a, _ in c.cycles if a < e) for e in c.step_ends]
    cb = None
    if lam_hat is None:
        kw = dict(shots=None)
        kw.update(cb_kwargs or {})
        cb = cycle_benchmark(GateSpec("csum", (0, 1)), noise, seed=seed, **kw)
        lam_hat = cb.mean_decay
    pur = purify_expectation(mean, lam_hat, np.array(cycles_per_step)[:, None], sigma=sigma)
    return {"raw": mean, "raw_sigma": sigma, "purified": pur["corrected"], "sigma": pur["sigma"],
            "lam_hat": lam_hat, "cycles": cycles_per_step, "unreliable": pur["unreliable"], "cb": cb}
