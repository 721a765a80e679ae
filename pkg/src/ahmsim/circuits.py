"""Qutrit gates, Trotter circuits for the spin-1 chain, simulation and resource counts."""
from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidArgument
from .model import LX, LZ, LZ2, PI02, SQRT2, ModelParams
from .tensor import apply_diagonal, apply_local, matrix_exp

D = 3
OMEGA = np.exp(2j * np.pi / 3)

X3 = np.roll(np.eye(D), 1, axis=0).astype(complex)  # X|n> = |n+1>
Z3 = np.diag(OMEGA ** np.arange(D))
H3 = np.array([[OMEGA ** (n * m) for m in range(D)] for n in range(D)]) / np.sqrt(3)
CZ = np.diag([OMEGA ** (i * j) for i in range(D) for j in range(D)])
CSUM = np.zeros((9, 9), dtype=complex)
for _i in range(D):
    for _j in range(D):
        CSUM[_i * D + (_i + _j) % D, _i * D + _j] = 1.0

_SUBSPACES = {"01": (0, 1), "12": (1, 2), "02": (0, 2)}
ENTANGLING = ("csum", "cz")


def subspace_generator(axis, subspace):
    """Pauli matrix embedded in a two-level subspace of the qutrit.

    sigma_z^{ij} = |i><i| - |j><j|, so sigma_z^{12} = diag(0, 1, -1).
    """
    i, j = _SUBSPACES[subspace]
    s = np.zeros((D, D), dtype=complex)
    if axis == "x":
        s[i, j] = s[j, i] = 1
    elif axis == "y":
        s[i, j], s[j, i] = -1j, 1j
    elif axis == "z":
        s[i, i], s[j, j] = 1, -1
    else:
        raise InvalidArgument(f"unknown axis {axis!r}")
    return s


def gell_mann():
    """The eight Gell-Mann matrices lambda_1..lambda_8."""
    l = [subspace_generator("x", "01"), subspace_generator("y", "01"), subspace_generator("z", "01"),
         subspace_generator("x", "02"), subspace_generator("y", "02"),
         subspace_generator("x", "12"), subspace_generator("y", "12"),
         np.diag([1, 1, -2]).astype(complex) / np.sqrt(3)]
    return l


def weyl_matrix(k, l):
    """W_{k,l} = exp(-i pi k l / 3) Z^k X^l."""
    if k not in range(D) or l not in range(D):
        raise InvalidArgument("Weyl indices must be in {0,1,2}")
    return np.exp(-1j * np.pi * k * l / 3) * np.linalg.matrix_power(Z3, k) @ np.linalg.matrix_power(X3, l)


def rotation(axis, subspace, angle):
    """R_a^{ij}(angle) = exp(-i angle sigma_a^{ij} / 2)."""
    return matrix_exp(-0.5j * angle * subspace_generator(axis, subspace))


@dataclass(frozen=True)
class GateSpec:
    kind: str
    targets: tuple
    axis: str | None = None
    subspace: str | None = None
    angle: float | None = None
    weyl: tuple | None = None
    matrix: np.ndarray | None = field(default=None, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "targets", tuple(int(t) for t in self.targets))
        need = 2 if self.kind in ENTANGLING else None
        if need and len(self.targets) != need:
            raise InvalidArgument(f"{self.kind} needs {need} targets")

    @property
    def entangling(self):
        return self.kind in ENTANGLING


def rot(axis, subspace, angle, site):
    return GateSpec("rot", (site,), axis=axis, subspace=subspace, angle=float(angle))


def materialize(g: GateSpec):
    k = g.kind
    if k == "rot":
        if g.subspace not in _SUBSPACES:
            raise InvalidArgument(f"unknown subspace {g.subspace!r}")
        return rotation(g.axis, g.subspace, g.angle)
    if k == "z3":
        return Z3.copy()
    if k == "x3":
        return X3.copy()
    if k == "h3":
        return H3.copy()
    if k == "csum":
        return CSUM.copy()
    if k == "cz":
        return CZ.copy()
    if k == "weyl":
        return weyl_matrix(*g.weyl)
    if k == "pi02":
        return PI02.copy()
    if k == "custom":
        M = np.asarray(g.matrix, dtype=complex)
        if M.shape != (D ** len(g.targets),) * 2:
            raise InvalidArgument("custom matrix shape does not match targets")
        return M
    raise InvalidArgument(f"unknown gate kind {k!r}")


@dataclass
class Circuit:
    n_sites: int
    gates: list = field(default_factory=list)
    cycles: list = field(default_factory=list)  # (start, stop) gate-index ranges
    step_ends: list = field(default_factory=list)  # gate index after each Trotter step

    def __post_init__(self):
        for g in self.gates:
            self._check(g)

    def _check(self, g):
        if any(t < 0 or t >= self.n_sites for t in g.targets):
            raise InvalidArgument(f"gate targets {g.targets} outside register of {self.n_sites}")
        if len(set(g.targets)) != len(g.targets):
            raise InvalidArgument("repeated target in gate")

    def append(self, g: GateSpec, cycle=False):
        self._check(g)
        if cycle:
            self.cycles.append((len(self.gates), len(self.gates) + 1))
        self.gates.append(g)

    def extend(self, gates):
        for g in gates:
            self.append(g, cycle=g.entangling)

    def __len__(self):
        return len(self.gates)

    def count(self, entangling=None):
        if entangling is None:
            return len(self.gates)
        return sum(1 for g in self.gates if g.entangling == entangling)

    def inverse(self):
        inv = Circuit(self.n_sites)
        for g in reversed(self.gates):
            inv.append(GateSpec("custom", g.targets, matrix=materialize(g).conj().T), cycle=False)
        return inv

    def unitary(self):
        """Full unitary; only for small registers."""
        dim = D**self.n_sites
        U = np.eye(dim, dtype=complex)
        for j in range(dim):
            U[:, j] = simulate(self, U[:, j].copy(), fuse=False)
        return U


# --- Trotter building blocks -------------------------------------------------

def mz_fragment(theta, site):
    """exp(-i theta Lz^2) from two phase rotations."""
    return [rot("z", "01", 2 * theta / 3, site), rot("z", "12", -2 * theta / 3, site)]


def mx_fragment(phi, site):
    """exp(+i phi Lx), split over the two subspaces (R01 applied first)."""
    a = -SQRT2 * phi
    return [rot("x", "01", a, site), rot("x", "12", a, site)]


def mzz_fragment(gamma, control, target):
    """exp(+i gamma Lz(x)Lz) from three CSUMs and target phase gates."""
    g = [rot("z", "01", -2 * gamma / 3, target), rot("z", "12", -4 * gamma / 3, target)]
    d = [rot("z", "01", -4 * gamma / 3, target), rot("z", "12", -2 * gamma / 3, target)]
    cs = GateSpec("csum", (control, target))
    return [cs, *g, cs, *d, cs]


def reference_mz(theta):
    return matrix_exp(-1j * theta * LZ2)


def reference_mx(phi):
    return matrix_exp(1j * phi * LX)


def reference_mzz(gamma):
    return matrix_exp(1j * gamma * np.kron(LZ, LZ))


def fragment_unitary(gates, n_sites):
    return Circuit(n_sites, list(gates)).unitary()


def decompose_mz(theta):
    frag = mz_fragment(theta, 0)
    return frag, reference_mz(theta)


def decompose_mx(phi):
    return mx_fragment(phi, 0), reference_mx(phi)


def decompose_mzz(gamma):
    return mzz_fragment(gamma, 0, 1), reference_mzz(gamma)


def phase_distance(A, B):
    """max|A - c B| with c the phase of A/B at B's largest entry."""
    A = np.asarray(A)
    B = np.asarray(B)
    k = np.argmax(np.abs(B))
    c = A.flat[k] / B.flat[k]
    c = c / abs(c)
    return float(np.max(np.abs(A - c * B)))


@dataclass(frozen=True)
class TrotterPlan:
    params: ModelParams
    dt: float
    n_steps: int

    def __post_init__(self):
        if self.n_steps < 0 or self.dt < 0:
            raise InvalidArgument("dt and n_steps must be non-negative")

    def theta(self, site):
        p = self.params
        if p.n_sites == 1:
            return 0.5 * p.kappa * self.dt
        if site in (0, p.n_sites - 1):
            return 0.5 * (p.kappa + p.beta) * self.dt
        return (0.5 * p.kappa + p.beta) * self.dt

    @property
    def phi(self):
        return self.params.chi / SQRT2 * self.dt

    @property
    def gamma(self):
        return self.params.beta * self.dt


def trotter_step(plan: TrotterPlan):
    """Gate list of one step in time order: M_z layer, M_zz layer, M_x layer."""
    n = plan.params.n_sites
    gates = []
    for k in range(n):
        gates += mz_fragment(plan.theta(k), k)
    for k in range(n - 1):
        gates += mzz_fragment(plan.gamma, k, k + 1)
    for k in range(n):
        gates += mx_fragment(plan.phi, k)
    return gates


def build_trotter_circuit(plan: TrotterPlan):
    c = Circuit(plan.params.n_sites)
    step = trotter_step(plan)
    for _ in range(plan.n_steps):
        c.extend(step)
        c.step_ends.append(len(c.gates))
    return c


# --- simulation ---------------------------------------------------------------

def _embed_block(mats_targets, sites):
    """Unitary of a gate block on the ordered site list ``sites``."""
    k = len(sites)
    U = np.eye(D**k, dtype=complex)
    for M, targets in mats_targets:
        U = apply_block(M, [sites.index(t) for t in targets], k) @ U
    return U


def apply_block(M, local_sites, k):
    """Embed M acting on local_sites into a k-site operator."""
    dim = D**k
    out = np.empty((dim, dim), dtype=complex)
    eye = np.eye(dim, dtype=complex)
    for j in range(dim):
        out[:, j] = apply_local(eye[:, j], M, local_sites, k)
    return out


def fused_blocks(c: Circuit, start=0, stop=None):
    """Greedy fusion of consecutive gates acting on at most two sites."""
    stop = len(c.gates) if stop is None else stop
    blocks = []
    cur, cur_sites = [], []
    for g in c.gates[start:stop]:
        union = sorted(set(cur_sites) | set(g.targets))
        if cur and len(union) > 2:
            blocks.append((_embed_block(cur, cur_sites), cur_sites))
            cur, union = [], sorted(g.targets)
        cur.append((materialize(g), g.targets))
        cur_sites = union
    if cur:
        blocks.append((_embed_block(cur, cur_sites), cur_sites))
    return blocks


def _apply(psi, U, sites, n):
    off = U - np.diag(np.diag(U))
    if not np.any(np.abs(off) > 0):
        return apply_diagonal(psi, np.diag(U), sites, n)
    return apply_local(psi, U, sites, n)


def simulate(c: Circuit, psi0, fuse=True, callback=None):
    """Apply the circuit to psi0 by per-site tensor contraction.

    ``callback(step_index, psi)`` is invoked after every Trotter step boundary
    recorded in ``c.step_ends``.
    """
    n = c.n_sites
    psi = np.asarray(psi0, dtype=complex).copy()
    if psi.shape != (D**n,):
        raise InvalidArgument("state dimension does not match circuit")
    bounds = [0, *c.step_ends] if c.step_ends else [0]
    if bounds[-1] != len(c.gates):
        bounds.append(len(c.gates))
    for s, (a, b) in enumerate(zip(bounds[:-1], bounds[1:])):
        if fuse:
            for U, sites in fused_blocks(c, a, b):
                psi = _apply(psi, U, sites, n)
        else:
            for g in c.gates[a:b]:
                psi = apply_local(psi, materialize(g), g.targets, n)
        if callback is not None and b in c.step_ends:
            callback(s, psi)
    return psi


def trotter_evolution(plan: TrotterPlan, psi0):
    """Per-step site observables of the Trotterized evolution."""
    from .model import site_expectations

    c = build_trotter_circuit(plan)
    n = plan.params.n_sites
    lz0, lz20, q0 = site_expectations(psi0, n)
    out = {"t": [0.0], "lz": [lz0], "lz2": [lz20], "q": [q0], "norm": [np.linalg.norm(psi0)]}

    def record(s, psi):
        lz, lz2, q = site_expectations(psi, n)
        out["t"].append((s + 1) * plan.dt)
        out["lz"].append(lz)
        out["lz2"].append(lz2)
        out["q"].append(q)
        out["norm"].append(np.linalg.norm(psi))

    psi = simulate(c, psi0, callback=record)
    res = {k: np.array(v) for k, v in out.items()}
    res["state"] = psi
    return res


def trotter_error_bound(plan: TrotterPlan, t):
    """Commutator bound on ||exp(-iHt) - S(dt)^n|| for the product formula.

    The terms are the on-site Lz^2 pieces, the nearest-neighbour Lz Lz pieces and
    the two subspace halves of every Lx; ordering follows trotter_step.
    """
    from .tensor import embed_local

    p = plan.params
    n = p.n_sites
    dt = plan.dt
    terms = []
    for k in range(n):
        terms.append(plan.theta(k) / dt * embed_local(LZ2, k, n))
    for k in range(n - 1):
        terms.append(-p.beta * embed_local(LZ, k, n) @ embed_local(LZ, k + 1, n))
    for k in range(n):
        for sub in ("01", "12"):
            terms.append(-(p.chi / 2) * embed_local(subspace_generator("x", sub), k, n))
    tot = 0.0
    for i in range(len(terms)):
        for j in range(i + 1, len(terms)):
            C = terms[i] @ terms[j] - terms[j] @ terms[i]
            if np.any(C):
                tot += np.linalg.norm(C, 2)
    return 0.5 * t * dt * tot


# --- resources ------------------------------------------------------------------

QUBIT_CNOT = {"mz": 0, "mx": 2, "mzz": {"all_to_all": 12, "heavy_hex": 30}}


@dataclass(frozen=True)
class ResourceReport:
    n_sites: int
    n_steps: int
    qutrit_entangling_per_step: int
    qutrit_single_per_step: int
    qubit_cnot_all_to_all_per_step: int
    qubit_cnot_heavy_hex_per_step: int
    qutrit_entangling: int
    qutrit_single: int
    qubit_cnot_all_to_all: int
    qubit_cnot_heavy_hex: int
    qubit_single: int | None = None

    def as_dict(self):
        return dict(self.__dict__)


def count_resources(plan: TrotterPlan, topology="all_to_all"):
    if topology not in ("all_to_all", "heavy_hex"):
        raise InvalidArgument(f"unknown topology {topology!r}")
    n = plan.params.n_sites
    one = build_trotter_circuit(TrotterPlan(plan.params, plan.dt, 1))
    ent = one.count(entangling=True)
    single = one.count(entangling=False)
    a2a = QUBIT_CNOT["mzz"]["all_to_all"] * (n - 1) + QUBIT_CNOT["mx"] * n + QUBIT_CNOT["mz"] * n
    hh = QUBIT_CNOT["mzz"]["heavy_hex"] * (n - 1) + QUBIT_CNOT["mx"] * n + QUBIT_CNOT["mz"] * n
    s = plan.n_steps
    return ResourceReport(n, s, ent, single, a2a, hh, ent * s, single * s, a2a * s, hh * s)


# --- serialization --------------------------------------------------------------

def _fmt_targets(t):
    return ",".join(str(x) for x in t)


def serialize(c: Circuit):
    """Line format: ``<kind> <params> <targets>``; cycles are marked with '!'."""
    lines = [f"# qutrit-circuit n_sites={c.n_sites}"]
    cyc_starts = {a for a, _ in c.cycles}
    step_ends = set(c.step_ends)
    for i, g in enumerate(c.gates):
        if g.kind == "rot":
            par = f"{g.axis}{g.subspace}:{g.angle!r}"
        elif g.kind == "weyl":
            par = f"{g.weyl[0]},{g.weyl[1]}"
        elif g.kind == "custom":
            M = np.asarray(g.matrix, dtype=complex)
            par = json.dumps([[float(v.real), float(v.imag)] for v in M.ravel()], separators=(",", ":"))
        else:
            par = "-"
        kind = ("!" if i in cyc_starts else "") + g.kind
        lines.append(f"{kind} {par} {_fmt_targets(g.targets)}")
        if i + 1 in step_ends:
            lines.append("step")
    return "\n".join(lines) + "\n"


def deserialize(text):
    lines = [l.strip() for l in text.strip().splitlines() if l.strip()]
    if not lines[0].startswith("# qutrit-circuit n_sites="):
        raise InvalidArgument("missing circuit header")
    c = Circuit(int(lines[0].split("=")[1]))
    for line in lines[1:]:
        if line == "step":
            c.step_ends.append(len(c.gates))
            continue
        kind, par, tg = line.split(" ")
        cycle = kind.startswith("!")
        kind = kind.lstrip("!")
        targets = tuple(int(x) for x in tg.split(","))
        if kind == "rot":
            ax_sub, ang = par.split(":")
            g = GateSpec("rot", targets, axis=ax_sub[0], subspace=ax_sub[1:], angle=float(ang))
        elif kind == "weyl":
            k, l = (int(x) for x in par.split(","))
            g = GateSpec("weyl", targets, weyl=(k, l))
        elif kind == "custom":
            vals = np.array(json.loads(par))
            dim = D ** len(targets)
            g = GateSpec("custom", targets, matrix=(vals[:, 0] + 1j * vals[:, 1]).reshape(dim, dim))
        else:
            g = GateSpec(kind, targets)
        c.append(g, cycle=cycle)
    return c
