"""Partitions of unity on covers and transplantation of approximate eigenfunctions.

Around each fiber point ``y`` over ``x`` we push down a radial tent from
the universal cover,

    psi_y(z) = sum over non-backtracking walks y -> z of length l of
               clamp((r + s - l) / s, 0, 1),

normalize by ``psi_1 + sum psi_y`` and use ``chi = sum_{y in P} phi_y``
to cut the lift of a base function down to finitely many sheets.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .amenability import GeneratorSet, folner_search
from .covering import CoveringGraph, darts, lift_function, lift_operator, nonbacktracking_counts
from .errors import CoverError, DomainError
from .graph import SchrodingerOp, apply

TOL = 1e-12


def taper(length, r, s):
    """clamp((r + s - length) / s, 0, 1)."""
    return np.clip((r + s - np.asarray(length, dtype=float)) / s, 0.0, 1.0)


@dataclass
class PartitionOfUnity:
    """Sparse functions phi_y per fiber point, plus the remainder phi_1.

    ``valid`` marks vertices whose values are exact despite the
    truncation (hop distance at least r + s from the frontier).
    """

    cover: CoveringGraph
    x: int
    fiber: np.ndarray
    r: int
    s: int
    psi: dict
    psi1: np.ndarray
    denominator: np.ndarray
    valid: np.ndarray
    compact_branch: bool
    frontier_distance: np.ndarray = field(repr=False)

    def phi(self, y: int):
        idx, val = self.psi[int(y)]
        return idx, val / self.denominator[idx]

    def phi_dense(self, y: int) -> np.ndarray:
        out = np.zeros(self.cover.total.n)
        idx, val = self.phi(y)
        out[idx] = val
        return out

    @property
    def phi1(self) -> np.ndarray:
        with np.errstate(invalid="ignore", divide="ignore"):
            out = np.where(self.denominator > 0, self.psi1 / self.denominator, 0.0)
        return out

    def sum_phi(self, ys=None) -> np.ndarray:
        ys = self.fiber if ys is None else ys
        out = np.zeros(self.cover.total.n)
        for y in ys:
            idx, val = self.phi(y)
            out[idx] += val
        return out


def _local_counts(graph, y, length, data):
    """Non-backtracking counts from y on the sub-graph of ball(y, length)."""
    d = graph.distances(int(y), limit=length)
    nodes = np.flatnonzero(d <= length)
    if len(nodes) == graph.n:
        return nodes, nonbacktracking_counts(graph, int(y), length, data)
    tail, head, _ = data
    inside = np.zeros(graph.n, dtype=bool)
    inside[nodes] = True
    keep_e = inside[graph.edges[:, 0]] & inside[graph.edges[:, 1]]
    pos = np.full(graph.n, -1, dtype=np.int64)
    pos[nodes] = np.arange(len(nodes))
    e = pos[graph.edges[keep_e]]
    m = len(e)
    lt = np.empty(2 * m, dtype=np.int64)
    lh = np.empty(2 * m, dtype=np.int64)
    lt[0::2], lh[0::2] = e[:, 0], e[:, 1]
    lt[1::2], lh[1::2] = e[:, 1], e[:, 0]
    rev = np.arange(2 * m) ^ 1
    counts = nonbacktracking_counts(None, int(pos[y]), length, (lt, lh, rev), n=len(nodes))
    return nodes, counts


def build_partition(cover: CoveringGraph, x: int | None = None, r: int = 1, s: int = 1) -> PartitionOfUnity:
    """Partition of unity subordinate to the balls around the fiber over ``x``.

    When the pushed-down tents already sum to at least 1 on the valid
    region the remainder is dropped (psi_1 = 0).  Otherwise
    ``psi_1 = 1 - f_1 o p`` with ``f_1`` the same tent around ``x`` in the
    base.
    """
    if int(s) != s or s < 1:
        raise DomainError("taper width s must be an integer >= 1")
    if int(r) != r or r < 0:
        raise DomainError("radius r must be a non-negative integer")
    r, s = int(r), int(s)
    x = cover.basepoint if x is None else int(x)
    if cover.trunc is not None and r + s + 1 > cover.trunc:
        raise CoverError(f"truncation {cover.trunc} too small for r + s + 1 = {r + s + 1}")
    total = cover.total
    length = r + s - 1
    weights = taper(np.arange(length + 1), r, s)
    data = darts(total)
    fiber = cover.fiber(x)
    psi = {}
    acc = np.zeros(total.n)
    for y in fiber:
        nodes, counts = _local_counts(total, y, length, data)
        val = weights @ counts.astype(float)
        nz = val > 0
        psi[int(y)] = (nodes[nz], val[nz])
        acc[nodes[nz]] += val[nz]
    if cover.frontier.any():
        fdist = total.distances(np.flatnonzero(cover.frontier))
    else:
        fdist = np.full(total.n, np.iinfo(np.int64).max // 4, dtype=np.int64)
    valid = fdist >= r + s
    if not valid.any():
        raise CoverError("no vertex is far enough from the frontier")
    compact = bool(np.all(acc[valid] >= 1 - TOL))
    if compact:
        psi1 = np.zeros(total.n)
    else:
        dbase = cover.base.distances(x)
        psi1 = 1.0 - taper(dbase, r, s)[cover.projection]
    denom = psi1 + acc
    return PartitionOfUnity(cover, x, fiber, r, s, psi, psi1, denom, valid, compact, fdist)


# ---------------------------------------------------------------- chi and Q-sets

@dataclass
class TransplantPlan:
    pou: PartitionOfUnity
    P: np.ndarray
    chi: np.ndarray
    Q: np.ndarray
    Q_plus: np.ndarray
    Q_minus: np.ndarray
    avoid: np.ndarray | None = None

    @property
    def ratio(self) -> float:
        if len(self.Q_plus) == 0:
            return float("inf")
        return len(self.Q_minus) / len(self.Q_plus)

    def uniform_bound(self, op_total: SchrodingerOp, lam: float, theta) -> float:
        """C_0 = max_z |((S - lam)(chi theta))(z)|."""
        u = self.chi * np.asarray(theta)
        return float(np.max(np.abs(apply(op_total, u) - lam * u)))


def assemble_chi(pou: PartitionOfUnity, P, avoid=None) -> TransplantPlan:
    """chi = sum of phi_y over P with the exact Q, Q+, Q- classification.

    Q are the fiber points whose r-ball meets supp chi; Q+ those whose
    r-ball carries chi = 1 throughout; Q- = Q minus Q+.
    """
    cover = pou.cover
    P = np.unique(np.asarray(P, dtype=np.int64))
    if not len(P):
        raise DomainError("P is empty")
    fib = set(pou.fiber.tolist())
    if any(int(y) not in fib for y in P):
        raise DomainError("P must be a subset of the fiber")
    r, s = pou.r, pou.s
    need = 4 * r + 2 * s - 1
    if np.any(pou.frontier_distance[P] < need):
        raise CoverError("P is too close to the frontier; the budget cannot be verified")
    chi = pou.sum_phi(P)
    supp = np.flatnonzero(chi > 0)
    total = cover.total
    near = total.distances(supp, limit=r)
    Q, Qp = [], []
    for y in pou.fiber:
        if near[y] > r:
            continue
        Q.append(int(y))
        d = total.distances(int(y), limit=r)
        b = d <= r
        if np.all(np.abs(chi[b] - 1.0) <= TOL):
            Qp.append(int(y))
    Q = np.asarray(Q, dtype=np.int64)
    Qp = np.asarray(Qp, dtype=np.int64)
    Qm = np.setdiff1d(Q, Qp)
    K = None
    if avoid is not None:
        K = np.unique(np.asarray(avoid, dtype=np.int64))
        if np.any(chi[K] > 0):
            raise DomainError("supp chi meets the set to avoid; choose P further away")
    return TransplantPlan(pou, P, chi, Q, Qp, Qm, K)


# ---------------------------------------------------------------- transplantation

@dataclass
class TransplantReport:
    rho1: float
    rho2: float
    lhs: float
    rhs: float
    C0: float
    ratio: float
    q_plus: int
    q_minus: int
    mu_supp_f: float
    mu_support_nbhd: float
    norm_chi_theta: float
    escape_radius: int
    holds: bool

    def row(self):
        return {"ratio": self.ratio, "rho1": self.rho1, "rho2": self.rho2,
                "budget_rhs": float(np.sqrt(self.rhs)), "escape_radius": self.escape_radius}


def _prepare(op_base, f, pou, plan):
    cover = pou.cover
    f = op_base.check_domain(f)
    nrm = op_base.norm(f)
    if abs(nrm - 1.0) > 1e-9:
        raise DomainError(f"f must be normalized in l2(mu), got norm {nrm}")
    supp = np.flatnonzero(f)
    base = cover.base
    dx = base.distances(pou.x)
    if np.any(dx[supp] > pou.r):
        raise DomainError("supp f is not inside ball(x, r)")
    nbhd = np.zeros(base.n, dtype=bool)
    nbhd[supp] = True
    nbhd[np.asarray(base.hop_adjacency[supp].sum(axis=0)).ravel() > 0] = True
    if np.any(dx[nbhd] > pou.r - 1):
        raise DomainError("need r >= 1 + max distance from x of supp f and its neighbours")
    theta = lift_function(cover, f)
    u = plan.chi * theta
    op2 = lift_operator(cover, op_base)
    return f, supp, nbhd, theta, u, op2


def _escape_radius(cover, u):
    supp = np.flatnonzero(u)
    return int(cover.depth[supp].min()) if len(supp) else -1


def transplant(op_base: SchrodingerOp, f, lam: float, pou: PartitionOfUnity, plan: TransplantPlan):
    """zeta = chi * lift(f), normalized, with the certified residual budget.

    Returns ``(zeta, report)``; the report holds both sides of
    rho2^2 <= rho1^2 + C0^2 * (#Q-/#Q+) * mu(T), where T is supp f
    together with its neighbours.
    """
    f, supp, nbhd, theta, u, op2 = _prepare(op_base, f, pou, plan)
    cover = pou.cover
    interior = ~cover.frontier
    nrm = float(np.sqrt(np.sum((u**2 * op2.measure)[interior])))
    if len(plan.Q_plus) == 0 or nrm == 0:
        raise DomainError("chi kills the lift (Q+ is empty)")
    zeta = u / nrm
    rho1 = op_base.norm(apply(op_base, f) - lam * f)
    rho2 = op2.norm(apply(op2, zeta) - lam * zeta)
    C0 = plan.uniform_bound(op2, lam, theta)
    mu = op_base.measure
    mu_T = float(mu[nbhd].sum())
    rhs = rho1**2 + C0**2 * plan.ratio * mu_T
    lhs = rho2**2
    if np.any(~np.isin(cover.projection[np.flatnonzero(zeta)], supp)):
        raise DomainError("support violation: supp zeta leaves p^-1(supp f)")
    if plan.avoid is not None and np.any(zeta[plan.avoid] != 0):
        raise DomainError("supp zeta meets the avoided set")
    report = TransplantReport(rho1, rho2, lhs, rhs, C0, plan.ratio, len(plan.Q_plus),
                              len(plan.Q_minus), float(mu[supp].sum()), mu_T, nrm,
                              _escape_radius(cover, zeta), bool(lhs <= rhs * (1 + 1e-12) + 1e-15))
    return zeta, report


@dataclass
class RayleighReport:
    R_f: float
    R_zeta: float
    rhs: float
    C_prime: float
    ratio_form: float
    q_plus: int
    q_minus: int
    mu_supp_f: float
    norm_chi_theta_sq: float
    holds: bool


def transplant_rayleigh(op_base: SchrodingerOp, f, pou: PartitionOfUnity, plan: TransplantPlan):
    """zeta = chi * lift(f) with R(zeta) <= R(f) + C' #Q- mu(supp f) / ||chi theta||^2.

    ``C'`` is the measured max_z |(S chi theta)(z) (chi theta)(z) - R(f) (chi theta)(z)^2|.
    ``ratio_form`` is the weaker C' (#Q-/#Q+) mu(supp f).
    """
    f, supp, nbhd, theta, u, op2 = _prepare(op_base, f, pou, plan)
    cover = pou.cover
    Rf = op_base.inner(apply(op_base, f), f) / op_base.inner(f, f)
    su = apply(op2, u)
    g = su * u - Rf * u**2
    C1 = float(np.max(np.abs(g)))
    nsq = float(np.sum((u**2 * op2.measure)[~cover.frontier]))
    if len(plan.Q_plus) == 0 or nsq == 0:
        raise DomainError("chi kills the lift (Q+ is empty)")
    zeta = u / np.sqrt(nsq)
    Rz = op2.inner(apply(op2, zeta), zeta) / op2.inner(zeta, zeta)
    mu_supp = float(op_base.measure[supp].sum())
    rhs = Rf + C1 * len(plan.Q_minus) * mu_supp / nsq
    report = RayleighReport(Rf, Rz, rhs, C1, Rf + C1 * plan.ratio * mu_supp, len(plan.Q_plus),
                            len(plan.Q_minus), mu_supp, nsq,
                            bool(Rz <= rhs + 1e-12 * max(1.0, abs(rhs))))
    return zeta, report


# ---------------------------------------------------------------- Weyl families

@dataclass
class WeylFamily:
    members: list
    reports: list
    exclusion_radii: list
    deltas: list
    partial: bool = False
    reason: str = ""
    certificates: list = field(default_factory=list)

    def rows(self):
        out = []
        for k, (rep, delta) in enumerate(zip(self.reports, self.deltas)):
            row = {"k": k}
            row.update(rep.row())
            row["delta"] = delta
            out.append(row)
        return out


def weyl_family(op_base: SchrodingerOp, f, lam: float, cover: CoveringGraph, exclusion_radii,
                r: int = 1, s: int = 1, eps=None, budget: int | None = None,
                disjoint: bool = True, x: int | None = None, pou: PartitionOfUnity | None = None) -> WeylFamily:
    """Transplanted functions escaping ball(root, e_k - 1) for each exclusion radius e_k.

    At scale k a Folner set F_k (ratio below ``eps[k]``) is found for the
    fiber action; P_k keeps the points of F_k deep enough that supp chi
    avoids the exclusion ball, and, with ``disjoint``, shallow enough
    that consecutive supports do not meet.  A failed Folner search
    stops the family early with ``partial`` set.
    """
    if cover.is_finite:
        raise CoverError("finite covers are compact: no escaping family exists")
    radii = [int(e) for e in exclusion_radii]
    if radii != sorted(radii):
        raise DomainError("exclusion radii must be ascending")
    pou = pou or build_partition(cover, x, r, s)
    L = pou.r + pou.s - 1
    if eps is None:
        eps = [1.0 / (4 * (e + pou.r + pou.s)) for e in radii]
    if budget is None:
        budget = max(cover.trunc - (4 * pou.r + 2 * pou.s), 0)
    G = GeneratorSet.from_generators(cover.action)
    fam = WeylFamily([], [], radii, [])
    fiber = pou.fiber
    labels = {cover.labels[i]: int(i) for i in fiber}
    depth = cover.depth
    for k, e in enumerate(radii):
        cert = folner_search(cover.action, G, eps[k], budget)
        fam.certificates.append(cert)
        if not cert.certified:
            fam.partial, fam.reason = True, f"Folner budget exhausted at scale {k}"
            break
        pts = np.asarray([labels[lab] for lab in cert.F if lab in labels], dtype=np.int64)
        lo = depth[pts] >= e + L
        hi = np.ones_like(lo)
        if disjoint and k + 1 < len(radii):
            hi = depth[pts] <= radii[k + 1] - 1 - L
        # drop points whose transplant cannot be verified inside the truncation
        deep = pou.frontier_distance[pts] >= 4 * pou.r + 2 * pou.s - 1
        P = pts[lo & hi & deep]
        if len(P) == 0:
            fam.partial, fam.reason = True, f"no admissible fiber points at scale {k}"
            break
        K = np.flatnonzero(depth < e)
        try:
            plan = assemble_chi(pou, P, avoid=K)
        except CoverError as exc:
            fam.partial, fam.reason = True, f"scale {k}: {exc}"
            break
        try:
            zeta, rep = transplant(op_base, f, lam, pou, plan)
        except DomainError as exc:
            fam.partial, fam.reason = True, f"scale {k}: {exc}"
            break
        fam.members.append(zeta)
        fam.reports.append(rep)
        fam.deltas.append(float(np.sqrt(rep.rhs) - rep.rho1))
    return fam
