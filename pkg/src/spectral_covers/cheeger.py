"""Ground states, the ground-state transform and Cheeger constants.

For a positive ``phi`` with ``S phi = lam phi`` on the free vertices the
map ``f -> phi f`` conjugates ``S - lam`` to the weighted Laplacian with
edge weights ``w phi(u) phi(v)``, vertex measure ``mu phi^2`` and no
potential.  Edges into the mask keep their transformed weight as a
Dirichlet term; they vanish when ``phi`` is zero there.

Two set classes are supported for Cheeger constants:

``unrestricted``
    any nonempty ``K`` of free vertices (proper subsets only when the
    graph has no mask at all);
``balanced``
    nonempty ``K`` with at most half of the free volume.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.sparse import csgraph

from .errors import ConvergenceError, DomainError
from .graph import SchrodingerOp, WeightedGraph
from .spectral import lowest_eigenpairs, symmetric_eigenpairs

EXACT_LIMIT = 22
CONVENTIONS = ("unrestricted", "balanced")


@dataclass
class CheegerReport:
    h: float
    witness: np.ndarray
    convention: str
    method: str
    phi: np.ndarray | None = None
    cut: float = 0.0
    volume: float = 0.0

    def summary(self) -> dict:
        return {"h": self.h, "witness_size": int(len(self.witness)), "convention": self.convention,
                "method": self.method, "cut": self.cut, "volume": self.volume}


def _resolve(graph: WeightedGraph, phi, measure, mask):
    n = graph.n
    mask = graph.boundary_mask if mask is None else np.asarray(mask, dtype=bool)
    mu = graph.vertex_measure if measure is None else np.asarray(measure, dtype=float)
    if mu.shape != (n,) or mask.shape != (n,):
        raise DomainError("measure and mask must have one entry per vertex")
    e = graph.edges
    keep = e[:, 0] != e[:, 1]
    e = e[keep]
    w = np.asarray(graph.weights, dtype=float)[keep]
    if phi is not None:
        phi = np.asarray(phi, dtype=float)
        if phi.shape != (n,):
            raise DomainError("phi must have one entry per vertex")
        if np.any(phi[~mask] <= 0):
            raise DomainError("phi must be positive on the free vertices")
        w = w * phi[e[:, 0]] * phi[e[:, 1]]
        mu = mu * phi**2
    return e, w, mu, mask


def cheeger_ratio(graph: WeightedGraph, K, phi=None, measure=None, mask=None) -> float:
    """Boundary weight over volume of a set of free vertices."""
    e, w, mu, mask = _resolve(graph, phi, measure, mask)
    inside = np.zeros(graph.n, dtype=bool)
    inside[np.asarray(K, dtype=np.int64)] = True
    if not inside.any() or np.any(inside & mask):
        raise DomainError("K must be a nonempty set of free vertices")
    cross = inside[e[:, 0]] != inside[e[:, 1]]
    return float(w[cross].sum() / mu[inside].sum())


def cheeger_exact(graph: WeightedGraph, phi=None, convention: str = "unrestricted", measure=None,
                  mask=None, chunk: int = 1 << 16) -> CheegerReport:
    """Brute force over all subsets of the free vertices (at most 22 of them)."""
    if convention not in CONVENTIONS:
        raise DomainError(f"unknown convention {convention!r}")
    e, w, mu, mask = _resolve(graph, phi, measure, mask)
    free = np.flatnonzero(~mask)
    nf = len(free)
    if nf == 0:
        raise DomainError("no free vertices")
    if nf > EXACT_LIMIT:
        raise DomainError(f"{nf} free vertices; exact enumeration is limited to {EXACT_LIMIT}")
    pos = np.full(graph.n, -1)
    pos[free] = np.arange(nf)
    a, b = pos[e[:, 0]], pos[e[:, 1]]
    both = (a >= 0) & (b >= 0)
    one = (a >= 0) ^ (b >= 0)
    fa, fb, fw = a[both], b[both], w[both]
    oa, ow = np.where(a[one] >= 0, a[one], b[one]), w[one]
    mu_f = mu[free]
    total = float(mu_f.sum())
    closed = not mask.any()
    full = (1 << nf) - 1
    shifts = np.arange(nf, dtype=np.int64)
    best = (np.inf, 0, 0.0, 0.0)
    for start in range(1, full + 1, chunk):
        codes = np.arange(start, min(start + chunk, full + 1), dtype=np.int64)
        bits = ((codes[:, None] >> shifts) & 1).astype(bool)
        vol = bits.astype(float) @ mu_f
        cut = (bits[:, fa] ^ bits[:, fb]).astype(float) @ fw + bits[:, oa].astype(float) @ ow
        ok = np.ones(len(codes), dtype=bool)
        if convention == "balanced":
            ok &= vol <= 0.5 * total * (1 + 1e-12)
        elif closed:
            ok &= codes != full
        if not ok.any():
            continue
        ratio = np.where(ok, cut / vol, np.inf)
        i = int(np.argmin(ratio))
        if ratio[i] < best[0] * (1 - 1e-12):
            best = (float(ratio[i]), int(codes[i]), float(cut[i]), float(vol[i]))
    if not np.isfinite(best[0]):
        raise DomainError("no admissible set (a single closed vertex?)")
    h, code, cut, vol = best
    witness = free[[(code >> i) & 1 == 1 for i in range(nf)]]
    return CheegerReport(h, witness, convention, "exact", phi, cut, vol)


def _weighted_operator(n, e, w, mu, free):
    """Symmetric form of the weighted Laplacian (w, mu) on ``free``, Dirichlet elsewhere."""
    deg = np.bincount(e[:, 0], w, n) + np.bincount(e[:, 1], w, n)
    pos = np.full(n, -1)
    pos[free] = np.arange(len(free))
    a, b = pos[e[:, 0]], pos[e[:, 1]]
    both = (a >= 0) & (b >= 0)
    m = len(free)
    W = sp.coo_matrix((np.r_[w[both], w[both]], (np.r_[a[both], b[both]], np.r_[b[both], a[both]])),
                      shape=(m, m)).tocsr()
    s = 1.0 / np.sqrt(mu[free])
    return (sp.diags(deg[free] * s * s) - sp.diags(s) @ W @ sp.diags(s)).tocsr(), s


def _sweep_order(n, e, w, mu, comp, dirichlet_weight, tol, seed):
    """Vertex orders to sweep on one component."""
    a, s = _weighted_operator(n, e, w, mu, comp)
    if dirichlet_weight > 0:
        _, vec, *_ = symmetric_eigenpairs(a, 1, tol, seed=seed, lower_bound=0.0)
        g = vec[:, 0] * s
        return [np.argsort(-g, kind="stable")]
    if len(comp) < 2:
        return []
    _, vec, *_ = symmetric_eigenpairs(a, 2, tol, seed=seed, lower_bound=0.0)
    g = vec[:, 1] * s
    o = np.argsort(-g, kind="stable")
    return [o, o[::-1]]


def _prefix_ratios(order, comp, n, e, w, mu):
    """Cut weight and volume of every prefix of ``order`` (indices into ``comp``)."""
    rank = np.full(n, len(comp))
    rank[comp[order]] = np.arange(len(comp))
    ra, rb = rank[e[:, 0]], rank[e[:, 1]]
    lo, hi = np.minimum(ra, rb), np.maximum(ra, rb)
    touch = lo < len(comp)
    diff = np.zeros(len(comp) + 2)
    np.add.at(diff, lo[touch] + 1, w[touch])
    np.add.at(diff, np.minimum(hi[touch], len(comp)) + 1, -w[touch])
    cut = np.cumsum(diff)[1:len(comp) + 1]
    vol = np.cumsum(mu[comp[order]])
    return cut, vol


def cheeger_sweep(graph: WeightedGraph, phi=None, convention: str = "unrestricted", measure=None,
                  mask=None, tol: float = 1e-8, seed: int = 0) -> CheegerReport:
    """Upper bound on h from level sets of low eigenvectors.

    Each component of the free set is swept along its Dirichlet ground
    state, or along its second eigenvector (from both ends) when it does
    not touch the mask.  The result is never below the exact constant.
    """
    if convention not in CONVENTIONS:
        raise DomainError(f"unknown convention {convention!r}")
    e, w, mu, mask = _resolve(graph, phi, measure, mask)
    n = graph.n
    free = np.flatnonzero(~mask)
    if len(free) == 0:
        raise DomainError("no free vertices")
    total = float(mu[free].sum())
    closed = not mask.any()
    to_mask = np.bincount(e[:, 0], w * mask[e[:, 1]], n) + np.bincount(e[:, 1], w * mask[e[:, 0]], n)
    adj = graph.hop_adjacency[free][:, free]
    ncomp, lab = csgraph.connected_components(adj, directed=False)
    best = (np.inf, None, 0.0, 0.0)
    for c in range(ncomp):
        comp = free[lab == c]
        for order in _sweep_order(n, e, w, mu, comp, float(to_mask[comp].sum()), tol, seed):
            cut, vol = _prefix_ratios(order, comp, n, e, w, mu)
            ok = np.ones(len(comp), dtype=bool)
            if convention == "balanced":
                ok &= vol <= 0.5 * total * (1 + 1e-12)
            elif closed:
                ok[-1] = len(comp) < len(free)
            if not ok.any():
                continue
            ratio = np.where(ok, cut / vol, np.inf)
            j = int(np.argmin(ratio))
            if ratio[j] < best[0] * (1 - 1e-12):
                best = (float(ratio[j]), np.sort(comp[order[:j + 1]]), float(cut[j]), float(vol[j]))
    # single vertices are cheap extra candidates and keep the balanced class nonempty
    deg = np.bincount(e[:, 0], w, n) + np.bincount(e[:, 1], w, n)
    ok = np.ones(len(free), dtype=bool)
    if convention == "balanced":
        ok &= mu[free] <= 0.5 * total * (1 + 1e-12)
    elif closed:
        ok &= len(free) > 1
    if ok.any():
        ratio = np.where(ok, deg[free] / mu[free], np.inf)
        j = int(np.argmin(ratio))
        if ratio[j] < best[0] * (1 - 1e-12):
            best = (float(ratio[j]), free[[j]], float(deg[free[j]]), float(mu[free[j]]))
    if best[1] is None:
        raise DomainError("no admissible set")
    return CheegerReport(best[0], best[1], convention, "sweep", phi, best[2], best[3])


def cheeger(graph, phi=None, convention="unrestricted", measure=None, mask=None) -> CheegerReport:
    """Exact when the free set is small enough, sweep otherwise."""
    m = graph.boundary_mask if mask is None else np.asarray(mask, dtype=bool)
    if int((~m).sum()) <= EXACT_LIMIT:
        return cheeger_exact(graph, phi, convention, measure, m)
    return cheeger_sweep(graph, phi, convention, measure, m)


# ---------------------------------------------------------------- ground states

@dataclass
class GroundState:
    """Positive ground state, mu-normalized, zero on the mask."""

    phi: np.ndarray
    lam: float
    gap: float
    residual: float

    @property
    def simple(self) -> bool:
        return self.gap > 1e-10


def ground_state(op: SchrodingerOp, tol: float = 1e-10, method: str = "auto") -> GroundState:
    """Lowest eigenpair of ``op`` with the sign fixed so phi > 0 on free vertices.

    The free vertex set must be connected; otherwise the ground state
    need not be simple or positive and :class:`DomainError` is raised.
    """
    free = op.free
    if len(free) == 0:
        raise DomainError("operator has no free vertices")
    ncomp, _ = csgraph.connected_components(op.graph.hop_adjacency[free][:, free], directed=False)
    if ncomp > 1:
        raise DomainError(f"free vertices form {ncomp} components; restrict to one first")
    k = 2 if op.dim >= 2 else 1
    rep = lowest_eigenpairs(op, k, tol, method)
    phi = rep.eigenvectors[:, 0].copy()
    if np.any(phi[free] <= 0):
        raise ConvergenceError("computed ground state is not positive", rep)
    gap = float(rep.eigenvalues[1] - rep.eigenvalues[0]) if k == 2 else np.inf
    return GroundState(phi, rep.lambda0, gap, float(rep.residuals[0]))


@dataclass
class RenormalizedOp:
    """Weighted Laplacian obtained from ``op`` by the ground-state transform."""

    op: SchrodingerOp
    phi: np.ndarray
    lam: float
    edges: np.ndarray = field(repr=False)
    weights: np.ndarray = field(repr=False)
    measure: np.ndarray = field(repr=False)

    @property
    def symmetric_matrix(self):
        a, _ = _weighted_operator(self.op.graph.n, self.edges, self.weights, self.measure, self.op.free)
        return a

    def eigenvalues(self, k: int = 1, tol: float = 1e-10, method: str = "auto") -> np.ndarray:
        vals, *_ , ok = symmetric_eigenpairs(self.symmetric_matrix, k, tol, method, lower_bound=0.0)
        if not ok:
            raise ConvergenceError("renormalized eigenvalues did not converge")
        return np.asarray(vals)

    def form(self, f) -> float:
        """sum over edges of w phi phi |f(u) - f(v)|^2, f vanishing on the mask."""
        f = self.op.check_domain(f)
        d = f[self.edges[:, 0]] - f[self.edges[:, 1]]
        return float(np.sum(self.weights * d * d))

    def norm2(self, f) -> float:
        f = np.asarray(f, dtype=float)
        return float(np.sum(f * f * self.measure))

    def cheeger(self, convention: str = "unrestricted") -> CheegerReport:
        return cheeger(self.op.graph, self.phi, convention, self.op.measure, self.op.dirichlet)

    @property
    def kappa(self) -> float:
        """max over free vertices of weighted degree over measure."""
        n = self.op.graph.n
        deg = np.bincount(self.edges[:, 0], self.weights, n) + np.bincount(self.edges[:, 1], self.weights, n)
        free = self.op.free
        return float(np.max(deg[free] / self.measure[free]))


def renormalize(op: SchrodingerOp, gs: GroundState | None = None, tol: float = 1e-8) -> RenormalizedOp:
    """Ground-state transform of ``op``.

    ``gs`` defaults to the ground state of ``op``.  Any positive ``phi``
    solving ``S phi = lam phi`` at the free vertices of ``op`` works (its
    values on the mask enter the equation).
    """
    gs = ground_state(op) if gs is None else gs
    g = op.graph
    phi = np.asarray(gs.phi, dtype=float)
    free = op.free
    if np.any(phi[free] <= 0):
        raise DomainError("phi must be positive on the free vertices")
    W = g.weight_matrix
    deg = np.asarray(W.sum(axis=1)).ravel()
    eq = (deg * phi - W @ phi) / op.measure + (op.potential - gs.lam) * phi
    scale = max(1.0, float(np.abs(deg / op.measure).max()), float(np.abs(op.potential).max()))
    if np.max(np.abs(eq[free]) / phi[free].max()) > tol * scale:
        raise DomainError("phi is not lam-harmonic on the free vertices")
    e = g.edges
    keep = e[:, 0] != e[:, 1]
    e = e[keep]
    w = np.asarray(g.weights)[keep] * phi[e[:, 0]] * phi[e[:, 1]]
    return RenormalizedOp(op, phi, float(gs.lam), e, w, op.measure * phi**2)


def transform_identity(op: SchrodingerOp, ren: RenormalizedOp, f) -> tuple[float, float]:
    """(<(S - lam)(phi f), phi f>_mu, sum_e w phi phi |df|^2); equal up to rounding."""
    from .graph import quadratic_form

    f = op.check_domain(f)
    u = ren.phi * f
    lhs = quadratic_form(op, u) - ren.lam * op.inner(u, u)
    return lhs, ren.form(f)


# ---------------------------------------------------------------- bound checks

@dataclass
class BoundCheck:
    name: str
    lhs: float
    rhs: float
    h: float
    kappa: float
    method: str

    @property
    def holds(self) -> bool:
        return self.lhs >= self.rhs - 1e-9 * max(1.0, abs(self.rhs))

    def row(self) -> dict:
        return {"name": self.name, "lhs": self.lhs, "rhs": self.rhs, "h": self.h,
                "kappa": self.kappa, "method": self.method, "pass": self.holds}


def cheeger_lower_bound_check(op: SchrodingerOp, weighted: bool = True) -> list[BoundCheck]:
    """Cheeger lower bounds for an operator in the normalized convention.

    With a Dirichlet mask: ``lambda_0 >= h^2 / 2`` for ``V >= 0`` and
    the phi-weighted version ``lambda_0(S) - lam >= h_phi^2 / (2 kappa)``
    where ``phi`` is the ground state of the unmasked operator.  Without a
    mask the balanced versions bound ``lambda_1`` instead.
    """
    if op.convention != "normalized":
        raise DomainError("Cheeger bounds are checked in the normalized convention")
    out = []
    masked = bool(op.dirichlet.any())
    if not masked and op.dim < 2:
        raise DomainError("closed graph with a single vertex")
    k = 1 if masked else 2
    vals = lowest_eigenpairs(op, k, 1e-10).eigenvalues
    lam_dom = float(vals[k - 1])
    conv = "unrestricted" if masked else "balanced"
    if np.all(op.potential >= 0):
        rep = cheeger(op.graph, None, conv, op.measure, op.dirichlet)
        out.append(BoundCheck(f"{conv}-cheeger", lam_dom, rep.h**2 / 2, rep.h, 1.0, rep.method))
    if weighted:
        outer = SchrodingerOp(op.graph, op.potential, op.convention, np.zeros(op.graph.n, bool))
        gs = ground_state(outer)
        ren = renormalize(op, gs)
        rep = ren.cheeger(conv)
        shift = gs.lam if masked else float(vals[0])
        kap = ren.kappa
        out.append(BoundCheck(f"{conv}-cheeger-phi", lam_dom - shift, rep.h**2 / (2 * kap),
                              rep.h, kap, rep.method))
    return out


# ---------------------------------------------------------------- essential trend

@dataclass
class CheegerTrace:
    radii: list
    h: list
    witness_sizes: list
    outer_radius: int
    note: str = ""

    @property
    def estimate(self) -> float:
        return float(max(self.h))

    def csv(self) -> str:
        lines = ["k,h_estimate,witness_size"]
        lines += [f"{k},{h!r},{s}" for k, h, s in zip(self.radii, self.h, self.witness_sizes)]
        return "\n".join(lines) + "\n"


def cheeger_ess(cover, removal_radii, outer_radius: int, phi=None, measure=None) -> CheegerTrace:
    """Sweep Cheeger constants of ball(outer) minus ball(k) in the cover.

    Sweeps only give upper bounds; the sup over ``k`` estimates the
    Cheeger constant at infinity.
    """
    ks = [int(k) for k in removal_radii]
    if not ks or ks != sorted(ks) or ks[-1] >= outer_radius:
        raise DomainError("removal radii must be ascending and below the outer radius")
    if cover.trunc is not None and outer_radius > cover.trunc:
        raise DomainError("outer radius exceeds R_trunc")
    g = cover.total
    base_mask = g.boundary_mask | cover.frontier
    hs, sizes = [], []
    for k in ks:
        keep = (cover.depth > k) & (cover.depth <= outer_radius) & ~base_mask
        if not keep.any():
            raise DomainError(f"empty domain outside ball({k})")
        rep = cheeger_sweep(g, phi, "unrestricted", measure, ~keep)
        hs.append(rep.h)
        sizes.append(int(len(rep.witness)))
    return CheegerTrace(ks, hs, sizes, outer_radius, "sweep upper bounds on annuli")


# ---------------------------------------------------------------- exhaustive small suite

@dataclass
class SuiteResult:
    """lambda_0 and exact h for every instance of the small-graph suite."""

    lambda0: np.ndarray
    h: np.ndarray
    graphs: int

    @property
    def instances(self) -> int:
        return len(self.lambda0)

    @property
    def worst_margin(self) -> float:
        return float(np.min(self.lambda0 - self.h**2 / 2))


def dirichlet_cheeger_suite(max_vertices: int = 8) -> SuiteResult:
    """All connected graphs on at most ``max_vertices`` vertices with one Dirichlet vertex.

    Such a graph is a graph H on the free vertices (any graph from the
    atlas, up to isomorphism) plus one masked vertex joined to a set B
    that meets every component of H.  Operators use the normalized
    convention, so mu = deg_H + 1_B.
    """
    import networkx as nx

    if not 2 <= max_vertices <= 8:
        raise DomainError("the atlas covers free parts of at most 7 vertices")
    lams, hs, count = [], [], 0
    for H in nx.graph_atlas_g()[1:]:
        n = H.number_of_nodes()
        if n > max_vertices - 1:
            break
        count += 1
        adj = nx.to_numpy_array(H, nodelist=range(n))
        comp = [sorted(c) for c in nx.connected_components(H)]
        codes = np.arange(1, 1 << n)
        bits = ((codes[:, None] >> np.arange(n)) & 1).astype(float)
        hits = np.all([(bits[:, c].sum(axis=1) > 0) for c in comp], axis=0)
        Bs = bits[hits]
        deg = adj.sum(axis=1)[None, :] + Bs
        s = 1.0 / np.sqrt(deg)
        lap = (np.eye(n)[None] * deg[:, None, :] - adj[None]) * s[:, :, None] * s[:, None, :]
        lams.append(np.linalg.eigvalsh(lap)[:, 0])
        inner = np.einsum("ki,ij,kj->k", bits, adj, 1 - bits)
        cut = inner[:, None] + bits @ Bs.T
        vol = bits @ deg.T
        hs.append(np.min(cut / vol, axis=0))
    return SuiteResult(np.concatenate(lams), np.concatenate(hs), count)
