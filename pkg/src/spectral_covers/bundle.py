"""Flat orthogonal bundles over graphs and their connection Laplacians.

A bundle attaches ``R^d`` to every vertex and an orthogonal matrix
``O_uv`` to every stored edge ``(u, v)``; the reverse orientation uses
the transpose.  The connection Laplacian is

    (Delta f)(v) = (1/mu(v)) * sum_{u ~ v} w(uv) (f(v) - O_vu f(u)),

with ``O_vu`` transporting the fiber at ``u`` to the fiber at ``v``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy.linalg as la
import scipy.sparse as sp

from .errors import ConvergenceError, DomainError, GraphError
from .graph import WeightedGraph, cycle, format_graph, parse_graph
from .spectral import SpectralReport, symmetric_eigenpairs

ORTHO_TOL = 1e-12


def rotation(angle: float) -> np.ndarray:
    c, s = np.cos(angle), np.sin(angle)
    return np.array([[c, -s], [s, c]])


@dataclass(frozen=True, eq=False)
class GraphBundle:
    """Orthogonal connection on a graph; ``matrices[i]`` belongs to ``graph.edges[i]``."""

    graph: WeightedGraph
    dim: int
    matrices: np.ndarray = field(repr=False)

    def __post_init__(self):
        mats = np.array(self.matrices, dtype=float)
        m, d = self.graph.num_edges, self.dim
        if d < 1:
            raise GraphError("fiber dimension must be positive")
        if mats.shape != (m, d, d):
            raise GraphError(f"need {m} matrices of shape {d}x{d}, got {mats.shape}")
        gram = np.einsum("eji,ejk->eik", mats, mats)
        if m and np.max(np.abs(gram - np.eye(d))) > ORTHO_TOL * 10 * d:
            raise GraphError("connection matrices must be orthogonal")
        mats.setflags(write=False)
        object.__setattr__(self, "matrices", mats)

    @classmethod
    def trivial(cls, graph: WeightedGraph, dim: int) -> "GraphBundle":
        return cls(graph, dim, np.broadcast_to(np.eye(dim), (graph.num_edges, dim, dim)))

    def transport(self, edge: int, reverse: bool = False) -> np.ndarray:
        """O_uv for the stored orientation (u, v), or O_vu when ``reverse``."""
        o = self.matrices[edge]
        return o.T if reverse else o

    @property
    def laplacian(self) -> sp.csr_matrix:
        """Block matrix of sum_v w (f(v) - O f(u)) before dividing by mu."""
        g, d = self.graph, self.dim
        rows, cols, vals = [], [], []
        eye = np.eye(d)
        blk_r, blk_c = np.meshgrid(np.arange(d), np.arange(d), indexing="ij")

        def put(i, j, block):
            rows.append((i * d + blk_r).ravel())
            cols.append((j * d + blk_c).ravel())
            vals.append(block.ravel())

        for (u, v), w, o in zip(g.edges, g.weights, self.matrices):
            if u == v:
                put(u, u, w * (2 * eye - o - o.T))
                continue
            put(u, u, w * eye)
            put(v, v, w * eye)
            put(u, v, -w * o)
            put(v, u, -w * o.T)
        n = g.n * d
        if not rows:
            return sp.csr_matrix((n, n))
        return sp.coo_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                             shape=(n, n)).tocsr()

    def free_indices(self) -> np.ndarray:
        free = np.flatnonzero(~self.graph.boundary_mask)
        return (free[:, None] * self.dim + np.arange(self.dim)).ravel()

    def symmetric_matrix(self, potential=None) -> sp.csr_matrix:
        """M^{-1/2} (L + V M) M^{-1/2} on the unmasked fibers."""
        g, d = self.graph, self.dim
        mu = np.repeat(np.asarray(g.vertex_measure, dtype=float), d)
        a = self.laplacian
        if potential is not None:
            a = a + sp.diags(np.repeat(np.asarray(potential, dtype=float), d) * mu)
        s = sp.diags(1.0 / np.sqrt(mu))
        idx = self.free_indices()
        return (s @ a @ s).tocsr()[idx][:, idx].tocsr()

    def norm(self, section) -> float:
        """l^2(mu) norm of a section given as an (n, d) array."""
        f = np.asarray(section, dtype=float).reshape(self.graph.n, self.dim)
        return float(np.sqrt(np.sum(self.graph.vertex_measure * np.sum(f * f, axis=1))))

    def energy(self, section) -> float:
        """sum over edges of w |f(u) - O_uv f(v)|^2."""
        f = np.asarray(section, dtype=float).reshape(self.graph.n, self.dim)
        e = self.graph.edges
        diff = f[e[:, 0]] - np.einsum("eij,ej->ei", self.matrices, f[e[:, 1]])
        return float(np.sum(self.graph.weights * np.sum(diff * diff, axis=1)))


# ---------------------------------------------------------------- cycles

def build_cycle_connection(n: int, total_angle: float) -> GraphBundle:
    """C_n with every edge (i, i+1) rotating by total_angle / n."""
    if n < 3:
        raise DomainError("need n >= 3")
    g = cycle(n)
    return GraphBundle(g, 2, np.broadcast_to(rotation(total_angle / n), (g.num_edges, 2, 2)))


def cycle_holonomy(bundle: GraphBundle, vertices) -> np.ndarray:
    """Product of transports around the closed vertex walk ``vertices``.

    The result maps the fiber at ``vertices[0]`` to itself after going
    once around.
    """
    g = bundle.graph
    lookup = {}
    for i, (u, v) in enumerate(g.edges):
        lookup.setdefault((int(u), int(v)), (i, False))
        lookup.setdefault((int(v), int(u)), (i, True))
    walk = list(vertices) + [vertices[0]]
    h = np.eye(bundle.dim)
    for a, b in zip(walk[:-1], walk[1:]):
        if (a, b) not in lookup:
            raise DomainError(f"({a}, {b}) is not an edge")
        i, rev = lookup[(a, b)]
        h = h @ bundle.transport(i, rev)
    return h


def parallel_section_dimension(bundle: GraphBundle, tol: float = 1e-9) -> int:
    """Dimension of the space of parallel sections (f(u) = O_uv f(v) on every edge).

    Parallel transport along a spanning tree fixes a section from its
    value at vertex 0; every other edge then imposes a linear condition.
    """
    g, d = bundle.graph, bundle.dim
    if g.boundary_mask.any():
        return 0
    frame = [None] * g.n
    frame[0] = np.eye(d)
    nbrs = [[] for _ in range(g.n)]
    for i, (u, v) in enumerate(g.edges):
        nbrs[u].append((int(v), i, False))
        nbrs[v].append((int(u), i, True))
    order = [0]
    for x in order:
        for y, i, rev in nbrs[x]:
            if frame[y] is None:
                # f(x) = O_xy f(y)  =>  f(y) = O_xy^T f(x)
                frame[y] = bundle.transport(i, rev).T @ frame[x]
                order.append(y)
    rows = []
    for i, (u, v) in enumerate(g.edges):
        rows.append(frame[u] - bundle.matrices[i] @ frame[v])
    if not rows:
        return d
    stack = np.vstack(rows)
    sv = la.svdvals(stack)
    return int(d - np.sum(sv > tol))


def connection_lambda0(bundle: GraphBundle, potential=None, tol: float = 1e-10, method: str = "auto"):
    """Bottom of the connection Laplacian; returns ``(lambda0, SpectralReport)``."""
    a = bundle.symmetric_matrix(potential)
    if a.shape[0] == 0:
        raise DomainError("bundle has no free fibers")
    lb = 0.0 if potential is None else float(np.min(potential))
    vals, vecs, res, its, used, ok = symmetric_eigenpairs(a, 1, tol, method, lower_bound=lb)
    rep = SpectralReport(np.asarray(vals), vecs, np.asarray(res), its, tol, used, ok)
    if not ok:
        raise ConvergenceError("connection Laplacian solve did not converge", rep)
    return float(vals[0]), rep


def pullback(cover, bundle: GraphBundle) -> GraphBundle:
    """Each lifted edge carries the matrix of the base edge it covers."""
    if bundle.graph is not cover.base:
        if bundle.graph.n != cover.base.n or not np.array_equal(bundle.graph.edges, cover.base.edges):
            raise DomainError("bundle does not live on the cover's base")
    return GraphBundle(cover.total, bundle.dim, bundle.matrices[cover.edge_projection])


@dataclass
class HolonomyReport:
    n: int
    q: int
    angle: float
    base_lambda0: float
    cover_lambda0: float
    formula: float
    control_base: float
    control_cover: float

    @property
    def gap(self) -> float:
        return self.base_lambda0 - self.cover_lambda0

    def summary(self) -> dict:
        return {"n": self.n, "q": self.q, "angle": self.angle, "base_lambda0": self.base_lambda0,
                "cover_lambda0": self.cover_lambda0, "formula": self.formula, "gap": self.gap,
                "control_base": self.control_base, "control_cover": self.control_cover}


def cycle_connection_formula(n: int, angle: float) -> float:
    """min_k 2 - 2 cos((angle + 2 pi k) / n) for the unit-weight cycle."""
    k = np.arange(n)
    return float(np.min(2 - 2 * np.cos((angle + 2 * np.pi * k) / n)))


def holonomy_gap_experiment(n: int, q: int) -> HolonomyReport:
    """Base C_n with holonomy 2 pi / q against its q-fold cyclic cover C_{qn}.

    The lifted holonomy is a full turn, so the cover gains a parallel
    section while the base has none.  The control uses angle 2 pi.
    """
    from .covering import standard_cover

    if n < 3 or q < 1:
        raise DomainError("need n >= 3 and q >= 1")
    angle = 2 * np.pi / q
    cover = standard_cover("cyclic", m=n, q=q)
    base = build_cycle_connection(n, angle)
    b0, _ = connection_lambda0(base)
    c0, _ = connection_lambda0(pullback(cover, base))
    ctrl = build_cycle_connection(n, 2 * np.pi)
    cb, _ = connection_lambda0(ctrl)
    cc, _ = connection_lambda0(pullback(cover, ctrl))
    return HolonomyReport(n, q, angle, b0, c0, cycle_connection_formula(n, angle), cb, cc)


# ---------------------------------------------------------------- files

def format_bundle(bundle: GraphBundle, potential=None) -> str:
    lines = [format_graph(bundle.graph, potential).rstrip("\n"), f"dim {bundle.dim}"]
    for (u, v), o in zip(bundle.graph.edges, bundle.matrices):
        lines.append(f"conn {u} {v} " + " ".join(repr(float(x)) for x in o.ravel()))
    return "\n".join(lines) + "\n"


def parse_bundle(text: str):
    """Graph file plus ``dim d`` and ``conn u v <d*d row-major entries>`` lines.

    Edges without a ``conn`` line carry the identity.  Returns
    ``(bundle, potential)``.
    """
    conns, dims = [], []

    def extra(tok):
        if tok[0] == "conn":
            conns.append((int(tok[1]), int(tok[2]), [float(x) for x in tok[3:]]))
        elif tok[0] == "dim":
            dims.append(int(tok[1]))
        else:
            raise GraphError(f"unknown record {tok[0]!r}")

    graph, pot = parse_graph(text, extra)
    if dims:
        d = dims[-1]
    elif conns:
        d = int(round(np.sqrt(len(conns[0][2]))))
    else:
        raise GraphError("bundle file needs a dim line or conn lines")
    mats = np.broadcast_to(np.eye(d), (graph.num_edges, d, d)).copy()
    unused = {}
    for i, (u, v) in enumerate(graph.edges):
        unused.setdefault((int(u), int(v)), []).append((i, False))
        if u != v:
            unused.setdefault((int(v), int(u)), []).append((i, True))
    taken = set()
    for u, v, vals in conns:
        if len(vals) != d * d:
            raise GraphError(f"conn {u} {v} needs {d * d} entries")
        slots = [s for s in unused.get((u, v), []) if s[0] not in taken]
        if not slots:
            raise GraphError(f"conn {u} {v} does not match an unassigned edge")
        i, rev = slots[0]
        taken.add(i)
        o = np.array(vals).reshape(d, d)
        mats[i] = o.T if rev else o
    return GraphBundle(graph, d, mats), pot


def read_bundle(path):
    return parse_bundle(Path(path).read_text())


def write_bundle(path, bundle: GraphBundle, potential=None):
    Path(path).write_text(format_bundle(bundle, potential))
