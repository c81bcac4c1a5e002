"""Weighted graphs and graph Schrodinger operators.

A :class:`WeightedGraph` carries edge weights (conductances), a vertex
measure and an optional Dirichlet mask.  Distances are always the
unweighted hop metric.  A :class:`SchrodingerOp` acts by

    (S f)(v) = (1/mu(v)) * sum_{u ~ v} w(uv) (f(v) - f(u)) + V(v) f(v)

on functions vanishing on the mask.  Masked vertices are removed from
the state space, but edges into the mask still contribute to the
diagonal.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path

import numpy as np
import scipy.sparse as sp
from scipy.sparse import csgraph

from .errors import DomainError, GraphError

UNREACHABLE = 2**62

CONVENTIONS = ("combinatorial", "normalized", "custom")


def _as_vector(value, n, what):
    arr = np.asarray(value, dtype=float)
    if arr.ndim == 0:
        arr = np.full(n, float(arr))
    if arr.shape != (n,):
        raise GraphError(f"{what} must have length {n}, got shape {arr.shape}")
    return arr


def _frozen(arr):
    arr = np.array(arr, copy=True)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class WeightedGraph:
    """Connected vertex-measured, edge-weighted graph.

    ``edges`` is an ``(m, 2)`` integer array.  Self-loops and parallel
    edges are rejected unless ``multigraph`` is set; they only make
    sense in base graphs of voltage constructions.
    """

    n: int
    edges: np.ndarray
    weights: np.ndarray
    vertex_measure: np.ndarray
    boundary_mask: np.ndarray
    name: str = "graph"
    multigraph: bool = False
    labels: tuple | None = field(default=None, repr=False)

    def __post_init__(self):
        n = int(self.n)
        if n < 1:
            raise GraphError("a graph needs at least one vertex")
        edges = np.asarray(self.edges, dtype=np.int64).reshape(-1, 2)
        m = len(edges)
        weights = _as_vector(self.weights, m, "weights")
        measure = _as_vector(self.vertex_measure, n, "vertex_measure")
        mask = np.zeros(n, dtype=bool)
        bm = np.asarray(self.boundary_mask)
        if bm.dtype == bool:
            if bm.shape != (n,):
                raise GraphError("boundary_mask must be a boolean vector of length n")
            mask = bm.copy()
        elif bm.size:
            mask[bm.astype(np.int64)] = True
        if m and (edges.min() < 0 or edges.max() >= n):
            raise GraphError("edge endpoint out of range")
        if not np.all(np.isfinite(weights)) or np.any(weights <= 0):
            raise GraphError("edge weights must be positive and finite")
        if not np.all(np.isfinite(measure)) or np.any(measure <= 0):
            raise GraphError("vertex measures must be positive and finite")
        if not self.multigraph and m:
            if np.any(edges[:, 0] == edges[:, 1]):
                raise GraphError("self-loops are only allowed in multigraph mode")
            key = np.sort(edges, axis=1)
            if len(np.unique(key, axis=0)) != m:
                raise GraphError("duplicate edge")
        if self.labels is not None and len(self.labels) != n:
            raise GraphError("labels must have one entry per vertex")
        object.__setattr__(self, "n", n)
        object.__setattr__(self, "edges", _frozen(edges))
        object.__setattr__(self, "weights", _frozen(weights))
        object.__setattr__(self, "vertex_measure", _frozen(measure))
        object.__setattr__(self, "boundary_mask", _frozen(mask))
        if n > 1:
            ncomp, _ = csgraph.connected_components(self.hop_adjacency, directed=False)
            if ncomp != 1:
                raise GraphError(f"graph {self.name!r} is disconnected ({ncomp} components)")

    @property
    def num_edges(self) -> int:
        return len(self.edges)

    @cached_property
    def hop_adjacency(self) -> sp.csr_matrix:
        """0/1 adjacency of the simple graph underlying the edge list (loops dropped)."""
        e = self.edges[self.edges[:, 0] != self.edges[:, 1]]
        rows = np.concatenate([e[:, 0], e[:, 1]])
        cols = np.concatenate([e[:, 1], e[:, 0]])
        a = sp.csr_matrix((np.ones(len(rows)), (rows, cols)), shape=(self.n, self.n))
        a.data[:] = 1.0
        return a

    @cached_property
    def weight_matrix(self) -> sp.csr_matrix:
        """Symmetric matrix of summed edge weights between distinct vertices."""
        e = self.edges
        keep = e[:, 0] != e[:, 1]
        e, w = e[keep], self.weights[keep]
        rows = np.concatenate([e[:, 0], e[:, 1]])
        cols = np.concatenate([e[:, 1], e[:, 0]])
        return sp.csr_matrix((np.concatenate([w, w]), (rows, cols)), shape=(self.n, self.n))

    @cached_property
    def weighted_degree(self) -> np.ndarray:
        """Sum of incident weights, a loop counting twice."""
        deg = np.zeros(self.n)
        np.add.at(deg, self.edges[:, 0], self.weights)
        np.add.at(deg, self.edges[:, 1], self.weights)
        deg.setflags(write=False)
        return deg

    def distances(self, sources, limit: int | None = None) -> np.ndarray:
        """Hop distance to the nearest source; ``UNREACHABLE`` beyond ``limit``."""
        src = np.atleast_1d(np.asarray(sources, dtype=np.int64))
        if src.size == 0:
            return np.full(self.n, UNREACHABLE, dtype=np.int64)
        lim = np.inf if limit is None else float(limit) + 0.5
        d = csgraph.dijkstra(self.hop_adjacency, directed=False, indices=src,
                             unweighted=True, min_only=True, limit=lim)
        out = np.full(self.n, UNREACHABLE, dtype=np.int64)
        ok = np.isfinite(d)
        out[ok] = d[ok].astype(np.int64)
        return out

    def with_mask(self, mask) -> "WeightedGraph":
        return WeightedGraph(self.n, self.edges, self.weights, self.vertex_measure,
                             np.asarray(mask, dtype=bool), self.name, self.multigraph, self.labels)

    def with_measure(self, measure) -> "WeightedGraph":
        return WeightedGraph(self.n, self.edges, self.weights, measure,
                             self.boundary_mask, self.name, self.multigraph, self.labels)


class VertexFunction:
    """Real values per vertex with a cached support."""

    __slots__ = ("values", "_support")

    def __init__(self, values):
        self.values = np.asarray(values, dtype=float)
        self._support = None

    def __array__(self, dtype=None, copy=None):
        return self.values if dtype is None else self.values.astype(dtype)

    def __len__(self):
        return len(self.values)

    @property
    def support(self) -> np.ndarray:
        if self._support is None:
            self._support = np.flatnonzero(self.values)
        return self._support

    def norm(self, measure) -> float:
        return float(np.sqrt(np.sum(self.values**2 * measure)))


@dataclass(frozen=True, eq=False)
class SchrodingerOp:
    """Graph Schrodinger operator with a Dirichlet mask.

    ``convention`` picks the measure: ``combinatorial`` uses mu = 1,
    ``normalized`` uses the weighted degree and ``custom`` uses the
    graph's own ``vertex_measure``.  ``dirichlet`` defaults to the
    graph's boundary mask.
    """

    graph: WeightedGraph
    potential: np.ndarray | None = None
    convention: str = "custom"
    dirichlet: np.ndarray | None = None

    def __post_init__(self):
        g = self.graph
        if self.convention not in CONVENTIONS:
            raise GraphError(f"unknown convention {self.convention!r}")
        pot = np.zeros(g.n) if self.potential is None else _as_vector(self.potential, g.n, "potential")
        if not np.all(np.isfinite(pot)):
            raise GraphError("potential must be finite")
        mask = g.boundary_mask if self.dirichlet is None else np.asarray(self.dirichlet, dtype=bool)
        if mask.shape != (g.n,):
            raise GraphError("dirichlet mask has the wrong length")
        object.__setattr__(self, "potential", _frozen(pot))
        object.__setattr__(self, "dirichlet", _frozen(mask))

    @cached_property
    def measure(self) -> np.ndarray:
        g = self.graph
        if self.convention == "combinatorial":
            mu = np.ones(g.n)
        elif self.convention == "normalized":
            mu = np.array(g.weighted_degree, dtype=float)
            if np.any(mu <= 0):
                raise GraphError("normalized convention needs positive degrees")
        else:
            mu = np.array(g.vertex_measure, dtype=float)
        mu.setflags(write=False)
        return mu

    @cached_property
    def free(self) -> np.ndarray:
        """Indices of unmasked vertices, the state space of the operator."""
        return np.flatnonzero(~self.dirichlet)

    @property
    def dim(self) -> int:
        return len(self.free)

    @cached_property
    def _laplacian_parts(self):
        w = self.graph.weight_matrix
        deg = np.asarray(w.sum(axis=1)).ravel()
        idx = self.free
        return w[idx][:, idx].tocsr(), deg[idx]

    @cached_property
    def matrix(self) -> sp.csr_matrix:
        """S restricted to free vertices (not symmetric unless mu is constant)."""
        w, deg = self._laplacian_parts
        mu = self.measure[self.free]
        lap = (sp.diags(deg) - w).tocsr()
        return (sp.diags(1.0 / mu) @ lap + sp.diags(self.potential[self.free])).tocsr()

    @cached_property
    def symmetric_matrix(self) -> sp.csr_matrix:
        """M^{1/2} S M^{-1/2} on free vertices; Euclidean-symmetric, same spectrum."""
        w, deg = self._laplacian_parts
        s = 1.0 / np.sqrt(self.measure[self.free])
        a = sp.diags(deg * s * s + self.potential[self.free]) - sp.diags(s) @ w @ sp.diags(s)
        return a.tocsr()

    def check_domain(self, f) -> np.ndarray:
        f = np.asarray(f, dtype=float)
        if f.shape != (self.graph.n,):
            raise DomainError(f"function must have length {self.graph.n}")
        if np.any(f[self.dirichlet] != 0):
            raise DomainError("function is nonzero on the Dirichlet mask")
        return f

    def to_free(self, f) -> np.ndarray:
        return self.check_domain(f)[self.free]

    def from_free(self, x) -> np.ndarray:
        out = np.zeros(self.graph.n, dtype=np.result_type(x, float))
        out[self.free] = x
        return out

    def inner(self, f, g) -> float:
        return float(np.sum(np.asarray(f) * np.asarray(g) * self.measure))

    def norm(self, f) -> float:
        return float(np.sqrt(self.inner(f, f)))


def apply(op: SchrodingerOp, f) -> np.ndarray:
    """Return S f as a full-length vector (zero on the mask)."""
    x = op.to_free(f)
    return op.from_free(op.matrix @ x)


def quadratic_form(op: SchrodingerOp, f) -> float:
    """<S f, f> in l^2(mu)."""
    f = op.check_domain(f)
    return op.inner(apply(op, f), f)


def edge_energy(op: SchrodingerOp, f) -> float:
    """Edge-sum expression sum_e w |df|^2 + sum_v V f^2 mu."""
    f = op.check_domain(f)
    e = op.graph.edges
    diff = f[e[:, 0]] - f[e[:, 1]]
    return float(np.sum(op.graph.weights * diff**2) + np.sum(op.potential * f**2 * op.measure))


def ball(graph: WeightedGraph, center: int, r: int) -> np.ndarray:
    """Sorted vertices within hop distance r of ``center``."""
    if not 0 <= center < graph.n:
        raise GraphError("center is not a vertex")
    d = graph.distances(center, limit=r)
    return np.flatnonzero(d <= r)


def induced_dirichlet(base, keep) -> SchrodingerOp:
    """Dirichlet operator on ``keep``; everything else joins the mask.

    ``base`` is a graph (plain Laplacian with its own measure) or a
    :class:`SchrodingerOp` whose potential and convention carry over.
    """
    op = base if isinstance(base, SchrodingerOp) else SchrodingerOp(base)
    keep = np.asarray(keep)
    inside = np.zeros(op.graph.n, dtype=bool)
    if keep.dtype == bool:
        inside[:] = keep
    else:
        inside[keep.astype(np.int64)] = True
    if not inside.any():
        raise DomainError("keep set is empty")
    mask = op.dirichlet | ~inside
    if mask.all():
        raise DomainError("keep set lies entirely in the Dirichlet mask")
    return SchrodingerOp(op.graph, op.potential, op.convention, mask)


# ---------------------------------------------------------------- builders

def from_edges(n, edges, weights=1.0, measure=1.0, boundary=(), name="graph",
               multigraph=False) -> WeightedGraph:
    edges = np.asarray(edges, dtype=np.int64).reshape(-1, 2)
    return WeightedGraph(n, edges, _as_vector(weights, len(edges), "weights"),
                         measure, np.asarray(boundary), name, multigraph)


def cycle(n, w=1.0, mu=1.0) -> WeightedGraph:
    if n < 3:
        raise GraphError("a cycle needs at least 3 vertices")
    v = np.arange(n)
    return from_edges(n, np.column_stack([v, (v + 1) % n]), w, mu, name=f"C{n}")


def path(n, w=1.0, mu=1.0, dirichlet_ends=False) -> WeightedGraph:
    if n < 1:
        raise GraphError("a path needs at least 1 vertex")
    v = np.arange(n - 1)
    bnd = [0, n - 1] if dirichlet_ends else []
    return from_edges(n, np.column_stack([v, v + 1]), w, mu, bnd, name=f"P{n}")


def grid(rows, cols, w=1.0, mu=1.0, dirichlet_border=False) -> WeightedGraph:
    idx = np.arange(rows * cols).reshape(rows, cols)
    horiz = np.column_stack([idx[:, :-1].ravel(), idx[:, 1:].ravel()])
    vert = np.column_stack([idx[:-1, :].ravel(), idx[1:, :].ravel()])
    bnd = []
    if dirichlet_border:
        border = np.zeros((rows, cols), dtype=bool)
        border[[0, -1], :] = True
        border[:, [0, -1]] = True
        bnd = idx[border]
    return from_edges(rows * cols, np.vstack([horiz, vert]), w, mu, bnd, name=f"grid{rows}x{cols}")


def regular_tree(degree, depth, w=1.0, mu=1.0) -> WeightedGraph:
    """Ball of radius ``depth`` in the ``degree``-regular tree, root 0, BFS order."""
    if degree < 2 or depth < 0:
        raise GraphError("need degree >= 2 and depth >= 0")
    edges = []
    level = [0]
    nxt = 1
    for k in range(depth):
        children = degree if k == 0 else degree - 1
        new_level = []
        for parent in level:
            for _ in range(children):
                edges.append((parent, nxt))
                new_level.append(nxt)
                nxt += 1
        level = new_level
    return from_edges(nxt, np.array(edges, dtype=np.int64).reshape(-1, 2), w, mu,
                      name=f"T{degree}_{depth}")


def bouquet(loops, w=1.0, mu=1.0) -> WeightedGraph:
    """One vertex with ``loops`` self-loops (a base graph for voltage covers)."""
    return from_edges(1, np.zeros((loops, 2), dtype=np.int64), w, mu,
                      name=f"bouquet{loops}", multigraph=True)


_BUILDERS = {"cycle": cycle, "path": path, "grid": grid, "tree": regular_tree,
             "bouquet": bouquet, "edges": from_edges}


def build_graph(kind: str, **params) -> WeightedGraph:
    """Dispatch to a named builder: cycle, path, grid, tree, bouquet or edges."""
    try:
        builder = _BUILDERS[kind]
    except KeyError:
        raise GraphError(f"unknown graph kind {kind!r}") from None
    return builder(**params)


# ---------------------------------------------------------------- text format

def format_graph(graph: WeightedGraph, potential=None) -> str:
    pot = np.zeros(graph.n) if potential is None else np.asarray(potential, dtype=float)
    name = "_".join(graph.name.split()) or "graph"
    lines = [f"graph {name} {graph.n} {graph.num_edges}"]
    for v in range(graph.n):
        lines.append(f"v {v} {float(graph.vertex_measure[v])!r} {float(pot[v])!r} {int(graph.boundary_mask[v])}")
    for (u, v), w in zip(graph.edges, graph.weights):
        lines.append(f"e {u} {v} {float(w)!r}")
    return "\n".join(lines) + "\n"


def _data_lines(text):
    for raw in text.splitlines():
        line = raw.split("#", 1)[0].strip()
        if line:
            yield line.split()


def parse_graph(text: str, extra=None):
    """Parse the line format; returns ``(graph, potential)``.

    ``extra`` is an optional callback receiving token lists of unknown
    record types (used by the bundle format).
    """
    header = None
    verts = {}
    edges, weights = [], []
    for tok in _data_lines(text):
        kind = tok[0]
        try:
            if kind == "graph":
                header = (tok[1], int(tok[2]), int(tok[3]))
            elif kind == "v":
                verts[int(tok[1])] = (float(tok[2]), float(tok[3]), tok[4] == "1")
            elif kind == "e":
                edges.append((int(tok[1]), int(tok[2])))
                weights.append(float(tok[3]))
            elif extra is not None:
                extra(tok)
            else:
                raise GraphError(f"unknown record {kind!r}")
        except (IndexError, ValueError) as exc:
            if isinstance(exc, GraphError):
                raise
            raise GraphError(f"malformed line: {' '.join(tok)}") from exc
    if header is None:
        raise GraphError("missing graph header")
    name, nv, ne = header
    if sorted(verts) != list(range(nv)):
        raise GraphError("vertex records must cover 0..nV-1")
    if len(edges) != ne:
        raise GraphError(f"header announces {ne} edges, found {len(edges)}")
    mu = np.array([verts[v][0] for v in range(nv)])
    pot = np.array([verts[v][1] for v in range(nv)])
    bnd = np.array([verts[v][2] for v in range(nv)], dtype=bool)
    e = np.array(edges, dtype=np.int64).reshape(-1, 2)
    multi = bool(len(e)) and (np.any(e[:, 0] == e[:, 1])
                              or len(np.unique(np.sort(e, axis=1), axis=0)) != len(e))
    graph = WeightedGraph(nv, e, np.array(weights), mu, bnd, name, multi)
    return graph, pot


def read_graph(path):
    return parse_graph(Path(path).read_text())


def write_graph(path, graph, potential=None):
    Path(path).write_text(format_graph(graph, potential))
