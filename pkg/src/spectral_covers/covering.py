"""Permutation-voltage coverings of weighted graphs.

A base graph with a spanning tree and one generator per remaining edge
(chord) determines a covering: the vertex ``(v, x)`` is joined along a
base edge ``e = (a, b)`` with voltage ``g`` to ``(b, x.g)``.  Fibers are
either an explicit finite set ``{0..n-1}`` acted on by permutations, or
lazy sets (Z, Z^2, a free group) explored breadth first out to a
truncation radius.  Vertices of the truncated total space that still
have undiscovered neighbours are flagged as frontier.
"""
from __future__ import annotations

import re
from collections import deque
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import CoverError, DomainError
from .graph import SchrodingerOp, WeightedGraph, bouquet, build_graph, cycle, read_graph

RULES = ("z-shift", "z2-shift-a", "z2-shift-b", "free-left-mult")


# ---------------------------------------------------------------- fiber actions

def parse_cycles(text: str, size: int | None = None) -> np.ndarray:
    """Permutation array from cycle notation such as ``(0 1 2)(3 4)``."""
    cycles = re.findall(r"\(([^()]*)\)", text)
    if re.sub(r"\([^()]*\)", "", text).strip():
        raise CoverError(f"bad cycle notation: {text!r}")
    pts = [[int(t) for t in c.replace(",", " ").split()] for c in cycles]
    top = max((max(c) for c in pts if c), default=-1) + 1
    n = top if size is None else size
    if n < top:
        raise CoverError("cycle mentions a point outside the fiber")
    perm = np.arange(n)
    seen = set()
    for c in pts:
        for i, p in enumerate(c):
            if p in seen or p < 0:
                raise CoverError(f"point {p} repeated in {text!r}")
            seen.add(p)
            perm[p] = c[(i + 1) % len(c)]
    return perm


@dataclass(frozen=True)
class Generator:
    """A named bijection of the fiber, a permutation or a builtin rule."""

    name: str
    kind: str
    perm: np.ndarray | None = None
    rule: str | None = None
    letter: int = 0

    def __post_init__(self):
        if self.perm is not None:
            fwd = [int(t) for t in self.perm]
            inv = [0] * len(fwd)
            for i, t in enumerate(fwd):
                inv[t] = i
            object.__setattr__(self, "_fwd", fwd)
            object.__setattr__(self, "_inv", inv)

    def forward(self, x):
        if self.perm is not None:
            return self._fwd[x]
        return _rule_move(self.rule, self.letter, x, 1)

    def backward(self, x):
        if self.perm is not None:
            return self._inv[x]
        return _rule_move(self.rule, self.letter, x, -1)

    def move(self, x, sign):
        return self.forward(x) if sign > 0 else self.backward(x)


def _rule_move(rule, letter, x, sign):
    if rule == "z-shift":
        return x + sign
    if rule == "z2-shift-a":
        return (x[0] + sign, x[1])
    if rule == "z2-shift-b":
        return (x[0], x[1] + sign)
    if rule == "free-left-mult":
        code = letter * sign
        if x and x[0] == -code:
            return x[1:]
        return (code,) + x
    raise CoverError(f"unknown rule {rule!r}")


_RULE_BASEPOINT = {"z-shift": 0, "z2-shift-a": (0, 0), "z2-shift-b": (0, 0), "free-left-mult": ()}
_RULE_FAMILY = {"z-shift": "z", "z2-shift-a": "z2", "z2-shift-b": "z2", "free-left-mult": "free"}


class FiberAction:
    """Named generators acting on a finite or lazily explored fiber."""

    def __init__(self, generators, size=None, basepoint=None):
        self.generators = {g.name: g for g in generators}
        self.size = size
        if size is None:
            families = {_RULE_FAMILY[g.rule] for g in generators}
            if len(families) > 1:
                raise CoverError(f"incompatible rules mixed: {sorted(families)}")
            if basepoint is None:
                basepoint = _RULE_BASEPOINT[generators[0].rule] if generators else 0
        elif basepoint is None:
            basepoint = 0
        self.basepoint = basepoint
        self._letter_names = {g.letter: g.name for g in generators if g.rule == "free-left-mult"}

    @classmethod
    def from_perms(cls, perms: dict, size=None):
        """``perms`` maps names to permutation arrays or cycle strings."""
        arrays = {}
        for name, p in perms.items():
            arr = parse_cycles(p, size) if isinstance(p, str) else np.asarray(p, dtype=np.int64)
            arrays[name] = arr
        sizes = {len(a) for a in arrays.values()}
        n = size if size is not None else max(sizes, default=1)
        gens = []
        for name, arr in arrays.items():
            if len(arr) < n:
                arr = np.concatenate([arr, np.arange(len(arr), n)])
            if len(arr) != n or sorted(arr.tolist()) != list(range(n)):
                raise CoverError(f"generator {name!r} is not a bijection of {{0..{n - 1}}}")
            arr = arr.copy()
            arr.setflags(write=False)
            gens.append(Generator(name, "perm", perm=arr))
        return cls(gens, size=n)

    @classmethod
    def from_rules(cls, rules: dict):
        """``rules`` maps names to builtin rule names."""
        gens = []
        for i, (name, rule) in enumerate(rules.items()):
            if rule not in RULES:
                raise CoverError(f"unknown rule {rule!r}; choose from {RULES}")
            gens.append(Generator(name, "rule", rule=rule, letter=i + 1))
        return cls(gens)

    @property
    def is_finite(self):
        return self.size is not None

    def move(self, x, name, sign=1):
        return self.generators[name].move(x, sign)

    def apply_word(self, x, word):
        """Apply ``word`` (sequence of ``(name, sign)``) left to right."""
        for name, sign in word:
            x = self.generators[name].move(x, sign)
        return x

    def format_label(self, x) -> str:
        if isinstance(x, tuple) and (not x or isinstance(x[0], (int, np.integer))) and self._letter_names:
            if not x:
                return "e"
            return ".".join(self._letter_names[abs(c)] + ("" if c > 0 else "^-1") for c in x)
        if isinstance(x, tuple):
            return ",".join(str(int(c)) for c in x)
        return str(x)


def parse_voltage(token) -> tuple | None:
    """``'a'`` -> ('a', 1), ``'a^-1'`` -> ('a', -1), ``'id'`` -> None."""
    if token is None:
        return None
    if isinstance(token, tuple):
        return token
    token = str(token).strip()
    if token in ("id", "1", "e"):
        return None
    if token.endswith("^-1"):
        return (token[:-3], -1)
    return (token, 1)


# ---------------------------------------------------------------- the cover

@dataclass(eq=False)
class CoveringGraph:
    """Truncated total space of a voltage covering.

    Vertex ``i`` of ``total`` is ``(projection[i], labels[i])``; vertex 0
    is the root over ``basepoint``.  ``depth`` is the hop distance from
    the root and ``frontier`` marks vertices with missing neighbours.
    """

    base: WeightedGraph
    action: FiberAction
    total: WeightedGraph
    projection: np.ndarray
    labels: list
    edge_projection: np.ndarray
    frontier: np.ndarray
    depth: np.ndarray
    trunc: int | None
    basepoint: int
    tree_edges: tuple
    chords: tuple
    voltages: dict
    index: dict = field(repr=False, default_factory=dict)

    @property
    def root(self) -> int:
        return 0

    @property
    def is_finite(self) -> bool:
        return self.action.is_finite

    @property
    def interior(self) -> np.ndarray:
        return ~self.frontier

    def fiber(self, x: int | None = None) -> np.ndarray:
        """Discovered total vertices over base vertex ``x`` (BFS order)."""
        x = self.basepoint if x is None else x
        return np.flatnonzero(self.projection == x)

    def vertex(self, v, label) -> int:
        try:
            return self.index[(v, label)]
        except KeyError:
            raise CoverError(f"vertex ({v}, {label!r}) not discovered") from None

    def certified(self, radius: int) -> np.ndarray:
        """Vertices whose ``radius``-ball is fully discovered and frontier-free."""
        if self.trunc is None:
            return np.ones(self.total.n, dtype=bool)
        return self.depth + radius <= self.trunc - 1


def _spanning_tree(base: WeightedGraph, allowed: np.ndarray, root: int) -> list:
    adj = [[] for _ in range(base.n)]
    for i in np.flatnonzero(allowed):
        u, v = base.edges[i]
        if u != v:
            adj[u].append((i, v))
            adj[v].append((i, u))
    seen = {root}
    tree = []
    queue = deque([root])
    while queue:
        u = queue.popleft()
        for i, v in sorted(adj[u]):
            if v not in seen:
                seen.add(v)
                tree.append(i)
                queue.append(v)
    if len(seen) != base.n:
        raise CoverError("edges without voltage do not span the base graph")
    return tree


def lift_cover(base: WeightedGraph, voltages: dict, action: FiberAction, R_trunc=None,
               tree=None, basepoint: int = 0) -> CoveringGraph:
    """Build the (truncated) total space of a voltage covering.

    Parameters
    ----------
    voltages : dict
        Base edge index -> generator name, ``'name^-1'``, ``(name, sign)``
        or ``'id'``.  Every edge outside the spanning tree needs one.
    action : FiberAction
    R_trunc : int or None
        Breadth-first radius for lazy fibers; ignored for finite fibers.
    tree : sequence of edge indices, optional
        Spanning tree.  By default a BFS tree on the edges without a
        voltage entry.
    """
    volt = {int(e): parse_voltage(g) for e, g in voltages.items()}
    for e, g in volt.items():
        if not 0 <= e < base.num_edges:
            raise CoverError(f"voltage on unknown edge {e}")
        if g is not None and g[0] not in action.generators:
            raise CoverError(f"unknown generator {g[0]!r} on edge {e}")
    if tree is None:
        allowed = np.ones(base.num_edges, dtype=bool)
        allowed[list(volt)] = False
        tree = _spanning_tree(base, allowed, basepoint)
    tree = tuple(int(e) for e in tree)
    if len(tree) != base.n - 1 or len(set(tree)) != len(tree):
        raise CoverError("tree must have n-1 distinct edges")
    check = np.zeros(base.num_edges, dtype=bool)
    check[list(tree)] = True
    _spanning_tree(base, check, basepoint)
    for e in tree:
        if volt.get(e) is not None:
            raise CoverError(f"tree edge {e} carries a non-identity voltage")
    chords = tuple(e for e in range(base.num_edges) if e not in set(tree))
    for e in chords:
        if e not in volt:
            raise CoverError(f"missing voltage on non-tree edge {e}")
    finite = action.is_finite
    if not finite:
        if R_trunc is None or R_trunc < 0:
            raise CoverError("lazy fibers need R_trunc >= 0")
        R_trunc = int(R_trunc)
    else:
        R_trunc = None

    # incident edge ends: (edge, neighbour, generator, sign)
    ends = [[] for _ in range(base.n)]
    for i, (a, b) in enumerate(base.edges):
        g = volt.get(i)
        gen = None if g is None else action.generators[g[0]]
        sign = 0 if g is None else g[1]
        ends[a].append((i, int(b), gen, sign, True))
        ends[b].append((i, int(a), gen, -sign, False))

    def step(x, gen, sign):
        return x if gen is None else gen.move(x, sign)

    root = (int(basepoint), action.basepoint)
    index = {root: 0}
    keys = [root]
    depth = [0]
    queue = deque([0])
    while queue:
        i = queue.popleft()
        d = depth[i]
        if not finite and d >= R_trunc:
            continue
        v, x = keys[i]
        for _, nb, gen, sign, _ in ends[v]:
            key = (nb, step(x, gen, sign))
            if key not in index:
                index[key] = len(keys)
                keys.append(key)
                depth.append(d + 1)
                queue.append(index[key])
    n = len(keys)
    if finite and n != base.n * action.size:
        raise CoverError(f"lift is disconnected: component of the root has {n} of "
                         f"{base.n * action.size} vertices")

    proj = np.fromiter((k[0] for k in keys), dtype=np.int64, count=n)
    depth = np.asarray(depth, dtype=np.int64)
    frontier = np.zeros(n, dtype=bool)
    src, dst, eproj = [], [], []
    for i, (v, x) in enumerate(keys):
        for e, nb, gen, sign, fwd in ends[v]:
            j = index.get((nb, step(x, gen, sign)))
            if j is None:
                frontier[i] = True
            elif fwd:
                # each lifted edge is emitted once, from the lift of its tail
                src.append(i)
                dst.append(j)
                eproj.append(e)
    edges = np.column_stack([np.asarray(src, dtype=np.int64), np.asarray(dst, dtype=np.int64)])
    eproj = np.asarray(eproj, dtype=np.int64)
    if frontier.all():
        raise CoverError("R_trunc too small: every discovered vertex is frontier")
    for name, gen in action.generators.items():
        if gen.perm is None:
            continue
        if len(np.unique(gen.perm)) != len(gen.perm):
            raise CoverError(f"generator {name!r} is not a bijection")
    total = WeightedGraph(n, edges, base.weights[eproj], base.vertex_measure[proj],
                          base.boundary_mask[proj], f"{base.name}~", base.multigraph,
                          labels=None)
    labels = [k[1] for k in keys]
    volt_chords = {e: volt[e] for e in chords}
    return CoveringGraph(base, action, total, proj, labels, eproj, frontier, depth, R_trunc,
                         int(basepoint), tree, chords, volt_chords, index)


# ---------------------------------------------------------------- queries

@dataclass
class FundamentalDomains:
    center: int
    fiber: np.ndarray
    assignment: np.ndarray
    domains: dict

    def domain(self, y: int) -> np.ndarray:
        return self.domains[int(y)]


def _base_bfs_tree(base: WeightedGraph, x: int):
    """BFS order and parent edge per vertex (lowest edge index wins)."""
    adj = [[] for _ in range(base.n)]
    for i, (u, v) in enumerate(base.edges):
        if u != v:
            adj[u].append((i, int(v)))
            adj[v].append((i, int(u)))
    parent = {x: None}
    order = [x]
    queue = deque([x])
    while queue:
        u = queue.popleft()
        for i, v in sorted(adj[u]):
            if v not in parent:
                parent[v] = (i, u)
                order.append(v)
                queue.append(v)
    return order, parent


def fundamental_domains(cover: CoveringGraph, x: int | None = None) -> FundamentalDomains:
    """Nearest-fiber-point partition of the total space.

    Each vertex ``z`` is assigned the endpoint of the lift, starting at
    ``z``, of a fixed shortest path in the base from ``p(z)`` to ``x``.
    That endpoint is a nearest fiber point, and each domain maps
    bijectively onto the base.  Vertices whose lifted path leaves the
    discovered region get ``-1``.
    """
    x = cover.basepoint if x is None else int(x)
    fib = cover.fiber(x)
    assign = np.full(cover.total.n, -1, dtype=np.int64)
    assign[fib] = fib
    order, parent = _base_bfs_tree(cover.base, x)
    e = cover.total.edges
    ep = cover.edge_projection
    for v in order[1:]:
        pe, u = parent[v]
        sel = ep == pe
        a, b = cover.base.edges[pe]
        tails, heads = e[sel, 0], e[sel, 1]
        # tails lie over a, heads over b
        near, far = (heads, tails) if b == v else (tails, heads)
        assign[near] = assign[far]
    assign[cover.frontier] = -1
    domains = {int(y): np.flatnonzero(assign == y) for y in fib}
    return FundamentalDomains(x, fib, assign, domains)


def fiber_ball_multiplicity(cover: CoveringGraph, x: int | None, r: int) -> int:
    """max over certified z of #{y in p^-1(x) : d(z, y) <= r}."""
    if r < 0:
        raise DomainError("r must be non-negative")
    if cover.trunc is not None and r > cover.trunc:
        raise CoverError(f"r={r} exceeds R_trunc={cover.trunc}")
    x = cover.basepoint if x is None else x
    counts = np.zeros(cover.total.n, dtype=np.int64)
    fib = cover.fiber(x)
    for chunk in np.array_split(fib, max(1, len(fib) // 64)):
        if not len(chunk):
            continue
        for y in chunk:
            d = cover.total.distances(int(y), limit=r)
            counts += d <= r
    region = cover.certified(r) & ~cover.frontier
    if not region.any():
        raise CoverError("no vertex has a fully discovered r-ball")
    return int(counts[region].max())


def preimage_in_domain(cover: CoveringGraph, K, y: int, r: int,
                       domains: FundamentalDomains | None = None) -> np.ndarray:
    """p^-1(K) intersected with D_y, checked to lie in ball(y, r)."""
    doms = domains or fundamental_domains(cover, int(cover.projection[y]))
    x = doms.center
    K = np.atleast_1d(np.asarray(K, dtype=np.int64))
    dbase = cover.base.distances(x, limit=r)
    if np.any(dbase[K] > r):
        raise DomainError("K is not contained in ball(x, r)")
    inK = np.zeros(cover.base.n, dtype=bool)
    inK[K] = True
    pts = np.flatnonzero(inK[cover.projection] & (doms.assignment == y))
    d = cover.total.distances(int(y), limit=r)
    if np.any(d[pts] > r):
        raise CoverError("preimage lemma violated: a point of p^-1(K) in D_y lies outside ball(y, r)")
    return pts


def lift_function(cover: CoveringGraph, f) -> np.ndarray:
    return np.asarray(f, dtype=float)[cover.projection]


def lift_operator(cover: CoveringGraph, op: SchrodingerOp) -> SchrodingerOp:
    """Lift with potential V o p; frontier vertices join the Dirichlet mask."""
    if op.graph is not cover.base and op.graph.n != cover.base.n:
        raise CoverError("operator does not live on the cover's base")
    mu = op.measure[cover.projection]
    total = cover.total
    if not np.array_equal(mu, total.vertex_measure):
        total = total.with_measure(mu)
    mask = op.dirichlet[cover.projection] | cover.frontier
    return SchrodingerOp(total, op.potential[cover.projection], "custom", mask)


# ---------------------------------------------------------------- walks

def darts(graph: WeightedGraph):
    """Dart arrays ``(tail, head, reverse)``; edge i gives darts 2i and 2i+1."""
    e = graph.edges
    m = len(e)
    tail = np.empty(2 * m, dtype=np.int64)
    head = np.empty(2 * m, dtype=np.int64)
    tail[0::2], head[0::2] = e[:, 0], e[:, 1]
    tail[1::2], head[1::2] = e[:, 1], e[:, 0]
    rev = np.arange(2 * m) ^ 1
    return tail, head, rev


def nonbacktracking_counts(graph: WeightedGraph | None, source: int, max_len: int,
                           dart_data=None, n: int | None = None) -> np.ndarray:
    """``N[l, v]`` = number of non-backtracking walks source -> v of length l.

    ``graph`` may be ``None`` when ``dart_data`` and ``n`` are given.
    """
    tail, head, rev = dart_data if dart_data is not None else darts(graph)
    n = graph.n if n is None else n
    out = np.zeros((max_len + 1, n), dtype=np.int64)
    out[0, source] = 1
    if max_len == 0:
        return out
    c = (tail == source).astype(np.int64)
    for length in range(1, max_len + 1):
        insum = np.bincount(head, weights=c, minlength=n).astype(np.int64)
        out[length] = insum
        if length < max_len:
            c = insum[tail] - c[rev]
    return out


def cardinality_estimate(cover: CoveringGraph, x: int | None, r: int, r0: int) -> dict:
    """Lift count from the universal cover, per fiber point.

    For ``u`` over ``y`` in the universal cover, counts lifts ``w`` of ``z``
    with ``d(w, u) <= r + r0 - 1``, i.e. non-backtracking walks of that
    length from ``y`` to ``z``.  Returns the maximum per certified fiber
    point and overall.
    """
    x = cover.basepoint if x is None else x
    length = r + r0 - 1
    if length < 0:
        raise DomainError("need r + r0 >= 1")
    data = darts(cover.total)
    per = {}
    ok = cover.certified(length)
    for y in cover.fiber(x):
        if not ok[y]:
            continue
        counts = nonbacktracking_counts(cover.total, int(y), length, data).sum(axis=0)
        per[int(y)] = int(counts.max())
    if not per:
        raise CoverError("no fiber point is deep enough for this radius")
    return {"per_fiber_point": per, "max": max(per.values()), "length": length}


# ---------------------------------------------------------------- spec files

def parse_cover_spec(text: str, base_dir: Path | str = ".") -> tuple:
    """Parse a cover spec; returns ``(cover, base_potential)``."""
    base = pot = None
    tree = None
    volts = {}
    perms, rules = {}, {}
    size = None
    trunc = None
    basepoint = 0
    for raw in text.splitlines():
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        tok = line.split()
        kind = tok[0]
        try:
            if kind == "base":
                if tok[1] == "builtin":
                    params = {}
                    for kv in tok[3:]:
                        k, v = kv.split("=", 1)
                        params[k] = float(v) if "." in v else int(v)
                    base = build_graph(tok[2], **params)
                    pot = np.zeros(base.n)
                else:
                    base, pot = read_graph(Path(base_dir) / tok[1])
            elif kind == "tree":
                tree = [int(t) for t in tok[1:]]
            elif kind == "voltage":
                volts[int(tok[1])] = tok[2]
            elif kind == "gen":
                name, how = tok[1], tok[2]
                if how == "perm":
                    perms[name] = " ".join(tok[3:])
                elif how == "rule":
                    rules[name] = tok[3]
                else:
                    raise CoverError(f"unknown generator kind {how!r}")
            elif kind == "fiber":
                size = int(tok[1])
            elif kind == "trunc":
                trunc = int(tok[1])
            elif kind == "basepoint":
                basepoint = int(tok[1])
            else:
                raise CoverError(f"unknown record {kind!r}")
        except (IndexError, ValueError) as exc:
            if isinstance(exc, CoverError):
                raise
            raise CoverError(f"malformed line: {line}") from exc
    if base is None:
        raise CoverError("missing base line")
    if perms and rules:
        raise CoverError("cannot mix perm and rule generators")
    action = FiberAction.from_perms(perms, size) if perms or size else FiberAction.from_rules(rules)
    return lift_cover(base, volts, action, trunc, tree, basepoint), pot


def read_cover_spec(path) -> tuple:
    path = Path(path)
    return parse_cover_spec(path.read_text(), path.parent)


# ---------------------------------------------------------------- standard examples

def standard_cover(kind: str, R_trunc: int | None = None, **params) -> CoveringGraph:
    """Frequently used covers.

    ``line``: Z over one loop.  ``z2``: Z^2 over two loops.  ``free``:
    the 4-regular tree over two loops.  ``cyclic``: the q-sheeted cover
    C_{qm} of C_m (``m``, ``q``).  ``zcycle``: Z over C_m (``m``).
    """
    if kind == "line":
        action = FiberAction.from_rules({"a": "z-shift"})
        return lift_cover(bouquet(1), {0: "a"}, action, R_trunc)
    if kind == "z2":
        action = FiberAction.from_rules({"a": "z2-shift-a", "b": "z2-shift-b"})
        return lift_cover(bouquet(2), {0: "a", 1: "b"}, action, R_trunc)
    if kind == "free":
        action = FiberAction.from_rules({"a": "free-left-mult", "b": "free-left-mult"})
        return lift_cover(bouquet(2), {0: "a", 1: "b"}, action, R_trunc)
    if kind in ("cyclic", "zcycle"):
        m = int(params.get("m", 3))
        base = cycle(m)
        if kind == "zcycle":
            action = FiberAction.from_rules({"a": "z-shift"})
        else:
            q = int(params.get("q", 2))
            action = FiberAction.from_perms({"a": np.roll(np.arange(q), -1)}, q)
        return lift_cover(base, {m - 1: "a"}, action, R_trunc)
    raise CoverError(f"unknown standard cover {kind!r}")
