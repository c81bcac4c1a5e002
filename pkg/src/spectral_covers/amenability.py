"""Schreier graphs, displacement-bounded generator sets, Folner search and orbits.

Everything here acts on fiber labels through a :class:`FiberAction`.
Group elements are stored as words ``((name, sign), ...)`` and applied
left to right, so ``F.g`` means applying ``g`` to every label of ``F``.
"""
from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from .covering import CoveringGraph, FiberAction
from .errors import CoverError, DomainError
from .graph import WeightedGraph


def _sorted_labels(labels):
    try:
        return sorted(labels)
    except TypeError:
        return sorted(labels, key=repr)


def invert_word(word):
    return tuple((name, -sign) for name, sign in reversed(word))


@dataclass(frozen=True)
class Move:
    """One group element: its word in the action's generators and its displacement."""

    word: tuple
    displacement: int = 1
    chord_word: tuple = ()

    def apply(self, action: FiberAction, x):
        return action.apply_word(x, self.word)


@dataclass
class GeneratorSet:
    """Finite symmetric set of moves; ``radius`` is the displacement bound used."""

    action: FiberAction
    elements: list
    radius: float | None = None

    def __len__(self):
        return len(self.elements)

    @classmethod
    def from_generators(cls, action: FiberAction, names=None):
        """The action generators and their inverses."""
        names = list(action.generators) if names is None else list(names)
        elems = []
        for name in names:
            elems.append(Move(((name, 1),)))
            elems.append(Move(((name, -1),)))
        return cls(action, elems, None)

    def words(self):
        return [m.word for m in self.elements]

    def is_symmetric(self, fiber) -> bool:
        keys = {self._key(m, fiber) for m in self.elements}
        inv = {self._key(Move(invert_word(m.word)), fiber) for m in self.elements}
        return keys == inv

    def _key(self, move, fiber):
        return tuple(move.apply(self.action, x) for x in fiber)


# ---------------------------------------------------------------- Schreier graphs

def _moves_of(action, generators):
    if generators is None:
        generators = GeneratorSet.from_generators(action)
    if isinstance(generators, GeneratorSet):
        return [m.word for m in generators.elements]
    return [((name, 1),) for name in generators] + [((name, -1),) for name in generators]


def schreier_ball(action: FiberAction, generators=None, radius: int = 0, start=None):
    """Labels in BFS order with their distance from ``start``."""
    words = _moves_of(action, generators)
    start = action.basepoint if start is None else start
    dist = {start: 0}
    order = [start]
    queue = deque([start])
    while queue:
        x = queue.popleft()
        d = dist[x]
        if d >= radius:
            continue
        for w in words:
            y = action.apply_word(x, w)
            if y not in dist:
                dist[y] = d + 1
                order.append(y)
                queue.append(y)
    return order, dist


def schreier_graph(action: FiberAction, generators=None, R_trunc: int = 0) -> WeightedGraph:
    """Unit-weight graph on the cosets within ``R_trunc`` moves of the basepoint.

    One edge ``x -- x.g`` per positive generator (element and inverse
    give the same edge set).  Labels are stored on the graph.
    """
    if generators is None or not isinstance(generators, GeneratorSet):
        names = list(action.generators) if generators is None else list(generators)
        forward = [((name, 1),) for name in names]
    else:
        forward, seen = [], set()
        for m in generators.elements:
            if invert_word(m.word) in seen:
                continue
            seen.add(m.word)
            forward.append(m.word)
    order, _ = schreier_ball(action, generators, R_trunc)
    idx = {x: i for i, x in enumerate(order)}
    edges = []
    for x in order:
        for w in forward:
            j = idx.get(action.apply_word(x, w))
            if j is not None:
                edges.append((idx[x], j))
    e = np.asarray(edges, dtype=np.int64).reshape(-1, 2)
    multi = bool(len(e)) and (np.any(e[:, 0] == e[:, 1])
                              or len(np.unique(np.sort(e, axis=1), axis=0)) != len(e))
    return WeightedGraph(len(order), e, np.ones(len(e)), np.ones(len(order)), np.zeros(len(order), bool),
                         "schreier", multi, labels=tuple(order))


# ---------------------------------------------------------------- G_r

def generator_set(cover: CoveringGraph, r: float, include_identity: bool = False) -> GeneratorSet:
    """Elements g of the fundamental group with d(u, g.u) < r in the universal cover.

    The universal cover is explored as pairs (base vertex, reduced word in
    the chords).  Elements are deduplicated by their action on the
    discovered fiber over the basepoint; the shortest word is kept.
    """
    if r <= 0:
        raise DomainError("r must be positive")
    reach = int(np.ceil(r)) - 1
    if cover.trunc is not None and r > cover.trunc:
        raise CoverError(f"r={r} exceeds R_trunc={cover.trunc}; membership cannot be certified")
    base = cover.base
    chord_pos = {e: i + 1 for i, e in enumerate(cover.chords)}
    ends = [[] for _ in range(base.n)]
    for i, (a, b) in enumerate(base.edges):
        c = chord_pos.get(i, 0)
        ends[a].append((int(b), c))
        ends[b].append((int(a), -c))

    def push(word, letter):
        if letter == 0:
            return word
        if word and word[-1] == -letter:
            return word[:-1]
        return word + (letter,)

    x0 = cover.basepoint
    start = (x0, ())
    dist = {start: 0}
    queue = deque([start])
    while queue:
        s = queue.popleft()
        d = dist[s]
        if d >= reach:
            continue
        v, w = s
        for nb, letter in ends[v]:
            t = (nb, push(w, letter))
            if t not in dist:
                dist[t] = d + 1
                queue.append(t)
    found = sorted(((d, w) for (v, w), d in dist.items() if v == x0), key=lambda t: (t[0], len(t[1]), t[1]))

    action = cover.action
    fiber = [cover.labels[i] for i in cover.fiber(x0)]
    ident = tuple(fiber)
    elems, seen = [], set()
    for d, w in found:
        word = []
        for letter in w:
            g = cover.voltages[cover.chords[abs(letter) - 1]]
            if g is not None:
                word.append((g[0], g[1] if letter > 0 else -g[1]))
        move = Move(tuple(word), d, w)
        key = tuple(move.apply(action, x) for x in fiber)
        if key in seen or (key == ident and not include_identity):
            continue
        seen.add(key)
        elems.append(move)
    return GeneratorSet(action, elems, r)


# ---------------------------------------------------------------- Folner

@dataclass
class FolnerCertificate:
    F: list
    generators: list
    eps_achieved: Fraction
    target: float
    certified: bool
    budget_exhausted: bool
    radius: int
    refined: bool = False

    @property
    def size(self) -> int:
        return len(self.F)

    def dump(self, action_name: str = "action", action: FiberAction | None = None) -> str:
        fmt = action.format_label if action is not None else str
        head = f"folner {action_name} {float(self.eps_achieved)!r} {len(self.F)}"
        return "\n".join([head] + [fmt(x) for x in _sorted_labels(self.F)]) + "\n"


def folner_ratio(action: FiberAction, F, generators) -> Fraction:
    """max_g #(F minus F.g) / #F, exactly."""
    F = list(F)
    if not F:
        raise DomainError("empty set")
    fs = set(F)
    worst = 0
    for w in _moves_of(action, generators):
        inv = invert_word(w)
        out = sum(1 for y in F if action.apply_word(y, inv) not in fs)
        worst = max(worst, out)
    return Fraction(worst, len(F))


def _greedy_shed(action, F, words, max_steps):
    """Remove the vertex counted most often in the displaced sets while that does not hurt."""
    fs = set(F)
    invs = [invert_word(w) for w in words]
    cnt = [0] * len(words)
    contrib = {y: 0 for y in F}
    for k, inv in enumerate(invs):
        for y in F:
            if action.apply_word(y, inv) not in fs:
                cnt[k] += 1
                contrib[y] += 1
    best = Fraction(max(cnt), len(fs))
    best_set = set(fs)
    current = best
    order = {y: i for i, y in enumerate(F)}
    for _ in range(max_steps):
        if len(fs) <= 1:
            break
        y = max(fs, key=lambda z: (contrib[z], order[z]))
        fs.discard(y)
        del contrib[y]
        for k, (w, inv) in enumerate(zip(words, invs)):
            if action.apply_word(y, inv) not in fs:
                cnt[k] -= 1
            z = action.apply_word(y, w)
            if z in fs:
                cnt[k] += 1
                contrib[z] += 1
        new = Fraction(max(cnt), len(fs))
        if new > current:
            break
        current = new
        if new < best:
            best, best_set = new, set(fs)
    return best, [y for y in F if y in best_set]


def folner_search(action: FiberAction, G, eps: float, budget: int) -> FolnerCertificate:
    """Look for F with max_g #(F minus F.g) < eps #F.

    Schreier balls of radius 0..budget are tried first, then greedy
    shedding from the best ball.  A failed search is evidence only.
    """
    if eps <= 0:
        raise DomainError("eps must be positive")
    words = _moves_of(action, G)
    if not words:
        raise DomainError("empty generator set")
    budget = int(budget)
    order, dist = schreier_ball(action, G, max(budget, 0))
    best = None
    for R in range(0, max(budget, 0) + 1):
        F = [x for x in order if dist[x] <= R]
        ratio = folner_ratio(action, F, G)
        if best is None or ratio < best[0]:
            best = (ratio, F, R)
        if ratio < eps:
            return FolnerCertificate(F, words, ratio, eps, True, False, R)
    ratio, F, R = best
    refined, F2 = _greedy_shed(action, F, words, max_steps=len(F))
    if refined < ratio:
        ratio, F = refined, F2
        if ratio < eps:
            return FolnerCertificate(F, words, ratio, eps, True, False, R, refined=True)
        return FolnerCertificate(F, words, ratio, eps, False, True, R, refined=True)
    return FolnerCertificate(F, words, ratio, eps, False, True, R)


# ---------------------------------------------------------------- orbits

@dataclass
class OrbitReport:
    orbits: list
    classification: list
    radius: float | None
    claim: str = ""
    labels: dict = field(default_factory=dict)

    @property
    def finite_orbits(self):
        return [o for o, c in zip(self.orbits, self.classification) if c == "finite"]


def orbit_decomposition(action: FiberAction, G, fiber=None) -> OrbitReport:
    """Union-find over the moves of G on the (discovered) fiber.

    An orbit is ``frontier-touching`` when some move sends one of its
    points outside the discovered set, which is the only way a truncated
    orbit can hide an infinite one.
    """
    if fiber is None:
        if not action.is_finite:
            raise DomainError("lazy actions need an explicit discovered fiber")
        fiber = list(range(action.size))
    fiber = list(fiber)
    pos = {x: i for i, x in enumerate(fiber)}
    parent = list(range(len(fiber)))

    def find(i):
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    leaks = np.zeros(len(fiber), dtype=bool)
    for w in _moves_of(action, G):
        for i, x in enumerate(fiber):
            j = pos.get(action.apply_word(x, w))
            if j is None:
                leaks[i] = True
                continue
            a, b = find(i), find(j)
            if a != b:
                parent[max(a, b)] = min(a, b)
    groups = {}
    for i in range(len(fiber)):
        groups.setdefault(find(i), []).append(i)
    orbits, kinds = [], []
    for root in sorted(groups):
        members = groups[root]
        orbits.append([fiber[i] for i in members])
        kinds.append("frontier-touching" if leaks[members].any() else "finite")
    radius = G.radius if isinstance(G, GeneratorSet) else None
    if action.is_finite:
        claim = f"{len(orbits)} orbits, all finite"
    elif "finite" in kinds:
        claim = f"{kinds.count('finite')} finite orbit(s) found inside the truncation"
    else:
        claim = "no finite non-frontier orbit found up to the truncation radius"
    return OrbitReport(orbits, kinds, radius, claim)
