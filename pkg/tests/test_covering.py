from collections import Counter, deque

import networkx as nx
import numpy as np
import pytest
from hypothesis import given, strategies as st

from spectral_covers import (FiberAction, SchrodingerOp, cardinality_estimate, cycle,
                             fiber_ball_multiplicity, fundamental_domains, lift_cover, lift_function,
                             lift_operator, standard_cover)
from spectral_covers.amenability import generator_set, orbit_decomposition
from spectral_covers.covering import parse_cover_spec, parse_cycles, preimage_in_domain
from spectral_covers.errors import CoverError, DomainError
from spectral_covers.graph import bouquet
from spectral_covers.spectral import lowest_eigenpairs, rayleigh

from conftest import random_finite_cover


def c6_over_c3():
    return lift_cover(cycle(3), {0: "id", 1: "id", 2: "s"}, FiberAction.from_perms({"s": "(0 1)"}, 2), tree=[0, 1])


def to_nx(g):
    G = nx.MultiGraph()
    G.add_nodes_from(range(g.n))
    G.add_edges_from(map(tuple, g.edges.tolist()))
    return G


def incident(graph, v):
    """Incident edge indices, a loop counted twice."""
    out = []
    for i, (a, b) in enumerate(graph.edges.tolist()):
        out += [i] * (int(a == v) + int(b == v))
    return out


def assert_local_isometry(cover):
    base, total = cover.base, cover.total
    for v in np.flatnonzero(~cover.frontier):
        up = Counter(int(cover.edge_projection[i]) for i in incident(total, v))
        down = Counter(incident(base, int(cover.projection[v])))
        assert up == down
        for i in incident(total, v):
            assert total.weights[i] == base.weights[cover.edge_projection[i]]


def test_line_lift():
    cov = standard_cover("line", 5)
    assert cov.total.n == 11 and cov.total.num_edges == 10
    assert nx.is_isomorphic(nx.Graph(to_nx(cov.total)), nx.path_graph(11))
    ends = [cov.vertex(0, -5), cov.vertex(0, 5)]
    assert np.flatnonzero(cov.frontier).tolist() == sorted(ends)


def test_c3_double_cover_is_c6():
    cov = c6_over_c3()
    assert nx.is_isomorphic(to_nx(cov.total), nx.cycle_graph(6))
    assert not cov.frontier.any()


def test_free_ball_count():
    cov = standard_cover("free", 3)
    assert cov.total.n == 53
    deg = np.bincount(cov.total.edges.ravel(), minlength=53)
    assert np.all(deg[~cov.frontier] == 4)


def test_bad_permutation_rejected():
    with pytest.raises(CoverError):
        FiberAction.from_perms({"a": [0, 0, 1]})
    with pytest.raises(CoverError):
        parse_cycles("(0 1)(1 2)")


def test_missing_chord_voltage():
    with pytest.raises(CoverError):
        lift_cover(cycle(3), {}, FiberAction.from_perms({"s": "(0 1)"}, 2), tree=[0, 1])


def test_spec_file_roundtrip():
    text = """
    base builtin cycle n=3
    tree 0 1
    voltage 2 s
    gen s perm (0 1)
    fiber 2
    """
    cov, pot = parse_cover_spec(text)
    assert cov.total.n == 6 and pot.shape == (3,)
    cov2, _ = parse_cover_spec("base builtin bouquet loops=1\nvoltage 0 a\ngen a rule z-shift\ntrunc 4\n")
    assert cov2.total.n == 9
    with pytest.raises(CoverError):
        parse_cover_spec("base builtin cycle n=3\nbogus 1\n")


def test_fundamental_domain_examples():
    line = standard_cover("line", 6)
    doms = fundamental_domains(line)
    assert all(d.tolist() == [y] for y, d in doms.domains.items() if not line.frontier[y])
    tree = standard_cover("free", 3)
    doms = fundamental_domains(tree)
    assert all(d.tolist() == [y] for y, d in doms.domains.items() if not tree.frontier[y])
    doms = fundamental_domains(c6_over_c3(), 0)
    assert sorted(len(d) for d in doms.domains.values()) == [3, 3]


def test_multiplicity_examples():
    line = standard_cover("line", 10)
    assert fiber_ball_multiplicity(line, 0, 1) == 3
    assert fiber_ball_multiplicity(line, 0, 0) == 1
    assert fiber_ball_multiplicity(c6_over_c3(), 0, 1) == 1
    with pytest.raises(CoverError):
        fiber_ball_multiplicity(line, 0, 11)


def test_preimage_examples():
    cov = c6_over_c3()
    doms = fundamental_domains(cov, 0)
    for y in cov.fiber(0):
        assert preimage_in_domain(cov, [0], int(y), 0).tolist() == [y]
        pts = preimage_in_domain(cov, [0, 1, 2], int(y), 2, doms)
        assert pts.tolist() == doms.domain(int(y)).tolist()
    line = standard_cover("line", 6)
    y = int(line.fiber(0)[3])
    assert preimage_in_domain(line, [0], y, 1).tolist() == [y]
    with pytest.raises(DomainError):
        preimage_in_domain(standard_cover("zcycle", 8, m=6), [3], 0, 1)


def test_lift_function_and_eigenvector():
    cov = c6_over_c3()
    assert np.array_equal(lift_function(cov, np.ones(3)), np.ones(6))
    op = SchrodingerOp(cov.base, [0.0, 1.0, 0.5])
    rep = lowest_eigenpairs(op, k=3)
    op2 = lift_operator(cov, op)
    for lam, v in zip(rep.eigenvalues, rep.eigenvectors.T):
        up = lift_function(cov, v)
        assert np.allclose(op2.matrix @ up, lam * up, atol=1e-10)


def test_cardinality_estimate():
    assert cardinality_estimate(standard_cover("line", 12), 0, 3, 2)["max"] == 1
    assert cardinality_estimate(standard_cover("free", 6), 0, 2, 2)["max"] == 1
    # opposite vertex of C_6 is reached both ways round
    assert cardinality_estimate(c6_over_c3(), 0, 3, 3)["max"] == 2


def test_zcycle_local_isometry():
    assert_local_isometry(standard_cover("zcycle", 12, m=5))
    assert_local_isometry(standard_cover("z2", 6))


@given(st.integers(0, 10**6))
def test_random_finite_cover_invariants(seed):
    cov = random_finite_cover(np.random.default_rng(seed))
    q = cov.action.size
    assert_local_isometry(cov)
    assert np.all(np.bincount(cov.projection, minlength=cov.base.n) == q)
    assert np.array_equal(cov.total.vertex_measure, cov.base.vertex_measure[cov.projection])
    for i, e in enumerate(cov.edge_projection):
        assert cov.total.weights[i] == cov.base.weights[e]


@given(st.integers(0, 10**6))
def test_fundamental_domains_partition(seed):
    rng = np.random.default_rng(seed)
    cov = random_finite_cover(rng)
    x = int(rng.integers(cov.base.n))
    doms = fundamental_domains(cov, x)
    allv = np.sort(np.concatenate(list(doms.domains.values())))
    assert allv.tolist() == list(range(cov.total.n))
    fib = cov.fiber(x)
    dist_fib = np.stack([cov.total.distances(int(y)) for y in fib])
    diam = int(max(cov.base.distances(v).max() for v in range(cov.base.n)))
    for j, y in enumerate(fib):
        D = doms.domain(int(y))
        assert sorted(cov.projection[D].tolist()) == list(range(cov.base.n))
        assert np.all(dist_fib[j, D] == dist_fib[:, D].min(axis=0))
        assert np.all(dist_fib[j, D] <= 2 * diam)
    r = int(rng.integers(0, diam + 1))
    K = np.flatnonzero(cov.base.distances(x) <= r)
    for y in fib:
        preimage_in_domain(cov, K, int(y), r, doms)


@given(st.integers(0, 10**6))
def test_rayleigh_preserved_by_lift(seed):
    rng = np.random.default_rng(seed)
    cov = random_finite_cover(rng)
    op = SchrodingerOp(cov.base, rng.uniform(0, 2, cov.base.n))
    f = rng.standard_normal(cov.base.n)
    assert rayleigh(lift_operator(cov, op), lift_function(cov, f)) == pytest.approx(rayleigh(op, f), rel=1e-12)


@given(st.integers(0, 10**6))
def test_multiplicity_monotone(seed):
    cov = random_finite_cover(np.random.default_rng(seed))
    N = [fiber_ball_multiplicity(cov, 0, r) for r in range(6)]
    assert N[0] == 1
    assert all(a <= b for a, b in zip(N, N[1:]))


def hop_chain_classes(cov, x, r):
    """Fiber points joined by chains with consecutive gaps < r."""
    fib = [int(y) for y in cov.fiber(x)]
    d = {y: cov.total.distances(y) for y in fib}
    seen, classes = set(), []
    for y in fib:
        if y in seen:
            continue
        comp, queue = {y}, deque([y])
        while queue:
            a = queue.popleft()
            for b in fib:
                if b not in comp and d[a][b] < r:
                    comp.add(b)
                    queue.append(b)
        seen |= comp
        classes.append(frozenset(cov.labels[i] for i in comp))
    return set(classes)


@given(st.integers(0, 10**6), st.integers(1, 6))
def test_orbit_equivalence_oracle(seed, r):
    cov = random_finite_cover(np.random.default_rng(seed), max_base=8, max_sheets=5)
    G = generator_set(cov, r)
    if len(G):
        rep = orbit_decomposition(cov.action, G)
        orbits = {frozenset(o) for o in rep.orbits}
    else:
        orbits = {frozenset([x]) for x in range(cov.action.size)}
    assert orbits == hop_chain_classes(cov, cov.basepoint, r)
