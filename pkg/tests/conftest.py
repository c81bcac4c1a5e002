import numpy as np
import pytest
from hypothesis import settings

from spectral_covers import FiberAction, from_edges, lift_cover
from spectral_covers.errors import CoverError

settings.register_profile("default", max_examples=40, deadline=None)
settings.load_profile("default")

# criterion number -> (passed, detail); filled by test_acceptance
ACCEPTANCE = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[k]
        terminalreporter.write_line(f"criterion {k:2d}: {'PASS' if ok else 'FAIL'}  {detail}")


def random_connected_graph(rng, n, extra=0.3, loops=False, weighted=True, boundary=()):
    """Random spanning tree plus extra edges; optional self-loops."""
    edges = set()
    for v in range(1, n):
        u = int(rng.integers(0, v))
        edges.add((u, v))
    for u in range(n):
        for v in range(u + 1, n):
            if (u, v) not in edges and rng.random() < extra:
                edges.add((u, v))
    edges = sorted(edges)
    if loops and rng.random() < 0.5:
        edges.append((int(rng.integers(0, n)),) * 2)
    m = len(edges)
    w = rng.uniform(0.5, 2.0, m) if weighted else 1.0
    mu = rng.uniform(0.5, 2.0, n) if weighted else 1.0
    multi = any(u == v for u, v in edges)
    return from_edges(n, edges, w, mu, boundary=boundary, multigraph=multi)


def random_finite_cover(rng, max_base=12, max_sheets=4):
    """A connected random permutation-voltage cover; retries until the lift is connected."""
    while True:
        n = int(rng.integers(2, max_base + 1))
        base = random_connected_graph(rng, n, extra=0.25, loops=True)
        q = int(rng.integers(2, max_sheets + 1))
        # spanning tree = first n-1 tree edges found by the builder; voltages on the rest
        from spectral_covers.covering import _spanning_tree

        tree = _spanning_tree(base, np.ones(base.num_edges, bool), 0)
        chords = [e for e in range(base.num_edges) if e not in set(tree)]
        if not chords:
            continue
        perms = {f"g{i}": rng.permutation(q) for i in range(len(chords))}
        action = FiberAction.from_perms(perms, q)
        volts = {e: f"g{i}" for i, e in enumerate(chords)}
        try:
            return lift_cover(base, volts, action, tree=tree)
        except CoverError:
            continue


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
