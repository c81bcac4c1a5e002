import numpy as np
import pytest
from hypothesis import given, strategies as st

from spectral_covers import (SchrodingerOp, assemble_chi, build_partition, from_edges, lift_function,
                             lift_operator, standard_cover, transplant, transplant_rayleigh, weyl_family)
from spectral_covers.errors import CoverError, DomainError
from spectral_covers.spectral import lowest_eigenpairs, rayleigh
from spectral_covers.transplant import taper

from conftest import random_finite_cover


def point_base(v=0.0):
    return SchrodingerOp(from_edges(1, [(0, 0)], 1.0, 1.0, multigraph=True), v)


def test_taper():
    assert taper([0, 1, 2, 3], 1, 2).tolist() == [1.0, 1.0, 0.5, 0.0]


def test_line_partition_thirds():
    cov = standard_cover("line", 12)
    pou = build_partition(cov, 0, 1, 1)
    assert pou.compact_branch
    y = cov.vertex(0, 0)
    phi = pou.phi_dense(y)
    near = [cov.vertex(0, i) for i in (-1, 0, 1)]
    assert np.allclose(phi[near], 1 / 3)
    assert np.count_nonzero(phi) == 3


def test_double_cover_partition():
    cov = standard_cover("cyclic", m=3, q=2)
    pou = build_partition(cov, 0, 3, 1)
    assert np.allclose(pou.sum_phi(), 1.0) and np.allclose(pou.phi1, 0)
    assert len(pou.fiber) == 2


def test_identity_cover_partition():
    cov = standard_cover("cyclic", m=5, q=1)
    pou = build_partition(cov, 0, 3, 1)
    assert np.allclose(pou.phi_dense(int(pou.fiber[0])), 1.0)
    assert np.allclose(pou.phi1, 0)


def test_partition_errors():
    cov = standard_cover("line", 3)
    with pytest.raises(CoverError):
        build_partition(cov, 0, 2, 1)
    with pytest.raises(DomainError):
        build_partition(cov, 0, 1, 0)


def test_line_q_sets():
    cov = standard_cover("line", 30)
    pou = build_partition(cov, 0, 1, 1)
    plan = assemble_chi(pou, [cov.vertex(0, i) for i in range(10)])
    lab = lambda ys: sorted(cov.labels[y] for y in ys)
    assert lab(plan.Q_plus) == list(range(2, 8))
    assert lab(plan.Q_minus) == [-2, -1, 0, 1, 8, 9, 10, 11]
    assert plan.ratio == pytest.approx(8 / 6)


def test_full_fiber_has_no_q_minus():
    cov = standard_cover("cyclic", m=4, q=3)
    pou = build_partition(cov, 0, 4, 1)
    plan = assemble_chi(pou, pou.fiber)
    assert len(plan.Q_minus) == 0 and plan.ratio == 0
    assert np.allclose(plan.chi, 1)


def test_isolated_orbit_has_no_q_minus():
    # Z over C_12: the fiber points are 12 apart, so one of them is its own finite piece
    cov = standard_cover("zcycle", 60, m=12)
    pou = build_partition(cov, 0, 2, 1)
    assert not pou.compact_branch
    y = cov.vertex(0, 0)
    plan = assemble_chi(pou, [y])
    assert plan.Q.tolist() == [y] and plan.Q_plus.tolist() == [y] and len(plan.Q_minus) == 0


def test_frontier_p_rejected():
    cov = standard_cover("line", 12)
    pou = build_partition(cov, 0, 1, 1)
    with pytest.raises(CoverError):
        assemble_chi(pou, [cov.vertex(0, 11)])
    with pytest.raises(DomainError):
        assemble_chi(pou, [])


def test_identity_cover_transplant():
    cov = standard_cover("cyclic", m=5, q=1)
    op = SchrodingerOp(cov.base, [0, 1, 0, 2, 0])
    pou = build_partition(cov, 0, 5, 1)
    f = np.array([0.0, 0.0, 1.0, 0.0, 0.0])
    zeta, rep = transplant(op, f, 0.3, pou, assemble_chi(pou, pou.fiber))
    assert np.allclose(zeta[np.argsort(cov.projection)], f)
    assert rep.rho2 == pytest.approx(rep.rho1, rel=1e-12) and rep.holds


def test_finite_cover_full_fiber():
    cov = standard_cover("cyclic", m=4, q=3)
    op = SchrodingerOp(cov.base, [0.5, 0, 0, 0])
    rep = lowest_eigenpairs(op)
    f = rep.eigenvectors[:, 0]
    pou = build_partition(cov, 0, 4, 1)
    plan = assemble_chi(pou, pou.fiber)
    zeta, tr = transplant(op, f, 0.2, pou, plan)
    assert tr.rho2 == pytest.approx(tr.rho1, rel=1e-12)
    _, ray = transplant_rayleigh(op, f, pou, plan)
    assert ray.R_zeta == pytest.approx(ray.R_f, rel=1e-12) and ray.holds


def test_support_precondition():
    cov = standard_cover("cyclic", m=6, q=2)
    op = SchrodingerOp(cov.base)
    pou = build_partition(cov, 0, 2, 1)
    f = np.zeros(6)
    f[3] = 1.0
    with pytest.raises(DomainError):
        transplant(op, f, 0.0, pou, assemble_chi(pou, pou.fiber))
    with pytest.raises(DomainError):
        transplant(op, 2 * np.eye(6)[0], 0.0, pou, assemble_chi(pou, pou.fiber))


def test_line_folner_sizes():
    cov = standard_cover("line", 260)
    base = point_base()
    pou = build_partition(cov, 0, 1, 1)
    rho2, c0 = [], []
    for N in (10, 40, 160):
        plan = assemble_chi(pou, [cov.vertex(0, i) for i in range(N)])
        zeta, rep = transplant(base, np.ones(1), 0.0, pou, plan)
        assert rep.holds and rep.lhs <= rep.rhs
        rho2.append(rep.rho2)
        c0.append(rep.C0)
        _, ray = transplant_rayleigh(base, np.ones(1), pou, plan)
        assert ray.holds
    assert rho2[0] > rho2[1] > rho2[2]
    # the measured constant does not depend on P
    assert np.allclose(c0, c0[0], rtol=1e-12)


def test_avoidance():
    cov = standard_cover("line", 80)
    pou = build_partition(cov, 0, 1, 1)
    K = np.flatnonzero(cov.depth < 10)
    P = [cov.vertex(0, i) for i in range(15, 30)]
    plan = assemble_chi(pou, P, avoid=K)
    zeta, rep = transplant(point_base(), np.ones(1), 0.0, pou, plan)
    assert np.all(zeta[K] == 0) and rep.escape_radius >= 10
    with pytest.raises(DomainError):
        assemble_chi(pou, [cov.vertex(0, i) for i in range(5, 30)], avoid=K)


def test_weyl_family_line():
    cov = standard_cover("line", 260)
    fam = weyl_family(point_base(), np.ones(1), 0.0, cov, (5, 15, 45), budget=120)
    assert not fam.partial and len(fam.members) == 3
    for rep, e in zip(fam.reports, fam.exclusion_radii):
        assert rep.holds and rep.escape_radius >= e
    for a, b in zip(fam.members, fam.members[1:]):
        assert not np.any((a != 0) & (b != 0))
    assert list(fam.rows()[0]) == ["k", "ratio", "rho1", "rho2", "budget_rhs", "escape_radius", "delta"]


def test_weyl_family_finite_cover():
    cov = standard_cover("cyclic", m=4, q=3)
    with pytest.raises(CoverError):
        weyl_family(SchrodingerOp(cov.base), np.eye(4)[0], 0.0, cov, (1, 2))


def test_weyl_family_free_partial():
    cov = standard_cover("free", 8)
    fam = weyl_family(point_base(), np.ones(1), 0.0, cov, (2, 4), budget=4)
    assert fam.partial and "Folner" in fam.reason


def ball_mask(cov, y, r):
    return cov.total.distances(int(y), limit=r) <= r


@given(st.integers(0, 10**6), st.integers(1, 3), st.integers(1, 2))
def test_partition_identities(seed, r, s):
    rng = np.random.default_rng(seed)
    cov = random_finite_cover(rng, max_base=8)
    x = int(rng.integers(cov.base.n))
    pou = build_partition(cov, x, r, s)
    total = pou.sum_phi() + pou.phi1
    assert np.allclose(total, 1.0, atol=1e-12)
    assert np.all(pou.phi1 >= -1e-15) and np.all(pou.phi1 <= 1 + 1e-15)
    for y in pou.fiber:
        phi = pou.phi_dense(int(y))
        assert np.all((phi >= 0) & (phi <= 1 + 1e-15))
        assert np.all(phi[~ball_mask(cov, y, r + s)] == 0)
        assert np.all(phi[ball_mask(cov, y, r)] > 0)
        assert np.allclose(pou.sum_phi()[ball_mask(cov, y, r)], 1.0, atol=1e-12)
        idx, _ = pou.psi[int(y)]
        assert np.all(pou.denominator[idx] >= 1 - 1e-12)


@given(st.integers(0, 10**6), st.integers(1, 2), st.integers(1, 2))
def test_q_classification_scan(seed, r, s):
    rng = np.random.default_rng(seed)
    m = int(rng.integers(2, 6))
    cov = standard_cover("line", 40) if m == 2 else standard_cover("zcycle", 40, m=m)
    pou = build_partition(cov, 0, r, s)
    ok = pou.fiber[pou.frontier_distance[pou.fiber] >= 4 * r + 2 * s - 1]
    P = rng.choice(ok, size=int(rng.integers(1, min(len(ok), 8) + 1)), replace=False)
    plan = assemble_chi(pou, P)
    Qp, Qm = [], []
    for y in pou.fiber:
        vals = plan.chi[ball_mask(cov, y, r)]
        if np.all(vals == 0):
            continue
        (Qp if np.allclose(vals, 1, atol=1e-12) else Qm).append(int(y))
    assert sorted(Qp) == plan.Q_plus.tolist()
    assert sorted(Qm) == plan.Q_minus.tolist()


@given(st.integers(0, 10**6))
def test_budget_soundness_random_finite(seed):
    rng = np.random.default_rng(seed)
    cov = random_finite_cover(rng, max_base=8)
    op = SchrodingerOp(cov.base, rng.uniform(0, 1, cov.base.n))
    diam = int(cov.base.distances(0).max())
    pou = build_partition(cov, 0, diam + 1, 1)
    f = rng.standard_normal(cov.base.n)
    f /= op.norm(f)
    k = int(rng.integers(1, len(pou.fiber) + 1))
    plan = assemble_chi(pou, rng.choice(pou.fiber, size=k, replace=False))
    lam = rayleigh(op, f)
    try:
        zeta, rep = transplant(op, f, lam, pou, plan)
    except DomainError:
        assert len(plan.Q_plus) == 0
        return
    assert rep.holds
    assert np.all(np.isin(cov.projection[np.flatnonzero(zeta)], np.flatnonzero(f)))
    _, ray = transplant_rayleigh(op, f, pou, plan)
    assert ray.holds


def test_lifted_function_norm_scaling():
    cov = standard_cover("cyclic", m=3, q=4)
    op = SchrodingerOp(cov.base)
    f = np.array([1.0, 2.0, 3.0])
    up = lift_function(cov, f)
    assert lift_operator(cov, op).norm(up) ** 2 == pytest.approx(4 * op.norm(f) ** 2)
