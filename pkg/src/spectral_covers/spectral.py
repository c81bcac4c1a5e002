"""Lowest eigenpairs, Rayleigh quotients and exhaustion traces.

Small problems (at most ``DENSE_LIMIT`` free vertices) go to LAPACK;
larger ones to the block Lanczos solver in :mod:`.lanczos`.  All
computations happen in the symmetric coordinates ``g = M^{1/2} f`` so the
Euclidean residual equals the l^2(mu) residual of ``S``.
"""
from __future__ import annotations

import csv
import io
from dataclasses import asdict, dataclass, field

import numpy as np
import scipy.linalg as la
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import ConvergenceError, CoverError, DomainError
from .graph import SchrodingerOp, apply, ball, induced_dirichlet
from .lanczos import lanczos_smallest

DENSE_LIMIT = 500
INERTIA_DENSE_LIMIT = 3000


@dataclass
class SpectralReport:
    """Lowest eigenpairs of an operator.

    ``eigenvectors`` has one full-length, mu-normalized column per
    eigenvalue (zero on the mask).
    """

    eigenvalues: np.ndarray
    eigenvectors: np.ndarray
    residuals: np.ndarray
    iterations: int
    tol: float
    method: str
    converged: bool = True

    @property
    def lambda0(self) -> float:
        return float(self.eigenvalues[0])

    def summary(self) -> dict:
        return {"eigenvalues": [float(v) for v in self.eigenvalues],
                "residuals": [float(v) for v in self.residuals],
                "iterations": int(self.iterations), "tol": self.tol, "method": self.method}


def _normalize_sign(vecs):
    for j in range(vecs.shape[1]):
        i = np.argmax(np.abs(vecs[:, j]))
        if vecs[i, j] < 0:
            vecs[:, j] *= -1
    return vecs


def symmetric_eigenpairs(a, k: int = 1, tol: float = 1e-9, method: str = "auto", seed: int = 0,
                         max_restarts: int = 500, lower_bound: float | None = None):
    """Lowest ``k`` eigenpairs of a Euclidean-symmetric sparse matrix.

    Returns ``(values, vectors, residuals, iterations, method, converged)``.
    ``lower_bound`` (a value below the spectrum) sets the shift for the
    shift-invert expansion.
    """
    n = a.shape[0]
    if not 1 <= k <= n:
        raise DomainError(f"k must lie in [1, {n}]")
    if tol <= 0:
        raise DomainError("tol must be positive")
    if method == "auto":
        method = "dense" if n <= DENSE_LIMIT else "lanczos"
    if method == "dense":
        vals, vecs = la.eigh(a.toarray(), subset_by_index=[0, k - 1])
        res = np.linalg.norm(a @ vecs - vecs * vals, axis=0)
        return vals, _normalize_sign(vecs), res, 0, method, True
    if method in ("lanczos", "lanczos-plain"):
        shift = method == "lanczos"
        sigma = None
        if shift and lower_bound is not None:
            scale = max(1.0, float(np.abs(a.diagonal()).max()))
            sigma = lower_bound - 1e-5 * scale
        out = lanczos_smallest(a, k, tol=tol, seed=seed, shift_invert=shift,
                               sigma=sigma, max_restarts=max_restarts)
        return (out.values, _normalize_sign(np.array(out.vectors)), out.residuals,
                out.iterations, method, out.converged)
    raise DomainError(f"unknown method {method!r}")


def lowest_eigenpairs(op: SchrodingerOp, k: int = 1, tol: float = 1e-9, method: str = "auto",
                      seed: int = 0, max_restarts: int = 500) -> SpectralReport:
    """The ``k`` smallest eigenpairs of ``op``.

    ``method`` is ``dense``, ``lanczos`` (shift-invert expansion),
    ``lanczos-plain`` (expansion by the matrix itself) or ``auto``.
    Raises :class:`ConvergenceError` when the iteration cap is hit.
    """
    if op.dim == 0:
        raise DomainError("operator has no free vertices")
    vals, vecs, res, its, used, ok = symmetric_eigenpairs(
        op.symmetric_matrix, k, tol, method, seed, max_restarts,
        lower_bound=float(op.potential[op.free].min()))
    full = np.zeros((op.graph.n, k))
    full[op.free] = vecs / np.sqrt(op.measure[op.free])[:, None]
    report = SpectralReport(np.asarray(vals, dtype=float), full, np.asarray(res), its, tol, used, ok)
    if not ok:
        raise ConvergenceError(
            f"{used} solver did not reach tol={tol:g} (max residual {np.max(res):.3e})", report)
    return report


def lambda0(op: SchrodingerOp, tol: float = 1e-9, method: str = "auto") -> float:
    return lowest_eigenpairs(op, 1, tol, method).lambda0


def rayleigh(op: SchrodingerOp, f) -> float:
    """<S f, f>_mu / ||f||_mu^2."""
    f = op.check_domain(f)
    nrm = op.inner(f, f)
    if nrm == 0:
        raise DomainError("Rayleigh quotient of the zero function")
    return op.inner(apply(op, f), f) / nrm


@dataclass
class WeylResidual:
    residual: float
    inner_radius: int
    outer_radius: int


def weyl_residual(op: SchrodingerOp, f, lam: float, center: int = 0) -> WeylResidual:
    """||(S - lam) f||_mu / ||f||_mu and the hop radii of supp f seen from ``center``."""
    f = op.check_domain(f)
    nrm = op.norm(f)
    if nrm == 0:
        raise DomainError("Weyl residual of the zero function")
    r = apply(op, f) - lam * f
    supp = np.flatnonzero(f)
    d = op.graph.distances(center)
    return WeylResidual(op.norm(r) / nrm, int(d[supp].min()), int(d[supp].max()))


def _inertia_below(a, t) -> tuple[int, int]:
    """(#eigenvalues < t, #eigenvalues == t numerically) via an LDL^T factorization."""
    n = a.shape[0]
    shifted = a - t * sp.identity(n)
    if n <= INERTIA_DENSE_LIMIT:
        _, d, _ = la.ldl(shifted.toarray())
        ev = []
        i = 0
        while i < n:
            if i + 1 < n and d[i + 1, i] != 0:
                ev.extend(np.linalg.eigvalsh(d[i:i + 2, i:i + 2]))
                i += 2
            else:
                ev.append(d[i, i])
                i += 1
        ev = np.asarray(ev)
    else:
        lu = spla.splu(shifted.tocsc(), permc_spec="MMD_AT_PLUS_A", diag_pivot_thresh=0.0,
                       options={"SymmetricMode": True})
        if not np.array_equal(lu.perm_r, lu.perm_c):
            raise ConvergenceError("sparse factorization pivoted off the diagonal")
        ev = lu.U.diagonal()
    scale = max(1.0, float(np.abs(a.diagonal()).max()))
    zero = np.abs(ev) <= 1e-13 * scale
    return int(np.sum((ev < 0) & ~zero)), int(zero.sum())


def eigenvalue_count(op: SchrodingerOp, a: float, b: float, method: str = "auto") -> int:
    """Number of eigenvalues in the closed interval [a, b].

    ``dense`` counts a full dense spectrum; ``inertia`` uses Sylvester's
    law on LDL^T factorizations at both ends.  An endpoint that is
    numerically an eigenvalue is nudged outward by 1e-12.
    """
    if a > b:
        raise DomainError("need a <= b")
    mat = op.symmetric_matrix
    n = mat.shape[0]
    if method == "auto":
        method = "dense" if n <= DENSE_LIMIT else "inertia"
    if method == "dense":
        ev = la.eigvalsh(mat.toarray())
        # closed interval: eigenvalues within rounding of an endpoint count
        slack = 1e-12 * max(1.0, float(np.abs(ev).max()))
        return int(np.sum((ev >= a - slack) & (ev <= b + slack)))
    if method != "inertia":
        raise DomainError(f"unknown method {method!r}")
    lo, zl = _inertia_below(mat, a)
    if zl:
        lo, _ = _inertia_below(mat, a - 1e-12)
    hi, zh = _inertia_below(mat, b)
    if zh:
        hi, _ = _inertia_below(mat, b + 1e-12)
    return hi - lo


# ---------------------------------------------------------------- exhaustion

@dataclass
class ExhaustionTrace:
    """lambda_0 of Dirichlet problems along an exhaustion.

    ``direction`` is ``non-increasing`` for growing balls and
    ``non-decreasing`` for shrinking complements.
    """

    radii: list
    lambda0: list
    residuals: list
    iterations: list
    direction: str
    limit: float | None = None
    fit_residual: float | None = None
    note: str = ""
    outer_radius: int | None = None
    extra: dict = field(default_factory=dict)

    def is_monotone(self, tol: float = 1e-10) -> bool:
        d = np.diff(self.lambda0)
        if self.direction == "non-increasing":
            return bool(np.all(d <= tol))
        return bool(np.all(d >= -tol))

    def csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["radius", "lambda0", "residual", "iterations"])
        for row in zip(self.radii, self.lambda0, self.residuals, self.iterations):
            w.writerow([row[0], repr(float(row[1])), repr(float(row[2])), row[3]])
        return buf.getvalue()

    def summary(self) -> dict:
        out = asdict(self)
        out["lambda0"] = [float(v) for v in self.lambda0]
        out["residuals"] = [float(v) for v in self.residuals]
        return out


def richardson_fit(radii, values, tail: int = 4):
    """Least-squares fit ``lambda(r) = L + c / r^2`` on the last radii; returns (L, rms)."""
    r = np.asarray(radii, dtype=float)[-tail:]
    v = np.asarray(values, dtype=float)[-tail:]
    if len(r) < 2 or np.any(r <= 0):
        return None, None
    design = np.column_stack([np.ones_like(r), 1.0 / r**2])
    coef, *_ = np.linalg.lstsq(design, v, rcond=None)
    rms = float(np.sqrt(np.mean((design @ coef - v) ** 2)))
    return float(coef[0]), rms


def _lifted(cover, op_base):
    from .covering import lift_operator
    return lift_operator(cover, op_base)


def lambda0_exhaustion(cover, op_base: SchrodingerOp, radii, tol: float = 1e-9) -> ExhaustionTrace:
    """Dirichlet lambda_0 on growing balls around the root of the cover."""
    radii = [int(r) for r in radii]
    if radii != sorted(radii) or not radii:
        raise DomainError("radii must be non-empty and ascending")
    if cover.trunc is not None and radii[-1] > cover.trunc - 1:
        raise CoverError(f"radius {radii[-1]} exceeds the safe truncation {cover.trunc - 1}")
    lifted = _lifted(cover, op_base)
    vals, res, its = [], [], []
    for r in radii:
        rep = lowest_eigenpairs(induced_dirichlet(lifted, ball(cover.total, cover.root, r)), 1, tol)
        vals.append(rep.lambda0)
        res.append(float(rep.residuals[0]))
        its.append(rep.iterations)
    limit, fit = richardson_fit(radii, vals)
    return ExhaustionTrace(radii, vals, res, its, "non-increasing", limit, fit,
                           "limit from a 1/r^2 fit; informational only")


def _component_lambda0(op: SchrodingerOp, tol):
    """Smallest lambda_0 over connected components of the free vertex set."""
    from scipy.sparse import csgraph

    free = op.free
    sub = op.graph.hop_adjacency[free][:, free]
    ncomp, lab = csgraph.connected_components(sub, directed=False)
    best = None
    for c in range(ncomp):
        keep = free[lab == c]
        rep = lowest_eigenpairs(induced_dirichlet(op, keep), 1, tol)
        if best is None or rep.lambda0 < best.lambda0:
            best = rep
    return best


def lambda0_ess_estimate(cover, op_base: SchrodingerOp, removal_radii, outer_radius: int,
                         tol: float = 1e-9) -> ExhaustionTrace:
    """Dirichlet lambda_0 of ball(outer) minus ball(k) for each removal radius k."""
    ks = [int(k) for k in removal_radii]
    if not ks or ks != sorted(ks) or ks[-1] >= outer_radius:
        raise DomainError("removal radii must be ascending and below the outer radius")
    if cover.trunc is not None and outer_radius > cover.trunc:
        raise CoverError("outer radius exceeds R_trunc")
    lifted = _lifted(cover, op_base)
    d = cover.depth
    vals, res, its = [], [], []
    for k in ks:
        keep = (d > k) & (d <= outer_radius) & ~lifted.dirichlet
        if not keep.any():
            raise DomainError(f"empty domain outside ball({k}) (finite cover or radius too large)")
        rep = _component_lambda0(induced_dirichlet(lifted, keep), tol)
        vals.append(rep.lambda0)
        res.append(float(rep.residuals[0]))
        its.append(rep.iterations)
    return ExhaustionTrace(ks, vals, res, its, "non-decreasing", None, None,
                           "outer truncation biases every value upward", outer_radius)


# ---------------------------------------------------------------- regular trees

def radial_tree_matrix(degree: int, levels: int, rooted: bool = True, potential: float = 0.0):
    """Tridiagonal (diag, offdiag) of the radial part of a Dirichlet tree domain.

    ``rooted`` domains are balls: ``levels`` spheres around a vertex with
    ``degree`` children.  Otherwise the domain is a branch hanging below a
    masked parent, with ``degree - 1`` children per vertex.  Outside the
    domain everything is Dirichlet, so every diagonal entry is ``degree``
    (combinatorial measure).
    """
    if levels < 1:
        raise DomainError("need at least one level")
    diag = np.full(levels, float(degree) + potential)
    off = np.full(levels - 1, -np.sqrt(degree - 1.0))
    if rooted and levels > 1:
        off[0] = -np.sqrt(float(degree))
    return diag, off


def radial_tree_lambda0(degree: int, levels: int, rooted: bool = True, potential: float = 0.0) -> float:
    """lambda_0 of the Dirichlet problem on a regular-tree ball or branch.

    The ground state is radial, so the spherical averages reduce the
    problem exactly to a tridiagonal matrix.
    """
    diag, off = radial_tree_matrix(degree, levels, rooted, potential)
    if levels == 1:
        return float(diag[0])
    return float(la.eigvalsh_tridiagonal(diag, off, select="i", select_range=(0, 0))[0])


def tree_ball_lambda0(degree: int, radius: int, potential: float = 0.0) -> float:
    """Dirichlet lambda_0 of ball(radius) in the infinite ``degree``-regular tree."""
    return radial_tree_lambda0(degree, radius + 1, True, potential)


def tree_annulus_lambda0(degree: int, k: int, outer: int, potential: float = 0.0) -> float:
    """Dirichlet lambda_0 of ball(outer) minus ball(k) in the regular tree."""
    if not 0 <= k < outer:
        raise DomainError("need 0 <= k < outer")
    return radial_tree_lambda0(degree, outer - k, False, potential)
