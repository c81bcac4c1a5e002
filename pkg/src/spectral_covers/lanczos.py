"""Thick-restart block Lanczos for the lowest eigenpairs of a sparse symmetric matrix.

The Krylov basis is kept fully reorthogonalized (two Gram-Schmidt
passes).  The expansion operator is either ``A`` itself or the shifted
inverse ``(A - sigma)^{-1}`` with ``sigma`` below the spectrum; in both
cases Ritz pairs are extracted with a Rayleigh-Ritz projection of ``A``
so the reported residuals are true residuals of ``A``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg as la
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import ConvergenceError


@dataclass
class LanczosResult:
    values: np.ndarray
    vectors: np.ndarray
    residuals: np.ndarray
    iterations: int
    restarts: int
    converged: bool


def _orthonormalize(block, basis, rng):
    """Orthogonalize ``block`` against ``basis`` and itself; refill lost columns randomly."""
    n = block.shape[0]
    out = np.array(block, dtype=float)
    for _ in range(3):
        for _pass in range(2):
            if basis is not None and basis.shape[1]:
                out -= basis @ (basis.T @ out)
        q, r = np.linalg.qr(out)
        scale = np.linalg.norm(block, axis=0).max() or 1.0
        bad = np.abs(np.diag(r)) < 1e-10 * scale
        if not bad.any():
            if basis is not None and basis.shape[1]:
                q -= basis @ (basis.T @ q)
                q, _ = np.linalg.qr(q)
            return q
        out = q
        out[:, bad] = rng.standard_normal((n, int(bad.sum())))
        block = out.copy()
    raise ConvergenceError("could not extend the Krylov basis (space exhausted)")


def _lower_bound(a):
    """Cheap lower bound on the spectrum: Gershgorin."""
    diag = a.diagonal()
    off = np.asarray(abs(a).sum(axis=1)).ravel() - np.abs(diag)
    return float(np.min(diag - off))


def lanczos_smallest(a, k, tol=1e-10, seed=0, shift_invert=True, block=None,
                     max_basis=None, max_restarts=500, sigma=None) -> LanczosResult:
    """Lowest ``k`` eigenpairs of the symmetric sparse matrix ``a``.

    Parameters
    ----------
    a : sparse matrix
        Symmetric, shape (n, n).
    k : int
        Number of wanted eigenpairs.
    tol : float
        Absolute residual tolerance ``||a x - theta x||`` (unit x).
    shift_invert : bool
        Expand with ``(a - sigma)^{-1}``.  ``sigma`` must lie below the
        spectrum; it defaults to just under the Gershgorin bound.
    """
    a = sp.csr_matrix(a)
    n = a.shape[0]
    if not 1 <= k <= n:
        raise ValueError(f"k must lie in [1, {n}]")
    rng = np.random.default_rng(seed)
    b = block or max(1, min(k, n))
    m = max_basis or min(n, max(3 * b + 2 * k + 30, 8 * b))
    m = min(m, n)
    keep = min(max(k + b, m // 2), m - b)

    def factor(shift):
        try:
            return spla.splu((a - shift * sp.identity(n)).tocsc(), permc_spec="MMD_AT_PLUS_A").solve
        except RuntimeError:
            return None

    scale = max(1.0, float(np.abs(a.diagonal()).max()))
    expand = a.__matmul__
    if shift_invert:
        if sigma is None:
            sigma = _lower_bound(a) - 1e-5 * scale
        expand = factor(sigma) or expand

    basis = _orthonormalize(rng.standard_normal((n, b)), None, rng)
    a_basis = a @ basis
    current = basis
    iterations = 0
    restarts = 0
    while True:
        while basis.shape[1] + b <= m:
            w = expand(current)
            iterations += current.shape[1]
            current = _orthonormalize(w, basis, rng)
            basis = np.hstack([basis, current])
            a_basis = np.hstack([a_basis, a @ current])
        h = basis.T @ a_basis
        h = 0.5 * (h + h.T)
        theta, s = la.eigh(h)
        x = basis @ s[:, :k]
        ax = a @ x
        res = np.linalg.norm(ax - x * theta[:k], axis=0)
        if np.all(res <= tol) or basis.shape[1] >= n:
            return LanczosResult(theta[:k], x, res, iterations, restarts, bool(np.all(res <= tol)))
        if restarts >= max_restarts:
            return LanczosResult(theta[:k], x, res, iterations, restarts, False)
        restarts += 1
        if shift_invert and restarts & (restarts - 1) == 0:
            # move the shift up to the wanted cluster: clustered spectra converge slowly otherwise
            new = theta[0] - max(theta[k - 1] - theta[0], 1e-6 * scale)
            if new > sigma + 0.1 * abs(theta[0] - sigma):
                solve = factor(new)
                if solve is not None:
                    sigma, expand = new, solve
        p = min(keep, basis.shape[1])
        # re-orthonormalize and recompute A times the basis to stop drift
        basis, _ = np.linalg.qr(basis @ s[:, :p])
        a_basis = a @ basis
        # expand along the normalized residuals of the wanted Ritz pairs; expanding the
        # Ritz vectors themselves loses the residual direction to cancellation
        resid = rng.standard_normal((n, b))
        j = min(b, k)
        resid[:, :j] = ax[:, :j] - x[:, :j] * theta[:j]
        nr = np.linalg.norm(resid, axis=0)
        resid[:, nr == 0] = rng.standard_normal((n, int(np.sum(nr == 0))))
        resid /= np.linalg.norm(resid, axis=0)
        w = expand(resid)
        iterations += b
        current = _orthonormalize(w, basis, rng)
        basis = np.hstack([basis, current])
        a_basis = np.hstack([a_basis, a @ current])
