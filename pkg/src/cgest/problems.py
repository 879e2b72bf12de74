"""Synthetic SPD test problems with controlled spectra and convergence."""

from __future__ import annotations

import numpy as np
import scipy.sparse as sp

from .sparse import CsrMatrix

__all__ = [
    "geometric_spectrum",
    "strakos_spectrum",
    "clustered_spectrum",
    "staircase_spectrum",
    "spectrum_matrix",
    "laplacian_1d",
    "laplacian_2d",
    "random_sparse_spd",
    "jacobi_matrix",
    "designed_problem",
    "stagnation_problem",
]


def _check(eigs):
    eigs = np.asarray(eigs, dtype=np.float64)
    if eigs.ndim != 1 or eigs.size == 0:
        raise ValueError("spectrum must be a nonempty vector")
    if not np.all(eigs > 0) or not np.all(np.isfinite(eigs)):
        raise ValueError("spectrum must be finite and positive")
    return eigs


def geometric_spectrum(lmin: float, lmax: float, n: int) -> np.ndarray:
    """``n`` eigenvalues spaced geometrically from ``lmin`` to ``lmax``."""
    if not (lmin > 0 and lmax > 0):
        raise ValueError("spectrum must be finite and positive")
    if n == 1:
        return _check([lmin])
    return _check(lmin * (lmax / lmin) ** (np.arange(n) / (n - 1)))


def strakos_spectrum(n: int, lmin: float = 0.1, lmax: float = 100.0, rho: float = 0.9) -> np.ndarray:
    """Eigenvalues accumulating at ``lmin`` with isolated large outliers.

    ``lambda_i = lmin + (i / (n-1)) (lmax - lmin) rho^(n-1-i)``.  For ``rho``
    well below 1, finite-precision CG needs many more than ``n`` steps.
    """
    i = np.arange(n)
    return _check(lmin + i / max(n - 1, 1) * (lmax - lmin) * rho ** (n - 1 - i))


def clustered_spectrum(n: int, centers, rel_width: float = 0.05, seed: int = 0) -> np.ndarray:
    """``n`` eigenvalues split evenly over clusters around ``centers``."""
    centers = np.asarray(centers, dtype=np.float64)
    rng = np.random.default_rng(seed)
    sizes = np.full(centers.size, n // centers.size)
    sizes[: n % centers.size] += 1
    eigs = [c * (1 + rel_width * rng.uniform(-1, 1, size=m)) for c, m in zip(centers, sizes)]
    return _check(np.sort(np.concatenate(eigs)))


def staircase_spectrum(n: int, levels, spread: float = 0.3) -> np.ndarray:
    """Plateaus of eigenvalues: equal-size groups spread geometrically around each level."""
    levels = np.asarray(levels, dtype=np.float64)
    sizes = np.full(levels.size, n // levels.size)
    sizes[: n % levels.size] += 1
    eigs = [lev * (1 + spread) ** np.linspace(-1, 1, m) for lev, m in zip(levels, sizes)]
    return _check(np.sort(np.concatenate(eigs)))


def spectrum_matrix(eigs, similarity: str = "diagonal", seed: int = 0, sweeps: int = 2) -> CsrMatrix:
    """SPD matrix with spectrum ``eigs``.

    ``diagonal`` gives ``diag(eigs)`` exactly.  ``givens`` applies ``sweeps``
    sweeps of random neighbor rotations, keeping the matrix banded.
    ``dense`` uses a random orthogonal similarity.
    """
    eigs = _check(eigs)
    n = eigs.size
    if similarity == "diagonal":
        return CsrMatrix.diag(eigs)
    rng = np.random.default_rng(seed)
    if similarity == "dense":
        Q, R = np.linalg.qr(rng.standard_normal((n, n)))
        Q *= np.sign(np.diag(R))
        B = (Q * eigs) @ Q.T
    elif similarity == "givens":
        B = np.diag(eigs)
        for sweep in range(sweeps):
            for i in range(sweep % 2, n - 1, 2):
                t = rng.uniform(0, 2 * np.pi)
                c, s = np.cos(t), np.sin(t)
                G = np.array([[c, -s], [s, c]])
                B[[i, i + 1], :] = G @ B[[i, i + 1], :]
                B[:, [i, i + 1]] = B[:, [i, i + 1]] @ G.T
    else:
        raise ValueError(f"unknown similarity {similarity!r}")
    B = 0.5 * (B + B.T)
    B[np.abs(B) < 1e-300] = 0.0
    return CsrMatrix.from_dense(B)


def laplacian_1d(n: int) -> CsrMatrix:
    """``tridiag(-1, 2, -1)`` of order ``n``."""
    return CsrMatrix.from_scipy(sp.diags([-np.ones(n - 1), 2 * np.ones(n), -np.ones(n - 1)], [-1, 0, 1]))


def laplacian_2d(m: int) -> CsrMatrix:
    """Five-point Laplacian on an ``m x m`` grid (order ``m**2``)."""
    T = sp.diags([-np.ones(m - 1), 2 * np.ones(m), -np.ones(m - 1)], [-1, 0, 1])
    I = sp.identity(m)
    return CsrMatrix.from_scipy(sp.kron(T, I) + sp.kron(I, T))


def random_sparse_spd(n: int, density: float = 0.02, seed: int = 0, diag_scale: float = 1.0) -> CsrMatrix:
    """Random symmetric sparse matrix made SPD by strict diagonal dominance.

    Diagonal entries are additionally scaled by ``10**U(0, diag_scale)`` so
    that Jacobi preconditioning has something to do.
    """
    rng = np.random.default_rng(seed)
    B = sp.random(n, n, density=density, random_state=rng, data_rvs=lambda k: rng.uniform(-1, 1, k))
    B = sp.triu(B, k=1)
    B = B + B.T
    rowsum = np.asarray(abs(B).sum(axis=1)).ravel()
    d = (rowsum + 1.0) * 10.0 ** rng.uniform(0, diag_scale, n)
    return CsrMatrix.from_scipy(B + sp.diags(d))


def jacobi_matrix(gammas, betas) -> CsrMatrix:
    """Tridiagonal Lanczos matrix that reproduces the given CG coefficients.

    ``gammas`` are ``gamma_0..gamma_{n-1}`` and ``betas`` are
    ``beta_1..beta_{n-1}``.  CG on this matrix with ``b`` a multiple of
    ``e_1`` produces these coefficients in exact arithmetic.
    """
    g = np.asarray(gammas, dtype=np.float64)
    b = np.asarray(betas, dtype=np.float64)
    n = g.size
    if b.size != n - 1:
        raise ValueError("need n gammas and n-1 betas")
    if not (np.all(g > 0) and np.all(b > 0)):
        raise ValueError("CG coefficients must be positive")
    diag = 1.0 / g
    diag[1:] += b / g[:-1]
    off = np.sqrt(b) / g[:-1]
    return CsrMatrix.from_scipy(sp.diags([off, diag, off], [-1, 0, 1]))


def designed_problem(terms, rnorm2):
    """Problem whose CG run has ``gamma_k ||r_k||^2 = terms[k]`` and ``||r_k||^2 = rnorm2[k]``.

    Returns ``(A, b)``.  In exact arithmetic ``eps_k`` is the tail sum of
    ``terms`` from ``k`` on.
    """
    t = np.asarray(terms, dtype=np.float64)
    s = np.asarray(rnorm2, dtype=np.float64)
    if t.shape != s.shape:
        raise ValueError("terms and rnorm2 must have equal length")
    A = jacobi_matrix(t / s, s[1:] / s[:-1])
    b = np.zeros(t.size)
    b[0] = np.sqrt(s[0])
    return A, b


def stagnation_problem(plateau: int = 60, decay: int = 20, q: float = 0.97, mass: float = 300.0, fast: float = 0.1):
    """Quasi-stagnation for ``plateau`` steps followed by fast convergence.

    During the plateau the terms shrink geometrically with ratio ``q`` while
    the error stays above ``mass``; afterwards the error drops by the factor
    ``fast`` per step.  Taking ``||r_k||^2 = eps_k`` keeps the condition
    number moderate (below 1e6 for the defaults).  Returns ``(A, b, eps)``
    with ``eps`` the exact-arithmetic errors.
    """
    head = q ** np.arange(plateau)
    tail_eps = mass * fast ** np.arange(decay + 1)
    tail = tail_eps[:-1] - tail_eps[1:]
    tail[-1] = tail_eps[-2]
    terms = np.concatenate([head, tail])
    eps = np.concatenate([np.cumsum(terms[::-1])[::-1], [0.0]])
    A, b = designed_problem(terms, eps[:-1])
    return A, b, eps
