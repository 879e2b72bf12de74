"""Preconditioners ``M = L L^T`` for PCG: identity, Jacobi and IC(0)."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import spsolve_triangular

from .sparse import CsrMatrix, DimensionError

__all__ = [
    "Preconditioner",
    "IC0Breakdown",
    "identity",
    "build_jacobi",
    "build_ic0",
    "build",
    "apply",
]


class IC0Breakdown(ArithmeticError):
    """A nonpositive pivot appeared during incomplete Cholesky.

    ``row`` is the 0-based index of the failing pivot.  Retrying with a
    diagonal shift (``build_ic0(A, shift=alpha)``) factors ``A + alpha I``.
    """

    def __init__(self, row: int, pivot: float):
        super().__init__(f"nonpositive pivot {pivot:.3e} in row {row}")
        self.row = row
        self.pivot = pivot


@dataclass(frozen=True, eq=False)
class Preconditioner:
    """Solves with ``M``.  ``kind`` is one of ``identity``, ``jacobi``, ``ic0``."""

    kind: str
    n: int
    diag_inv: np.ndarray | None = None
    L: sp.csr_matrix | None = None
    shift: float = 0.0

    def __post_init__(self):
        if self.kind not in ("identity", "jacobi", "ic0"):
            raise ValueError(f"unknown preconditioner kind {self.kind!r}")
        if self.L is not None:
            object.__setattr__(self, "_LT", self.L.T.tocsr())

    def apply(self, r) -> np.ndarray:
        return apply(self, r)

    def __call__(self, r) -> np.ndarray:
        return apply(self, r)

    def factor(self) -> sp.csr_matrix:
        """The factor ``L`` of ``M = L L^T`` as scipy CSR."""
        if self.kind == "identity":
            return sp.identity(self.n, format="csr")
        if self.kind == "jacobi":
            return sp.diags(1.0 / np.sqrt(self.diag_inv), format="csr")
        return self.L.copy()


def identity(n: int) -> Preconditioner:
    return Preconditioner("identity", n)


def build_jacobi(A: CsrMatrix) -> Preconditioner:
    d = A.diagonal()
    if np.any(d <= 0):
        i = int(np.flatnonzero(d <= 0)[0])
        raise ValueError(f"Jacobi needs a positive diagonal; a[{i},{i}] = {d[i]!r}")
    return Preconditioner("jacobi", A.n, diag_inv=1.0 / d)


def build_ic0(A: CsrMatrix, shift: float = 0.0) -> Preconditioner:
    """Zero-fill incomplete Cholesky of ``A + shift*I``.

    The factor keeps exactly the lower pattern of ``A``, and
    ``(L L^T)_ij = a_ij`` holds on that pattern.  Raises :class:`IC0Breakdown`
    on a nonpositive pivot instead of shifting automatically.
    """
    if shift < 0:
        raise ValueError("shift must be nonnegative")
    low = A.lower()
    d = low.diagonal()
    if np.any(d <= 0):
        i = int(np.flatnonzero(d <= 0)[0])
        raise ValueError(f"IC(0) needs a positive diagonal; a[{i},{i}] = {d[i]!r}")
    n = A.n
    ptr, idx = low.indptr, low.indices
    vals = low.data.astype(np.float64).copy()
    diag_pos = ptr[1:] - 1  # diagonal is the last stored entry of each lower row
    vals[diag_pos] += shift
    # row-oriented IKJ: rows[i] maps column -> position for the current row
    for i in range(n):
        start, stop = ptr[i], ptr[i + 1]
        pos = {int(idx[q]): q for q in range(start, stop)}
        for q in range(start, stop - 1):
            k = int(idx[q])
            # l_ik = (a_ik - sum_{j<k} l_ij l_kj) / l_kk over the shared pattern
            s = vals[q]
            for t in range(ptr[k], ptr[k + 1] - 1):
                j = int(idx[t])
                qj = pos.get(j)
                if qj is not None and j < k:
                    s -= vals[qj] * vals[t]
            vals[q] = s / vals[diag_pos[k]]
        piv = vals[stop - 1] - float(np.dot(vals[start:stop - 1], vals[start:stop - 1]))
        if not piv > 0:
            raise IC0Breakdown(i, float(piv))
        vals[stop - 1] = math.sqrt(piv)
    L = sp.csr_matrix((vals, idx.copy(), ptr.copy()), shape=(n, n))
    L.has_sorted_indices = True
    return Preconditioner("ic0", n, L=L, shift=float(shift))


def build(A: CsrMatrix, kind: str, shift: float = 0.0) -> Preconditioner:
    """Dispatch on ``kind``; ``none`` is accepted as an alias of identity."""
    if kind in ("none", "identity"):
        return identity(A.n)
    if kind == "jacobi":
        return build_jacobi(A)
    if kind == "ic0":
        return build_ic0(A, shift=shift)
    raise ValueError(f"unknown preconditioner kind {kind!r}")


def apply(P: Preconditioner, r) -> np.ndarray:
    """Return ``z = M^{-1} r``."""
    r = np.asarray(r, dtype=np.float64)
    if r.shape != (P.n,):
        raise DimensionError(f"vector of length {r.shape} does not match order {P.n}")
    if P.kind == "identity":
        return r.copy()
    if P.kind == "jacobi":
        return r * P.diag_inv
    y = spsolve_triangular(P.L, r, lower=True, unit_diagonal=False)
    return spsolve_triangular(P._LT, y, lower=False, unit_diagonal=False)
