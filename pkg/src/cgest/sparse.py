"""Sparse symmetric matrix storage, products and Matrix Market I/O.

Matrices are kept in full (mirrored) compressed-row storage so that the
product ``A @ v`` always sums each row in ascending column order.
"""

from __future__ import annotations

import io
import os
import warnings
from dataclasses import dataclass, field
from typing import IO, Union

import numpy as np
import scipy.sparse as sp

__all__ = [
    "CsrMatrix",
    "DimensionError",
    "MatrixMarketError",
    "MissingDiagonalWarning",
    "matvec",
    "read_matrix_market",
    "write_matrix_market",
    "read_rhs",
]


class DimensionError(ValueError):
    """Raised when operand sizes do not agree."""


class MatrixMarketError(ValueError):
    """Raised for unreadable or unsupported Matrix Market input."""


class MissingDiagonalWarning(UserWarning):
    """A matrix was read with structurally missing diagonal entries."""


@dataclass(frozen=True, eq=False)
class CsrMatrix:
    """Immutable symmetric matrix in compressed-row form.

    ``row_offsets`` has length ``n + 1``; the column indices of every row are
    strictly increasing.  Construction checks that the stored pattern and the
    values are exactly symmetric.
    """

    n: int
    row_offsets: np.ndarray
    col_indices: np.ndarray
    values: np.ndarray
    _csr: sp.csr_matrix = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        n = int(self.n)
        if n < 1:
            raise ValueError("matrix order must be positive")
        ptr = np.ascontiguousarray(self.row_offsets, dtype=np.int64)
        idx = np.ascontiguousarray(self.col_indices, dtype=np.int64)
        val = np.ascontiguousarray(self.values, dtype=np.float64)
        if ptr.shape != (n + 1,) or ptr[0] != 0 or ptr[-1] != idx.size:
            raise ValueError("row_offsets inconsistent with the stored entries")
        if np.any(np.diff(ptr) < 0):
            raise ValueError("row_offsets must be nondecreasing")
        if idx.size != val.size:
            raise ValueError("col_indices and values differ in length")
        if idx.size and (idx.min() < 0 or idx.max() >= n):
            raise ValueError("column index out of range")
        if not np.all(np.isfinite(val)):
            raise ValueError("matrix values must be finite")
        # strictly increasing columns inside each row
        if idx.size > 1:
            step = np.diff(idx)
            row_start = np.zeros(idx.size, dtype=bool)
            row_start[ptr[:-1][np.diff(ptr) > 0]] = True
            if np.any((step <= 0) & ~row_start[1:]):
                raise ValueError("column indices must be strictly increasing within rows")
        for name, arr in (("n", n), ("row_offsets", ptr), ("col_indices", idx), ("values", val)):
            if isinstance(arr, np.ndarray):
                arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        csr = sp.csr_matrix((val, idx, ptr), shape=(n, n))
        csr.has_sorted_indices = True
        diff = csr - csr.T
        if diff.nnz and np.any(diff.data != 0):
            raise ValueError("matrix is not symmetric")
        pattern = sp.csr_matrix((np.ones(idx.size), idx, ptr), shape=(n, n))
        asym = pattern - pattern.T
        if asym.nnz and np.any(asym.data != 0):
            raise ValueError("sparsity pattern is not symmetric")
        object.__setattr__(self, "_csr", csr)

    # -- constructors -----------------------------------------------------

    @classmethod
    def from_scipy(cls, mat) -> "CsrMatrix":
        csr = sp.csr_matrix(mat, dtype=np.float64)
        csr.sum_duplicates()
        csr.sort_indices()
        if csr.shape[0] != csr.shape[1]:
            raise DimensionError(f"matrix must be square, got {csr.shape}")
        return cls(csr.shape[0], csr.indptr, csr.indices, csr.data)

    @classmethod
    def from_dense(cls, a) -> "CsrMatrix":
        a = np.asarray(a, dtype=np.float64)
        if a.ndim != 2 or a.shape[0] != a.shape[1]:
            raise DimensionError(f"matrix must be square, got shape {a.shape}")
        return cls.from_scipy(sp.csr_matrix(a))

    @classmethod
    def diag(cls, d) -> "CsrMatrix":
        d = np.asarray(d, dtype=np.float64)
        return cls.from_scipy(sp.diags(d, format="csr"))

    # -- views ------------------------------------------------------------

    @property
    def shape(self):
        return (self.n, self.n)

    @property
    def nnz(self) -> int:
        return int(self.values.size)

    def to_scipy(self) -> sp.csr_matrix:
        """A copy as a :class:`scipy.sparse.csr_matrix`."""
        return self._csr.copy()

    def toarray(self) -> np.ndarray:
        return self._csr.toarray()

    def diagonal(self) -> np.ndarray:
        return self._csr.diagonal()

    def has_full_diagonal(self) -> bool:
        """True if every diagonal entry is stored and strictly positive."""
        d = self.diagonal()
        return bool(np.all(d > 0))

    def lower(self) -> sp.csr_matrix:
        """Lower triangle (including the diagonal) as scipy CSR."""
        return sp.tril(self._csr, format="csr")

    def shifted(self, alpha: float) -> "CsrMatrix":
        """Return ``A + alpha * I``."""
        if alpha == 0:
            return self
        return CsrMatrix.from_scipy(self._csr + alpha * sp.identity(self.n, format="csr"))

    def __matmul__(self, v):
        return matvec(self, v)

    def __repr__(self):
        return f"CsrMatrix(n={self.n}, nnz={self.nnz})"


def matvec(A: CsrMatrix, v) -> np.ndarray:
    """Product ``A v``; rows are summed in ascending column order."""
    v = np.asarray(v, dtype=np.float64)
    if v.shape != (A.n,):
        raise DimensionError(f"vector of length {v.shape} does not match order {A.n}")
    return A._csr @ v


# -- Matrix Market ---------------------------------------------------------

Source = Union[str, os.PathLike, IO[bytes], IO[str]]


def _open_text(source):
    if isinstance(source, (str, os.PathLike)):
        return open(source, "r", encoding="ascii", errors="strict"), True
    if isinstance(source, (bytes, bytearray)):
        return io.StringIO(source.decode("ascii")), True
    if isinstance(source, io.TextIOBase):
        return source, False
    return io.TextIOWrapper(source, encoding="ascii"), False


def read_matrix_market(source: Source) -> CsrMatrix:
    """Read a ``coordinate real symmetric|general`` Matrix Market file.

    Symmetric input is mirrored to full storage, duplicate entries are
    summed and 1-based indices become 0-based.  ``general`` input must be
    exactly symmetric.  A missing diagonal entry only warns here; the
    preconditioner builders reject such matrices.
    """
    fh, close = _open_text(source)
    try:
        header = fh.readline()
        parts = header.strip().split()
        if len(parts) != 5 or parts[0].lower() != "%%matrixmarket" or parts[1].lower() != "matrix":
            raise MatrixMarketError(f"malformed header: {header.strip()!r}")
        fmt, fieldtype, symmetry = (p.lower() for p in parts[2:])
        if fmt != "coordinate":
            raise MatrixMarketError(f"only coordinate format is supported, got {fmt!r}")
        if fieldtype != "real":
            raise MatrixMarketError(f"only real fields are supported, got {fieldtype!r}")
        if symmetry not in ("symmetric", "general"):
            raise MatrixMarketError(f"unsupported symmetry {symmetry!r}")

        size_line = None
        for line in fh:
            s = line.strip()
            if not s or s.startswith("%"):
                continue
            size_line = s
            break
        if size_line is None:
            raise MatrixMarketError("missing size line")
        try:
            nrows, ncols, nnz = (int(t) for t in size_line.split())
        except ValueError:
            raise MatrixMarketError(f"malformed size line: {size_line!r}") from None
        if nrows != ncols or nrows < 1:
            raise MatrixMarketError(f"matrix must be square and nonempty, got {nrows}x{ncols}")

        rows = np.empty(nnz, dtype=np.int64)
        cols = np.empty(nnz, dtype=np.int64)
        vals = np.empty(nnz, dtype=np.float64)
        count = 0
        for line in fh:
            s = line.strip()
            if not s or s.startswith("%"):
                continue
            tok = s.split()
            if len(tok) != 3:
                raise MatrixMarketError(f"malformed entry line: {s!r}")
            if count >= nnz:
                raise MatrixMarketError("more entries than declared")
            try:
                i, j, v = int(tok[0]), int(tok[1]), float(tok[2])
            except ValueError:
                raise MatrixMarketError(f"malformed entry line: {s!r}") from None
            if not (1 <= i <= nrows and 1 <= j <= ncols):
                raise MatrixMarketError(f"index ({i}, {j}) out of range")
            rows[count], cols[count], vals[count] = i - 1, j - 1, v
            count += 1
        if count != nnz:
            raise MatrixMarketError(f"expected {nnz} entries, found {count}")
    finally:
        if close:
            fh.close()

    if symmetry == "symmetric":
        off = rows != cols
        rows, cols, vals = (
            np.concatenate([rows, cols[off]]),
            np.concatenate([cols, rows[off]]),
            np.concatenate([vals, vals[off]]),
        )
    coo = sp.coo_matrix((vals, (rows, cols)), shape=(nrows, nrows))
    csr = coo.tocsr()  # sums duplicates
    csr.sort_indices()
    if symmetry == "general":
        diff = csr - csr.T
        if diff.nnz and np.any(diff.data != 0):
            raise MatrixMarketError("general matrix is not symmetric")
    A = CsrMatrix(nrows, csr.indptr, csr.indices, csr.data)
    if not np.all(A.diagonal() != 0):
        missing = int(np.sum(A.diagonal() == 0))
        warnings.warn(f"{missing} diagonal entries missing or zero", MissingDiagonalWarning, stacklevel=2)
    return A


def write_matrix_market(A: CsrMatrix, target, comment: str | None = None) -> None:
    """Write ``A`` as ``coordinate real symmetric`` (lower triangle, round-trip exact floats)."""
    low = sp.tril(A._csr, format="coo")
    order = np.lexsort((low.row, low.col))  # column-major, as most MM writers do
    lines = ["%%MatrixMarket matrix coordinate real symmetric"]
    if comment:
        lines.extend("% " + c for c in comment.splitlines())
    lines.append(f"{A.n} {A.n} {low.nnz}")
    for i, j, v in zip(low.row[order], low.col[order], low.data[order]):
        lines.append(f"{i + 1} {j + 1} {float(v)!r}")
    text = "\n".join(lines) + "\n"
    if isinstance(target, (str, os.PathLike)):
        with open(target, "w", encoding="ascii", newline="\n") as fh:
            fh.write(text)
    elif isinstance(target, io.TextIOBase):
        target.write(text)
    else:
        target.write(text.encode("ascii"))


# -- right-hand sides ------------------------------------------------------

def read_rhs(spec: str, n: int, seed: int | None = None) -> np.ndarray:
    """Build or load a right-hand side.

    ``"equal"`` gives the constant vector of unit Euclidean norm.
    ``"uniform-random"`` draws i.i.d. entries on ``(-1, 1)`` from
    ``numpy.random.Generator(PCG64(seed))`` and normalizes to unit norm.
    Anything else is a path to a text file with one real per line, used as is.
    """
    if spec == "equal":
        b = np.full(n, 1.0 / np.sqrt(n))
    elif spec in ("uniform-random", "random"):
        if seed is None:
            raise ValueError("uniform-random right-hand side needs a seed")
        rng = np.random.Generator(np.random.PCG64(seed))
        b = rng.uniform(-1.0, 1.0, size=n)
        b /= np.linalg.norm(b)
    else:
        try:
            b = np.loadtxt(spec, dtype=np.float64, ndmin=1, comments="%")
        except OSError as exc:
            raise FileNotFoundError(f"cannot read right-hand side {spec!r}: {exc}") from exc
        if b.shape != (n,):
            raise DimensionError(f"right-hand side has {b.size} entries, matrix order is {n}")
    if not np.all(np.isfinite(b)):
        raise ValueError("right-hand side must be finite")
    if not np.any(b):
        raise ValueError("right-hand side is the zero vector")
    return b
