"""Dense row-major matrix/vector storage and shared numerical kernels.

All arithmetic is 64-bit floating point.  Matrices are stored row-major
(C order) so that single-row access in the solver hot loops touches
contiguous memory.  Squared row norms and the squared Frobenius norm are
computed once at construction; every projection step divides by a cached
row norm, so zero rows are rejected up front.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

KZM_MAGIC = b"KZM1"


class DimensionError(ValueError):
    """Shapes of the operands do not match."""


class DenseMatrix:
    """Dense m-by-n matrix with cached squared row/column norms.

    Parameters
    ----------
    data : array_like, shape (m, n)
        Matrix entries; copied into a C-contiguous float64 array unless
        already in that layout.

    Raises
    ------
    ValueError
        If the array is not 2-D, is empty, or contains a zero row.
    """

    __slots__ = ("data", "m", "n", "row_norms_sq", "frob_norm_sq",
                 "_col_norms_sq", "_gram_pattern")

    def __init__(self, data):
        arr = np.ascontiguousarray(data, dtype=np.float64)
        if arr.ndim != 2:
            raise ValueError(f"expected a 2-D array, got ndim={arr.ndim}")
        if arr.size == 0:
            raise ValueError("empty matrix")
        self.data = arr
        self.m, self.n = arr.shape
        self.row_norms_sq = np.einsum("ij,ij->i", arr, arr)
        if not np.all(self.row_norms_sq > 0.0):
            bad = int(np.argmin(self.row_norms_sq))
            raise ValueError(f"zero row at index {bad}: projections are undefined")
        self.frob_norm_sq = float(self.row_norms_sq.sum())
        self._col_norms_sq = None
        self._gram_pattern = None

    @property
    def col_norms_sq(self) -> np.ndarray:
        """Squared column norms, computed on first use."""
        if self._col_norms_sq is None:
            self._col_norms_sq = np.einsum("ij,ij->j", self.data, self.data)
        return self._col_norms_sq

    def gram_nonzero_pattern(self, rtol: float) -> np.ndarray:
        """Boolean mask of row pairs whose inner product is not negligible.

        Entry (i, j) is True when |<A[i], A[j]>| > rtol * ||A[i]|| * ||A[j]||.
        Cached on first use; the pattern is O(m^2) memory.
        """
        if self._gram_pattern is None:
            gram = self.data @ self.data.T
            norms = np.sqrt(self.row_norms_sq)
            self._gram_pattern = np.abs(gram) > rtol * np.outer(norms, norms)
        return self._gram_pattern

    @property
    def shape(self):
        return (self.m, self.n)

    def row(self, i: int) -> np.ndarray:
        return self.data[i]


@dataclass
class LinearSystem:
    """A dense system ``A x = b`` with optional reference solutions.

    ``x_star`` is the unique solution of a consistent system, ``x_ls``
    the least-squares solution of an inconsistent one.  ``provenance``
    carries free-form generation metadata.
    """

    A: DenseMatrix
    b: np.ndarray
    x_star: Optional[np.ndarray] = None
    x_ls: Optional[np.ndarray] = None
    provenance: dict = field(default_factory=dict)

    def __post_init__(self):
        self.b = np.asarray(self.b, dtype=np.float64)
        if self.b.shape != (self.A.m,):
            raise DimensionError(f"b has shape {self.b.shape}, expected ({self.A.m},)")


def as_vector(v, length: Optional[int] = None) -> np.ndarray:
    v = np.ascontiguousarray(v, dtype=np.float64)
    if v.ndim != 1:
        raise DimensionError(f"expected a 1-D vector, got ndim={v.ndim}")
    if length is not None and v.shape[0] != length:
        raise DimensionError(f"vector length {v.shape[0]}, expected {length}")
    return v


def matvec(A: DenseMatrix, x) -> np.ndarray:
    """Product ``A x``."""
    x = as_vector(x, A.n)
    return A.data @ x


def matvec_transpose(A: DenseMatrix, y) -> np.ndarray:
    """Product ``A^T y`` computed against the row-major data (no transpose copy)."""
    y = as_vector(y, A.m)
    return y @ A.data


def residual(A: DenseMatrix, x, b) -> np.ndarray:
    """Residual ``b - A x``."""
    x = as_vector(x, A.n)
    b = as_vector(b, A.m)
    return b - A.data @ x


def project_row(x, A: DenseMatrix, i: int, b_i: float, alpha: float = 1.0) -> np.ndarray:
    """Relaxed orthogonal projection of ``x`` onto hyperplane ``<A[i], x> = b_i``.

    Returns ``x + alpha * (b_i - <A[i], x>) / ||A[i]||^2 * A[i]``; the
    input is not modified.  ``alpha`` in (0, 2) guarantees convergence of
    the enclosing sweep, but any value is accepted.
    """
    if not 0 <= i < A.m:
        raise IndexError(f"row index {i} out of range for {A.m} rows")
    x = as_vector(x, A.n)
    row = A.data[i]
    coef = alpha * (b_i - float(row @ x)) / A.row_norms_sq[i]
    return x + coef * row


def max_consecutive_angle(A: DenseMatrix) -> float:
    """Largest angle (radians) between any two consecutive rows.

    The cosine argument is clamped to [-1, 1] to absorb rounding.
    """
    if A.m < 2:
        raise ValueError("need at least 2 rows to form a consecutive angle")
    dots = np.einsum("ij,ij->i", A.data[:-1], A.data[1:])
    denom = np.sqrt(A.row_norms_sq[:-1] * A.row_norms_sq[1:])
    cosines = np.clip(dots / denom, -1.0, 1.0)
    return float(np.arccos(cosines).max())


# ---------------------------------------------------------------------------
# File formats: KZM1 binary blobs and plain CSV.
# ---------------------------------------------------------------------------

def _write_kzm(path, arr2d: np.ndarray) -> None:
    m, n = arr2d.shape
    with open(path, "wb") as fh:
        fh.write(KZM_MAGIC)
        fh.write(struct.pack("<QQ", m, n))
        fh.write(np.ascontiguousarray(arr2d, dtype="<f8").tobytes())


def _read_kzm(path) -> np.ndarray:
    with open(path, "rb") as fh:
        magic = fh.read(4)
        if magic != KZM_MAGIC:
            raise ValueError(f"{path}: bad magic {magic!r}, expected {KZM_MAGIC!r}")
        header = fh.read(16)
        if len(header) != 16:
            raise ValueError(f"{path}: truncated header")
        m, n = struct.unpack("<QQ", header)
        payload = fh.read(8 * m * n)
        if len(payload) != 8 * m * n:
            raise ValueError(f"{path}: expected {m}x{n} payload, file truncated")
    return np.frombuffer(payload, dtype="<f8").astype(np.float64).reshape(m, n)


def save_matrix_kzm(path, A) -> None:
    """Write a matrix as magic 'KZM1', u64 m, u64 n, then row-major LE float64."""
    data = A.data if isinstance(A, DenseMatrix) else np.asarray(A, dtype=np.float64)
    if data.ndim != 2:
        raise DimensionError("save_matrix_kzm expects a 2-D array")
    _write_kzm(path, data)


def load_matrix_kzm(path) -> DenseMatrix:
    return DenseMatrix(_read_kzm(path))


def save_vector_kzm(path, v) -> None:
    """Vectors use the matrix container with n = 1."""
    v = as_vector(v)
    _write_kzm(path, v.reshape(-1, 1))


def load_vector_kzm(path) -> np.ndarray:
    arr = _read_kzm(path)
    if arr.shape[1] != 1:
        raise ValueError(f"{path}: expected a vector (n=1), got n={arr.shape[1]}")
    return np.ascontiguousarray(arr[:, 0])


def save_matrix_csv(path, A) -> None:
    """One matrix row per line, comma separated, '.' decimal separator."""
    data = A.data if isinstance(A, DenseMatrix) else np.asarray(A, dtype=np.float64)
    with open(path, "w", encoding="ascii") as fh:
        for row in data:
            fh.write(",".join(repr(v) for v in row.tolist()))
            fh.write("\n")


def load_matrix_csv(path) -> DenseMatrix:
    rows = []
    with open(path, "r", encoding="ascii") as fh:
        for line in fh:
            line = line.strip()
            if line:
                rows.append([float(tok) for tok in line.split(",")])
    if not rows:
        raise ValueError(f"{path}: no rows")
    widths = {len(r) for r in rows}
    if len(widths) != 1:
        raise ValueError(f"{path}: ragged rows, widths {sorted(widths)}")
    return DenseMatrix(np.array(rows, dtype=np.float64))
