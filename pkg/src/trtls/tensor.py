"""Third-order dense tensors and the flattenings the tubal algebra is built on.

A tensor here is an m x n x p stack of p frontal slices, each an m x n
matrix. The canonical linear layout (used by vec() and the on-disk
container) is frontal-slice-major with column-major slices: element
(i, j, k), zero-based, lives at offset i + j*m + k*m*n, which is exactly
numpy's Fortran-order ravel of an (m, n, p) array.
"""

from __future__ import annotations

import numpy as np

from .errors import BoundsError, CapacityError, ShapeError

__all__ = [
    "DenseTensor3",
    "tensor",
    "zeros",
    "unfold",
    "fold",
    "vec",
    "twist",
    "squeeze",
    "bcirc",
    "fnorm",
    "mse",
    "BCIRC_CAP",
]

# Largest dense block-circulant allowed: (m*p) * (n*p) entries.
BCIRC_CAP = 4_000_000


class DenseTensor3:
    """Immutable m x n x p tensor of float64 values.

    Frontal slice k is the m x n matrix data[:, :, k]. All values are
    finite; construction rejects NaN and Inf.
    """

    __slots__ = ("_data",)

    def __init__(self, data) -> None:
        arr = np.array(data, dtype=np.float64, copy=True)
        if arr.ndim != 3:
            raise ShapeError(f"expected a 3-way array, got ndim={arr.ndim}")
        if arr.size and not np.isfinite(arr).all():
            raise ShapeError("tensor values must be finite")
        arr.flags.writeable = False
        self._data = arr

    @property
    def data(self) -> np.ndarray:
        """Read-only (m, n, p) view of the values."""
        return self._data

    @property
    def shape(self) -> tuple[int, int, int]:
        return self._data.shape

    @property
    def m(self) -> int:
        return self._data.shape[0]

    @property
    def n(self) -> int:
        return self._data.shape[1]

    @property
    def p(self) -> int:
        return self._data.shape[2]

    def frontal(self, k: int) -> np.ndarray:
        """Frontal slice k as an m x n matrix."""
        if not 0 <= k < self.p:
            raise BoundsError(f"frontal index {k} outside [0, {self.p})")
        return self._data[:, :, k]

    def horizontal(self, i: int) -> "DenseTensor3":
        """Horizontal slice i as a 1 x n x p tensor."""
        if not 0 <= i < self.m:
            raise BoundsError(f"horizontal index {i} outside [0, {self.m})")
        return DenseTensor3(self._data[i : i + 1, :, :])

    def lateral(self, j: int) -> "DenseTensor3":
        """Lateral slice j as an m x 1 x p tensor."""
        if not 0 <= j < self.n:
            raise BoundsError(f"lateral index {j} outside [0, {self.n})")
        return DenseTensor3(self._data[:, j : j + 1, :])

    def tube(self, i: int, j: int) -> "DenseTensor3":
        """Tube (i, j) as a 1 x 1 x p tensor."""
        if not 0 <= i < self.m:
            raise BoundsError(f"row index {i} outside [0, {self.m})")
        if not 0 <= j < self.n:
            raise BoundsError(f"column index {j} outside [0, {self.n})")
        return DenseTensor3(self._data[i : i + 1, j : j + 1, :])

    # Arithmetic is elementwise and shape-checked; scalar multiples are the
    # only mixed-type products (tensor products live in algebra.py).

    def _check_same_shape(self, other: "DenseTensor3") -> None:
        if self.shape != other.shape:
            raise ShapeError(f"shape mismatch: {self.shape} vs {other.shape}")

    def __add__(self, other: "DenseTensor3") -> "DenseTensor3":
        self._check_same_shape(other)
        return DenseTensor3(self._data + other._data)

    def __sub__(self, other: "DenseTensor3") -> "DenseTensor3":
        self._check_same_shape(other)
        return DenseTensor3(self._data - other._data)

    def __neg__(self) -> "DenseTensor3":
        return DenseTensor3(-self._data)

    def __mul__(self, scalar) -> "DenseTensor3":
        return DenseTensor3(self._data * float(scalar))

    __rmul__ = __mul__

    def __repr__(self) -> str:
        return f"DenseTensor3(shape={self.shape})"


def tensor(data) -> DenseTensor3:
    """Build a DenseTensor3 from any 3-way array-like."""
    return DenseTensor3(data)


def zeros(m: int, n: int, p: int) -> DenseTensor3:
    if min(m, n, p) < 1:
        raise ShapeError(f"dimensions must be positive, got {(m, n, p)}")
    return DenseTensor3(np.zeros((m, n, p)))


def unfold(x: DenseTensor3) -> np.ndarray:
    """Stack the frontal slices vertically into an (n*p) x s matrix.

    For an n x s x p tensor the result is [X1; X2; ...; Xp].
    """
    n, s, p = x.shape
    return x.data.transpose(2, 0, 1).reshape(p * n, s)


def fold(mat, m: int, s: int, p: int) -> DenseTensor3:
    """Inverse of unfold: rebuild an m x s x p tensor from an (m*p) x s matrix."""
    arr = np.asarray(mat, dtype=np.float64)
    if arr.ndim == 1:
        arr = arr.reshape(-1, 1)
    if arr.shape != (m * p, s):
        raise ShapeError(f"expected a {(m * p, s)} matrix, got {arr.shape}")
    return DenseTensor3(arr.reshape(p, m, s).transpose(1, 2, 0))


def vec(x: DenseTensor3) -> np.ndarray:
    """Canonical linearization: offset i + j*m + k*m*n, zero-based."""
    return x.data.ravel(order="F").copy()


def twist(matrix) -> DenseTensor3:
    """Lift an m x p matrix to an m x 1 x p tensor (columns become slices)."""
    arr = np.asarray(matrix, dtype=np.float64)
    if arr.ndim != 2:
        raise ShapeError(f"twist expects a matrix, got ndim={arr.ndim}")
    return DenseTensor3(arr[:, None, :])


def squeeze(x: DenseTensor3) -> np.ndarray:
    """Inverse of twist: flatten an m x 1 x p tensor back to an m x p matrix."""
    if x.n != 1:
        raise ShapeError(f"squeeze expects an m x 1 x p tensor, got {x.shape}")
    return x.data[:, 0, :].copy()


def bcirc(x: DenseTensor3, cap: int = BCIRC_CAP) -> np.ndarray:
    """Materialize the (m*p) x (n*p) block-circulant matrix of x.

    Block (r, c) is the frontal slice with index (r - c) mod p. Refuses to
    allocate more than `cap` entries; the spectral routines in algebra.py
    cover large problems without this matrix.
    """
    m, n, p = x.shape
    total = (m * p) * (n * p)
    if total > cap:
        raise CapacityError(
            f"block circulant would hold {total} entries (cap {cap}); "
            "use the spectral-domain operations instead"
        )
    out = np.zeros((m * p, n * p))
    for c in range(p):
        for r in range(p):
            out[r * m : (r + 1) * m, c * n : (c + 1) * n] = x.data[:, :, (r - c) % p]
    return out


def fnorm(x: DenseTensor3) -> float:
    """Frobenius norm over all entries."""
    return float(np.linalg.norm(x.data))


def mse(x1: DenseTensor3, x2: DenseTensor3) -> float:
    """Mean squared entrywise difference, ||x1 - x2||_F^2 / (m*n*p)."""
    if x1.shape != x2.shape:
        raise ShapeError(f"shape mismatch: {x1.shape} vs {x2.shape}")
    d = x1.data - x2.data
    return float(np.vdot(d, d).real / d.size)
