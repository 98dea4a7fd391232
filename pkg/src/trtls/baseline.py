"""Truncated t-SVD solver, the classical spectral-cutoff baseline.

Regularizes A * X = B by keeping only the k leading singular triplets of
every spectral slice of A and applying the resulting truncated
pseudoinverse to B. One shared k across slices keeps the baseline
deterministic and comparable across runs.
"""

from __future__ import annotations

import time
import warnings
from dataclasses import dataclass

import numpy as np

from .algebra import irfft_slices, rfft_slices, spectral_weights
from .errors import ShapeError
from .tensor import DenseTensor3

__all__ = ["TruncationSpec", "ttsvd_solve", "ttsvd_sweep"]


@dataclass(frozen=True)
class TruncationSpec:
    """Either a fixed rank k or a squared-singular-value energy fraction."""

    k: int | None = None
    energy_fraction: float | None = None

    def __post_init__(self):
        if (self.k is None) == (self.energy_fraction is None):
            raise ValueError("give exactly one of k or energy_fraction")
        if self.k is not None and self.k < 1:
            raise ValueError("k must be positive")
        if self.energy_fraction is not None and not 0.0 < self.energy_fraction <= 1.0:
            raise ValueError("energy_fraction must lie in (0, 1]")


class _Factors:
    """Half-spectrum SVDs of A, shared across truncation levels."""

    def __init__(self, a: DenseTensor3):
        self.m, self.n, self.p = a.shape
        ah = rfft_slices(a.data).transpose(2, 0, 1)
        self.q = ah.shape[0]
        self.u, self.sv, self.vh = np.linalg.svd(ah, full_matrices=False)
        self.rank_tol = (
            max(self.m, self.n)
            * np.finfo(np.float64).eps
            * self.sv.max(axis=1, keepdims=True)
        )

    def pick_k(self, spec: TruncationSpec) -> int:
        r = min(self.m, self.n)
        if spec.k is not None:
            if spec.k > r:
                warnings.warn(
                    f"truncation rank {spec.k} exceeds min(m, n) = {r}; clamped",
                    RuntimeWarning,
                    stacklevel=3,
                )
            return min(spec.k, r)
        # Smallest shared k whose retained squared-singular-value mass
        # reaches the requested fraction of the total.
        w = spectral_weights(self.p)[:, None]
        mass = (self.sv**2) * w
        total = mass.sum()
        if total == 0.0:
            return 1
        cumulative = np.cumsum(mass.sum(axis=0))
        k = int(np.searchsorted(cumulative, spec.energy_fraction * total) + 1)
        return min(k, r)

    def apply(self, bh: np.ndarray, k: int) -> np.ndarray:
        """Truncated pseudoinverse times B, slice by slice."""
        out = np.empty((self.q, self.n, bh.shape[2]), dtype=np.complex128)
        for i in range(self.q):
            sv = self.sv[i, :k]
            keep = sv > self.rank_tol[i, 0]
            uk = self.u[i][:, :k][:, keep]
            vk = self.vh[i][:k][keep]
            inv = (vk.conj().T / sv[keep]) if keep.any() else np.zeros((self.n, 0))
            out[i] = inv @ (uk.conj().T @ bh[i]) if keep.any() else 0.0
        return out


def _check_shapes(a: DenseTensor3, b: DenseTensor3) -> None:
    if a.p != b.p:
        raise ShapeError(f"third dimensions differ: {a.p} vs {b.p}")
    if a.m != b.m:
        raise ShapeError(f"B has {b.m} rows, A has {a.m}")


def ttsvd_solve(a: DenseTensor3, b: DenseTensor3, spec: TruncationSpec) -> DenseTensor3:
    """Solve A * X ~ B keeping k singular triplets per spectral slice.

    Singular values at or below the slice rank tolerance are never
    inverted, so full k reproduces the pseudoinverse solution.
    """
    _check_shapes(a, b)
    fac = _Factors(a)
    k = fac.pick_k(spec)
    bh = rfft_slices(b.data).transpose(2, 0, 1)
    xh = fac.apply(bh, k)
    return DenseTensor3(irfft_slices(xh.transpose(1, 2, 0), a.p))


def ttsvd_sweep(
    a: DenseTensor3, b: DenseTensor3, ks: list[int]
) -> list[tuple[int, DenseTensor3, float]]:
    """Solutions for several truncation levels, sharing one factorization.

    Returns (k, X_k, wall_seconds) per requested level; wall time covers
    the truncated apply, not the shared factorization.
    """
    _check_shapes(a, b)
    fac = _Factors(a)
    bh = rfft_slices(b.data).transpose(2, 0, 1)
    r = min(a.m, a.n)
    if any(k > r for k in ks):
        warnings.warn(
            f"sweep ranks beyond min(m, n) = {r} are clamped", RuntimeWarning,
            stacklevel=2,
        )
    out = []
    for k in ks:
        if k < 1:
            raise ShapeError(f"truncation ranks must be positive, got {k}")
        keff = min(k, r)
        t0 = time.perf_counter()
        xh = fac.apply(bh, keff)
        x = DenseTensor3(irfft_slices(xh.transpose(1, 2, 0), a.p))
        out.append((keff, x, time.perf_counter() - t0))
    return out
