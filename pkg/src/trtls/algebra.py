"""Tubal tensor algebra: products, transposes, inverses and the t-SVD.

All operations are defined through the discrete Fourier transform along the
third mode: a product of two tensors is p independent matrix products
between corresponding spectral slices. For real tensors the spectrum is
conjugate-symmetric, so only the first ceil((p+1)/2) slices are computed
(numpy's rfft/irfft pair) and the rest are implied.

The block-circulant matrix bcirc() in tensor.py realizes the same algebra
densely and serves as the brute-force cross-check in the test suite.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import (
    NumericalConsistencyError,
    ShapeError,
    SingularSliceError,
    SingularTubeError,
)
from .tensor import DenseTensor3

__all__ = [
    "SpectralTensor3",
    "TSvdFactors",
    "to_spectral",
    "from_spectral",
    "rfft_slices",
    "irfft_slices",
    "spectral_weights",
    "tprod",
    "ttranspose",
    "identity_tensor",
    "tinv",
    "tpinv",
    "tsvd",
    "truncate_tsvd",
    "tsvd_reconstruct",
    "tube_inv",
    "tube_kron_identity",
    "spectral_conds",
    "vconcat",
    "hconcat",
]

# Relative imaginary-mass bound for inverse transforms of data that should
# be real (conjugate-symmetric spectra).
IMAG_RESIDUE_TOL = 1e-9


class SpectralTensor3:
    """Mode-3 DFT of a real tensor: p complex frontal slices.

    Slices use the unnormalized transform, so slice 0 is the sum of the
    real frontal slices and slice i is the conjugate of slice p - i.
    """

    __slots__ = ("_slices",)

    def __init__(self, slices) -> None:
        arr = np.array(slices, dtype=np.complex128, copy=True)
        if arr.ndim != 3:
            raise ShapeError(f"expected a 3-way complex array, got ndim={arr.ndim}")
        arr.flags.writeable = False
        self._slices = arr

    @property
    def slices(self) -> np.ndarray:
        return self._slices

    @property
    def shape(self) -> tuple[int, int, int]:
        return self._slices.shape


def to_spectral(x: DenseTensor3) -> SpectralTensor3:
    """Full mode-3 DFT (all p complex slices)."""
    return SpectralTensor3(np.fft.fft(x.data, axis=2))


def from_spectral(s: SpectralTensor3) -> DenseTensor3:
    """Inverse mode-3 DFT back to a real tensor.

    The imaginary part left by the inverse transform must be negligible
    relative to the result; a conjugate-asymmetric input fails loudly
    instead of being silently truncated.
    """
    z = np.fft.ifft(s.slices, axis=2)
    mass = np.linalg.norm(z)
    residue = np.linalg.norm(z.imag)
    if residue > IMAG_RESIDUE_TOL * max(mass, np.finfo(np.float64).tiny):
        raise NumericalConsistencyError(
            f"imaginary residue {residue:.3e} exceeds {IMAG_RESIDUE_TOL:.1e} "
            f"of the result norm {mass:.3e}; spectrum is not conjugate-symmetric"
        )
    return DenseTensor3(z.real)


def rfft_slices(data: np.ndarray) -> np.ndarray:
    """Half-spectrum slices of a real (m, n, p) array: (m, n, q) complex,
    q = p//2 + 1. Slice i of the full spectrum for i >= q is the conjugate
    of slice p - i and is never stored."""
    return np.fft.rfft(data, axis=2)


def irfft_slices(spec: np.ndarray, p: int) -> np.ndarray:
    """Inverse of rfft_slices for period p."""
    return np.fft.irfft(spec, n=p, axis=2)


def spectral_weights(p: int) -> np.ndarray:
    """Multiplicities of the half-spectrum slices inside the full spectrum.

    Satisfies ||T||_F^2 == (1/p) * sum_i w_i * ||That_i||_F^2 for real T.
    """
    q = p // 2 + 1
    w = np.full(q, 2.0)
    w[0] = 1.0
    if p % 2 == 0:
        w[-1] = 1.0
    return w


def _check_tprod_shapes(a: DenseTensor3, b: DenseTensor3) -> None:
    if a.p != b.p:
        raise ShapeError(f"third dimensions differ: {a.p} vs {b.p}")
    if a.n != b.m:
        raise ShapeError(
            f"inner dimensions differ: {a.shape} cannot multiply {b.shape}"
        )


def tprod(a: DenseTensor3, b: DenseTensor3) -> DenseTensor3:
    """Tensor-tensor product: slice-wise matrix products in the spectrum.

    Equals fold(bcirc(a) @ unfold(b)) for any conforming pair; the dense
    route is quadratic in p and only used as a test oracle.
    """
    _check_tprod_shapes(a, b)
    ah = rfft_slices(a.data).transpose(2, 0, 1)
    bh = rfft_slices(b.data).transpose(2, 0, 1)
    ch = ah @ bh
    return DenseTensor3(irfft_slices(ch.transpose(1, 2, 0), a.p))


def ttranspose(a: DenseTensor3) -> DenseTensor3:
    """Transpose each frontal slice and reverse the order of slices 2..p.

    Matches the conjugate transpose of every spectral slice; an involution
    bit-exactly (no transforms involved).
    """
    at = a.data.transpose(1, 0, 2)
    out = np.concatenate([at[:, :, :1], at[:, :, :0:-1]], axis=2)
    return DenseTensor3(out)


def identity_tensor(n: int, p: int) -> DenseTensor3:
    """First frontal slice I_n, remaining slices zero."""
    if n < 1 or p < 1:
        raise ShapeError(f"dimensions must be positive, got {(n, p)}")
    out = np.zeros((n, n, p))
    out[:, :, 0] = np.eye(n)
    return DenseTensor3(out)


def _rank_tol(sv: np.ndarray, m: int, n: int) -> float:
    return max(m, n) * np.finfo(np.float64).eps * (sv[0] if sv.size else 0.0)


def tinv(a: DenseTensor3) -> DenseTensor3:
    """Inverse of a square tensor: invert every spectral slice.

    Raises SingularSliceError naming the first half-spectrum slice whose
    smallest singular value falls below max(m,n)*eps*sigma_max.
    """
    if a.m != a.n:
        raise ShapeError(f"inverse needs a square tensor, got {a.shape}")
    ah = rfft_slices(a.data).transpose(2, 0, 1)
    sv = np.linalg.svd(ah, compute_uv=False)
    for i in range(ah.shape[0]):
        if sv[i, -1] <= _rank_tol(sv[i], a.m, a.n):
            raise SingularSliceError(i, float(sv[i, -1]))
    inv = np.linalg.inv(ah)
    return DenseTensor3(irfft_slices(inv.transpose(1, 2, 0), a.p))


def tpinv(a: DenseTensor3) -> DenseTensor3:
    """Moore-Penrose pseudoinverse, slice-wise in the spectrum.

    Singular values at or below max(m,n)*eps*sigma_max of their slice are
    treated as zero rather than inverted.
    """
    ah = rfft_slices(a.data).transpose(2, 0, 1)
    q = ah.shape[0]
    out = np.empty((q, a.n, a.m), dtype=np.complex128)
    for i in range(q):
        u, sv, vh = np.linalg.svd(ah[i], full_matrices=False)
        tol = _rank_tol(sv, a.m, a.n)
        keep = sv > tol
        if keep.any():
            out[i] = (vh[keep].conj().T / sv[keep]) @ u[:, keep].conj().T
        else:
            out[i] = 0.0
    return DenseTensor3(irfft_slices(out.transpose(1, 2, 0), a.p))


@dataclass(frozen=True)
class TSvdFactors:
    """Orthogonal-diagonal-orthogonal factorization a = u * s * v^T.

    u is m x m x p, s is m x n x p with diagonal frontal slices and
    nonincreasing singular-value tubes, v is n x n x p.
    """

    u: DenseTensor3
    s: DenseTensor3
    v: DenseTensor3


def _fix_phases(u: np.ndarray, vh: np.ndarray) -> None:
    """Deterministic phase choice: rotate each left singular vector so its
    first significant entry is real nonnegative, compensating in vh."""
    m = u.shape[0]
    thresh = np.sqrt(m) * np.finfo(np.float64).eps * 8.0
    for col in range(u.shape[1]):
        vecu = u[:, col]
        idx = np.flatnonzero(np.abs(vecu) > thresh)
        j = idx[0] if idx.size else int(np.argmax(np.abs(vecu)))
        pivot = vecu[j]
        mag = abs(pivot)
        if mag == 0.0:
            continue
        phase = pivot / mag
        u[:, col] = vecu * np.conj(phase)
        if col < vh.shape[0]:
            vh[col, :] = vh[col, :] * phase


def tsvd(a: DenseTensor3) -> TSvdFactors:
    """Full t-SVD via independent SVDs of the half-spectrum slices."""
    m, n, p = a.shape
    ah = rfft_slices(a.data).transpose(2, 0, 1)
    q = ah.shape[0]
    uh = np.zeros((q, m, m), dtype=np.complex128)
    sh = np.zeros((q, m, n), dtype=np.complex128)
    vh_all = np.zeros((q, n, n), dtype=np.complex128)
    for i in range(q):
        u, sv, vh = np.linalg.svd(ah[i], full_matrices=True)
        _fix_phases(u, vh)
        uh[i] = u
        sh[i, : sv.size, : sv.size] = np.diag(sv)
        vh_all[i] = vh
    ut = irfft_slices(uh.transpose(1, 2, 0), p)
    st = irfft_slices(sh.transpose(1, 2, 0), p)
    # vh holds V^H per slice; V itself is its conjugate transpose.
    vt = irfft_slices(vh_all.conj().transpose(2, 1, 0), p)
    return TSvdFactors(DenseTensor3(ut), DenseTensor3(st), DenseTensor3(vt))


def truncate_tsvd(f: TSvdFactors, k: int) -> TSvdFactors:
    """Keep the k leading singular tubes and their subspaces."""
    m, n = f.u.m, f.v.m
    r = min(m, n)
    if not 1 <= k <= r:
        raise ShapeError(f"truncation rank {k} outside [1, {r}]")
    return TSvdFactors(
        DenseTensor3(f.u.data[:, :k, :]),
        DenseTensor3(f.s.data[:k, :k, :]),
        DenseTensor3(f.v.data[:, :k, :]),
    )


def tsvd_reconstruct(f: TSvdFactors) -> DenseTensor3:
    """Multiply the factors back together: u * s * v^T."""
    return tprod(tprod(f.u, f.s), ttranspose(f.v))


def tube_inv(t: DenseTensor3) -> DenseTensor3:
    """Invert a 1 x 1 x p tube under the tubal product.

    The inverse has spectral components 1/that_i; any component within
    p*eps*max|that| of zero makes the tube singular and is reported by its
    full-spectrum index.
    """
    if t.m != 1 or t.n != 1:
        raise ShapeError(f"tube expected (1 x 1 x p), got {t.shape}")
    vals = np.fft.fft(t.data[0, 0, :])
    mags = np.abs(vals)
    top = mags.max()
    tol = t.p * np.finfo(np.float64).eps * top
    bad = np.flatnonzero(mags <= tol)
    if top == 0.0 or bad.size:
        idx = int(bad[0]) if bad.size else 0
        raise SingularTubeError(idx, complex(vals[idx]))
    inv = np.fft.ifft(1.0 / vals)
    return DenseTensor3(inv.real[None, None, :])


def tube_kron_identity(t: DenseTensor3, m: int) -> DenseTensor3:
    """Expand a tube to the m x m x p tensor whose spectral slice i is
    that_i * I_m; equivalently frontal slice k is t_k * I_m.

    Multiplying a lateral slice by this tensor equals multiplying it by the
    tube, which lets tube factors commute past matrix-shaped factors.
    """
    if t.m != 1 or t.n != 1:
        raise ShapeError(f"tube expected (1 x 1 x p), got {t.shape}")
    if m < 1:
        raise ShapeError(f"identity dimension must be positive, got {m}")
    out = np.zeros((m, m, t.p))
    rng = np.arange(m)
    out[rng, rng, :] = t.data[0, 0, :]
    return DenseTensor3(out)


def spectral_conds(a: DenseTensor3) -> np.ndarray:
    """2-norm condition number of every half-spectrum slice.

    Exactly singular slices report inf. One SVD per slice; no shortcuts,
    so the numbers are honest for arbitrary tensors.
    """
    ah = rfft_slices(a.data).transpose(2, 0, 1)
    q = ah.shape[0]
    out = np.empty(q)
    for i in range(q):
        sv = np.linalg.svd(ah[i], compute_uv=False)
        out[i] = np.inf if sv[-1] == 0.0 else float(sv[0] / sv[-1])
    return out


def vconcat(a: DenseTensor3, b: DenseTensor3) -> DenseTensor3:
    """Stack along the first mode: [a; b]."""
    if a.n != b.n or a.p != b.p:
        raise ShapeError(f"cannot stack {a.shape} over {b.shape}")
    return DenseTensor3(np.concatenate([a.data, b.data], axis=0))


def hconcat(a: DenseTensor3, b: DenseTensor3) -> DenseTensor3:
    """Stack along the second mode: [a, b]."""
    if a.m != b.m or a.p != b.p:
        raise ShapeError(f"cannot stack {a.shape} beside {b.shape}")
    return DenseTensor3(np.concatenate([a.data, b.data], axis=1))
