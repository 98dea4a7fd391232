"""Truncated t-SVD baseline against the exact pseudoinverse."""

import numpy as np
import pytest

from trtls.algebra import tpinv, tprod
from trtls.baseline import TruncationSpec, ttsvd_solve, ttsvd_sweep
from trtls.errors import ShapeError
from trtls.tensor import DenseTensor3, fnorm


def make_problem(seed, m=7, n=5, p=6, s=2):
    rng = np.random.default_rng(seed)
    a = DenseTensor3(rng.standard_normal((m, n, p)))
    b = DenseTensor3(rng.standard_normal((m, s, p)))
    return a, b


def test_spec_validation():
    TruncationSpec(k=3)
    TruncationSpec(energy_fraction=0.9)
    with pytest.raises(ValueError):
        TruncationSpec()
    with pytest.raises(ValueError):
        TruncationSpec(k=2, energy_fraction=0.5)
    with pytest.raises(ValueError):
        TruncationSpec(k=0)
    with pytest.raises(ValueError):
        TruncationSpec(energy_fraction=0.0)
    with pytest.raises(ValueError):
        TruncationSpec(energy_fraction=1.5)


def test_full_rank_matches_pseudoinverse():
    a, b = make_problem(70)
    x = ttsvd_solve(a, b, TruncationSpec(k=min(a.m, a.n)))
    want = tprod(tpinv(a), b)
    assert fnorm(x - want) <= 1e-10 * max(fnorm(want), 1.0)


def test_energy_fraction_one_keeps_everything():
    a, b = make_problem(71)
    full = ttsvd_solve(a, b, TruncationSpec(k=min(a.m, a.n)))
    x = ttsvd_solve(a, b, TruncationSpec(energy_fraction=1.0))
    assert fnorm(x - full) <= 1e-12 * max(fnorm(full), 1.0)


def test_energy_fraction_tiny_keeps_one():
    a, b = make_problem(72)
    x = ttsvd_solve(a, b, TruncationSpec(energy_fraction=1e-12))
    want = ttsvd_solve(a, b, TruncationSpec(k=1))
    assert np.array_equal(x.data, want.data)


def test_k_clamp_warns():
    a, b = make_problem(73)
    with pytest.warns(RuntimeWarning, match="clamped"):
        x = ttsvd_solve(a, b, TruncationSpec(k=99))
    full = ttsvd_solve(a, b, TruncationSpec(k=min(a.m, a.n)))
    assert np.array_equal(x.data, full.data)


def test_sweep_matches_individual_solves():
    a, b = make_problem(74)
    ks = [1, 2, 3, 5]
    out = ttsvd_sweep(a, b, ks)
    assert [k for k, _, _ in out] == ks
    for k, x, wall in out:
        single = ttsvd_solve(a, b, TruncationSpec(k=k))
        assert np.array_equal(x.data, single.data)
        assert wall >= 0.0


def test_sweep_clamps_with_one_warning():
    a, b = make_problem(75)
    with pytest.warns(RuntimeWarning, match="clamped"):
        out = ttsvd_sweep(a, b, [3, 99])
    assert [k for k, _, _ in out] == [3, 5]


def test_sweep_rejects_nonpositive_rank():
    a, b = make_problem(76)
    with pytest.raises(ShapeError):
        ttsvd_sweep(a, b, [2, 0])


def test_shape_mismatches():
    a, b = make_problem(77)
    bad_p = DenseTensor3(np.zeros((a.m, 1, a.p + 1)))
    bad_m = DenseTensor3(np.zeros((a.m + 1, 1, a.p)))
    with pytest.raises(ShapeError):
        ttsvd_solve(a, bad_p, TruncationSpec(k=1))
    with pytest.raises(ShapeError):
        ttsvd_solve(a, bad_m, TruncationSpec(k=1))
    with pytest.raises(ShapeError):
        ttsvd_sweep(a, bad_m, [1])


def test_residual_nonincreasing_in_k():
    # Adding singular triplets can only shrink the least-squares residual.
    a, b = make_problem(78, m=8, n=8, p=5)
    prev = np.inf
    for k, x, _ in ttsvd_sweep(a, b, list(range(1, 9))):
        res = fnorm(tprod(a, x) - b)
        assert res <= prev + 1e-12
        prev = res
