"""Blur operator construction, noise model, regularizers, and full runs."""

import numpy as np
import pytest
from scipy.linalg import toeplitz

from trtls.errors import ShapeError
from trtls.pipeline import (
    ExperimentConfig,
    add_noise,
    blur_matrix,
    bundled_image,
    gaussian_blur_tensor,
    operator_scale,
    reg_operator,
    run_experiment,
    run_experiment_full,
    synthetic_city,
    synthetic_frames,
    tikhonov_start,
)
from trtls.algebra import tprod, ttranspose
from trtls.tensor import DenseTensor3, bcirc, fnorm


# ---------------------------------------------------------------------------
# blur operator


def test_blur_matrix_profile():
    n, sigma, band = 9, 1.5, 4
    a = blur_matrix(n, sigma, band)
    assert a.shape == (n, n)
    assert np.array_equal(a, a.T)
    scale = 1.0 / (sigma * np.sqrt(2.0 * np.pi))
    # First column carries the truncated Gaussian profile.
    for i in range(n):
        want = scale * np.exp(-(i**2) / (2 * sigma**2)) if i < band else 0.0
        assert np.isclose(a[i, 0], want, rtol=1e-14, atol=0.0)
    # Toeplitz along every diagonal.
    assert np.array_equal(a, toeplitz(a[:, 0]))


def test_blur_matrix_validation():
    with pytest.raises(ShapeError):
        blur_matrix(8, 2.0, 0)
    with pytest.raises(ShapeError):
        blur_matrix(8, 2.0, 9)
    with pytest.raises(ShapeError):
        blur_matrix(8, 0.0, 3)


def test_gaussian_blur_tensor_slices():
    config = ExperimentConfig(n=10, sigma=2.0, band=4, eta=0.0)
    t = gaussian_blur_tensor(config)
    a = blur_matrix(10, 2.0, 4)
    assert t.shape == (10, 10, 10)
    for i in range(10):
        assert np.array_equal(t.data[:, :, i], a[i, 0] * a)
    # The first column vanishes past the band, so those slices are zero.
    assert not np.any(t.data[:, :, 4:])


# ---------------------------------------------------------------------------
# noise model


def test_add_noise_relative_slice_norms():
    rng = np.random.default_rng(60)
    t = DenseTensor3(rng.standard_normal((6, 5, 7)))
    eta = 0.02
    noisy = add_noise(t, eta, seed=5)
    for j in range(t.p):
        delta = np.linalg.norm(noisy.data[:, :, j] - t.data[:, :, j])
        assert np.isclose(delta, eta * np.linalg.norm(t.data[:, :, j]), rtol=1e-12)


def test_add_noise_eta_zero_is_identity():
    t = DenseTensor3(np.random.default_rng(61).standard_normal((4, 4, 3)))
    assert add_noise(t, 0.0, seed=1) is t


def test_add_noise_preserves_zero_slices():
    data = np.zeros((5, 5, 4))
    data[:, :, 0] = np.random.default_rng(62).standard_normal((5, 5))
    noisy = add_noise(DenseTensor3(data), 0.1, seed=2)
    assert not np.any(noisy.data[:, :, 1:])
    assert np.any(noisy.data[:, :, 0] != data[:, :, 0])


def test_add_noise_determinism_and_streams():
    t = DenseTensor3(np.random.default_rng(63).standard_normal((5, 4, 6)))
    first = add_noise(t, 0.05, seed=9)
    second = add_noise(t, 0.05, seed=9)
    assert np.array_equal(first.data, second.data)
    # Distinct stream ids draw independent directions from the same seed.
    s0 = add_noise(t, 0.05, seed=9, stream=0)
    s1 = add_noise(t, 0.05, seed=9, stream=1)
    assert not np.array_equal(s0.data, s1.data)
    assert not np.array_equal(s0.data, first.data)


def test_add_noise_rejects_negative_eta():
    t = DenseTensor3(np.zeros((2, 2, 2)))
    with pytest.raises(ShapeError):
        add_noise(t, -0.1, seed=0)


# ---------------------------------------------------------------------------
# regularizers


def test_reg_operator_stencils():
    k1 = reg_operator("k1", 6, 4)
    assert k1.shape == (4, 6, 4)
    row = np.zeros(6)
    row[:3] = (-1.0, 2.0, -1.0)
    for i in range(4):
        assert np.array_equal(k1.data[i, :, 0], np.roll(row, i) / 4.0)
    assert not np.any(k1.data[:, :, 1:])

    k2 = reg_operator("k2", 6, 4)
    assert k2.shape == (5, 6, 4)
    row = np.zeros(6)
    row[:2] = (1.0, -1.0)
    for i in range(5):
        assert np.array_equal(k2.data[i, :, 0], np.roll(row, i) / 2.0)
    assert not np.any(k2.data[:, :, 1:])

    ident = reg_operator("identity", 6, 4)
    assert ident.shape == (6, 6, 4)
    assert np.array_equal(ident.data[:, :, 0], np.eye(6))
    assert not np.any(ident.data[:, :, 1:])


@pytest.mark.parametrize("kind", ["k1", "k2"])
def test_reg_operator_annihilates_constant_fibers(kind):
    # Both difference stencils kill tensors whose mode-1 fibers are constant.
    k = reg_operator(kind, 7, 5)
    rng = np.random.default_rng(64)
    x = DenseTensor3(np.broadcast_to(rng.standard_normal((1, 3, 5)), (7, 3, 5)).copy())
    assert fnorm(tprod(k, x)) <= 1e-14 * fnorm(x)


def test_reg_operator_validation():
    with pytest.raises(ShapeError):
        reg_operator("k1", 2, 3)
    with pytest.raises(ShapeError):
        reg_operator("k2", 1, 3)
    with pytest.raises(ShapeError):
        reg_operator("laplace", 5, 3)


# ---------------------------------------------------------------------------
# warm start and operator scale


@pytest.mark.parametrize("general_k", [False, True])
def test_tikhonov_start_solves_ridge_equation(general_k):
    rng = np.random.default_rng(65)
    a = rng.standard_normal((6, 6, 5))
    a[:, :, 0] += 3.0 * np.eye(6)
    a = DenseTensor3(a)
    b = DenseTensor3(rng.standard_normal((6, 2, 5)))
    if general_k:
        k = DenseTensor3(rng.standard_normal((4, 6, 5)))
    else:
        k = reg_operator("k1", 6, 5)
    alpha = 0.3
    x0 = tikhonov_start(a, b, k, alpha)
    lhs = tprod(ttranspose(a), tprod(a, x0)) + alpha * tprod(
        ttranspose(k), tprod(k, x0)
    )
    rhs = tprod(ttranspose(a), b)
    assert fnorm(lhs - rhs) <= 1e-10 * fnorm(rhs)


def test_tikhonov_start_alpha_validation():
    a = DenseTensor3(np.eye(3)[:, :, None])
    b = DenseTensor3(np.ones((3, 1, 1)))
    k = DenseTensor3(np.eye(3)[:, :, None])
    with pytest.raises(ValueError):
        tikhonov_start(a, b, k, 0.0)
    with pytest.raises(ValueError):
        tikhonov_start(a, b, k, -1.0)


def test_operator_scale_is_squared_bcirc_norm():
    rng = np.random.default_rng(66)
    a = DenseTensor3(rng.standard_normal((5, 4, 6)))
    top = np.linalg.svd(bcirc(a), compute_uv=False)[0]
    assert np.isclose(operator_scale(a), top**2, rtol=1e-12)


# ---------------------------------------------------------------------------
# full runs


def small_truth(n=8):
    return DenseTensor3(synthetic_city(n)[:, None, :])


def test_run_experiment_metrics():
    config = ExperimentConfig(n=8, sigma=2.0, band=3, eta=0.01, seed=3)
    res = run_experiment(small_truth(), config)
    assert np.isfinite(res.blurred_mse) and res.blurred_mse > 0
    assert np.isfinite(res.deblurred_mse) and res.deblurred_mse > 0
    assert np.isclose(
        res.restoring_proportion, 1.0 - res.deblurred_mse / res.blurred_mse
    )
    assert res.constraint_norm >= 0.0
    assert res.wall_time_s >= 0.0
    assert len(res.reports) == 1
    assert isinstance(res.converged, bool)


def test_run_experiment_full_artifacts():
    config = ExperimentConfig(n=8, sigma=2.0, band=3, eta=0.01, seed=3)
    x_true = small_truth()
    art = run_experiment_full(x_true, config)
    assert np.array_equal(art.b_true.data, tprod(art.a_true, x_true).data)
    assert not np.array_equal(art.a_observed.data, art.a_true.data)
    assert not np.array_equal(art.b_observed.data, art.b_true.data)
    assert art.x_solved.shape == x_true.shape
    assert art.result.deblurred_mse > 0


def test_run_experiment_determinism():
    config = ExperimentConfig(n=8, sigma=2.0, band=3, eta=0.01, seed=3)
    one = run_experiment(small_truth(), config)
    two = run_experiment(small_truth(), config)
    assert one.blurred_mse == two.blurred_mse
    assert one.deblurred_mse == two.deblurred_mse
    assert one.constraint_norm == two.constraint_norm
    assert one.converged == two.converged


def test_run_experiment_input_validation():
    config = ExperimentConfig(n=8, sigma=2.0, band=3, eta=0.0)
    with pytest.raises(ShapeError):
        run_experiment(DenseTensor3(np.zeros((7, 1, 8))), config)
    with pytest.raises(ShapeError):
        run_experiment(DenseTensor3(np.zeros((8, 1, 7))), config)
    hot = np.zeros((8, 1, 8))
    hot[0, 0, 0] = 1.5
    with pytest.raises(ShapeError):
        run_experiment(DenseTensor3(hot), config)
    with pytest.raises(ShapeError):
        run_experiment(DenseTensor3(np.full((8, 1, 8), -0.2)), config)


def test_experiment_config_validation():
    good = dict(n=8, sigma=2.0, band=3, eta=0.01)
    ExperimentConfig(**good)
    with pytest.raises(ValueError):
        ExperimentConfig(**{**good, "n": 0})
    with pytest.raises(ValueError):
        ExperimentConfig(**{**good, "sigma": 0.0})
    with pytest.raises(ValueError):
        ExperimentConfig(**{**good, "band": 9})
    with pytest.raises(ValueError):
        ExperimentConfig(**{**good, "band": 0})
    with pytest.raises(ValueError):
        ExperimentConfig(**{**good, "eta": -0.1})
    with pytest.raises(ValueError):
        ExperimentConfig(**{**good, "seed": -1})
    with pytest.raises(ValueError):
        ExperimentConfig(**{**good, "regularizer": "tv"})
    with pytest.raises(ValueError):
        ExperimentConfig(**{**good, "start_alpha": 0.0})


# ---------------------------------------------------------------------------
# bundled scenes


def test_synthetic_city_deterministic_and_bounded():
    one = synthetic_city(64)
    two = synthetic_city(64)
    assert np.array_equal(one, two)
    assert one.shape == (64, 64)
    assert one.min() >= 0.0 and one.max() <= 1.0


def test_synthetic_city_downsampling_consistency():
    big = synthetic_city(256)
    small = synthetic_city(64)
    assert np.array_equal(big.reshape(64, 4, 64, 4).mean(axis=(1, 3)), small)
    with pytest.raises(ShapeError):
        synthetic_city(48)


def test_synthetic_frames():
    frames = synthetic_frames(16, 4)
    assert len(frames) == 4
    for f in frames:
        assert f.shape == (16, 16)
        assert f.min() >= 0.0 and f.max() <= 1.0
    assert not np.array_equal(frames[0], frames[1])
    with pytest.raises(ShapeError):
        synthetic_frames(16, 0)


@pytest.mark.parametrize("name,n", [("city_64", 64), ("city_256", 256)])
def test_bundled_image_matches_scene(name, n):
    img = bundled_image(name)
    assert img.shape == (n, n)
    # Shipped copies are 8-bit quantized renderings of the scene.
    assert np.abs(img - synthetic_city(n)).max() <= 0.5 / 255.0 + 1e-12


def test_bundled_image_unknown_name():
    with pytest.raises(OSError):
        bundled_image("nope")
