"""MSE / PSNR / SSIM properties and the independent SSIM reference."""

import math

import numpy as np
import pytest
from skimage.metrics import structural_similarity as skimage_ssim

from ujscc.metrics import image_report, mse, psnr, ssim, to_unit_range
from ujscc.nn.rng import seeded_rng


def test_mse_basics():
    x = seeded_rng(0).normal(size=(3, 8, 8))
    assert mse(x, x) == 0.0
    assert mse(np.array([0.0]), np.array([2.0])) == 4.0


def test_mse_quadratic_scaling():
    rng = seeded_rng(1)
    a, b = rng.normal(size=(4, 4)), rng.normal(size=(4, 4))
    assert mse(3 * a, 3 * b) == pytest.approx(9 * mse(a, b), rel=1e-12)


def test_psnr_reference_points():
    a = np.zeros((8, 8))
    assert psnr(a, a + 0.1) == pytest.approx(20.0, rel=1e-9)
    assert psnr(a, a + 1.0) == pytest.approx(0.0, abs=1e-9)
    assert psnr(a, a) == math.inf


def test_psnr_strictly_decreasing_in_mse():
    base = np.zeros((8, 8))
    values = [psnr(base, base + d) for d in (0.05, 0.1, 0.2, 0.4)]
    assert all(a > b for a, b in zip(values, values[1:]))


def test_to_unit_range():
    np.testing.assert_allclose(to_unit_range(np.array([-1.0, 0.0, 1.0])), [0.0, 0.5, 1.0])


def test_ssim_self_is_one():
    x = to_unit_range(seeded_rng(2).uniform(-1, 1, size=(3, 32, 32)))
    assert ssim(x, x) == pytest.approx(1.0, abs=1e-12)


def test_ssim_symmetric_and_bounded():
    rng = seeded_rng(3)
    a = rng.uniform(0, 1, size=(3, 32, 32))
    b = np.clip(a + rng.normal(scale=0.1, size=a.shape), 0, 1)
    assert ssim(a, b) == pytest.approx(ssim(b, a), rel=1e-12)
    assert ssim(a, b) <= 1.0
    assert ssim(a, b) < 1.0 - 1e-12  # equality only for identical inputs


def test_ssim_rejects_tiny_images():
    with pytest.raises(ValueError, match="window"):
        ssim(np.zeros((8, 8)), np.zeros((8, 8)))


def test_ssim_constant_offset_matches_reference():
    a = np.full((32, 32), 0.25)
    b = np.full((32, 32), 0.75)
    ref = skimage_ssim(
        a, b, gaussian_weights=True, sigma=1.5, use_sample_covariance=False,
        data_range=1.0,
    )
    assert ssim(a, b) == pytest.approx(ref, abs=1e-6)


def test_ssim_matches_reference_on_random_pairs():
    rng = seeded_rng(4)
    for _ in range(10):
        a = rng.uniform(0, 1, size=(32, 32))
        b = np.clip(a + rng.normal(scale=rng.uniform(0.02, 0.3), size=a.shape), 0, 1)
        ref = skimage_ssim(
            a, b, gaussian_weights=True, sigma=1.5, use_sample_covariance=False,
            data_range=1.0,
        )
        assert ssim(a, b) == pytest.approx(ref, abs=1e-6)


def test_image_report_consistency():
    rng = seeded_rng(5)
    x = rng.uniform(-1, 1, size=(3, 32, 32))
    x_hat = np.clip(x + rng.normal(scale=0.1, size=x.shape), -1, 1)
    rep = image_report(x, x_hat)
    assert rep.mse == pytest.approx(mse(to_unit_range(x), to_unit_range(x_hat)))
    assert rep.psnr_db == pytest.approx(-10 * math.log10(rep.mse))
    assert -1.0 <= rep.ssim <= 1.0
