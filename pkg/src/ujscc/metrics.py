"""Image-quality metrics: MSE, PSNR, SSIM.

PSNR and SSIM are defined on [0, 1]-scaled images (dynamic range 1);
``to_unit_range`` maps the pipeline's internal [-1, 1] pixels there.
Dataset figures are per-image values averaged afterwards, not metrics
of pooled statistics.
"""

import math
from dataclasses import dataclass

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

SSIM_WINDOW = 11
SSIM_SIGMA = 1.5
SSIM_K1 = 0.01
SSIM_K2 = 0.03


def to_unit_range(x: np.ndarray) -> np.ndarray:
    """[-1, 1] pixels -> [0, 1]."""
    return (x + 1.0) / 2.0


def mse(a: np.ndarray, b: np.ndarray) -> float:
    if a.shape != b.shape:
        raise ValueError(f"mse: shapes differ, {a.shape} vs {b.shape}")
    return float(np.mean((a - b) ** 2))


def psnr(a: np.ndarray, b: np.ndarray) -> float:
    """10*log10(1/mse) for unit-range images; +inf when identical."""
    e = mse(a, b)
    if e == 0.0:
        return math.inf
    return -10.0 * math.log10(e)


def _gaussian_window(size: int = SSIM_WINDOW, sigma: float = SSIM_SIGMA) -> np.ndarray:
    r = size // 2
    x = np.arange(-r, r + 1, dtype=np.float64)
    g = np.exp(-(x * x) / (2.0 * sigma * sigma))
    g /= g.sum()
    return np.outer(g, g)


_WINDOW = _gaussian_window()


def _local_mean(img: np.ndarray, win: np.ndarray) -> np.ndarray:
    r = win.shape[0] // 2
    padded = np.pad(img, r, mode="symmetric")
    views = sliding_window_view(padded, win.shape)
    return np.einsum("hwij,ij->hw", views, win)


def _ssim_channel(a: np.ndarray, b: np.ndarray, win: np.ndarray) -> float:
    r = win.shape[0] // 2
    ua = _local_mean(a, win)
    ub = _local_mean(b, win)
    uaa = _local_mean(a * a, win)
    ubb = _local_mean(b * b, win)
    uab = _local_mean(a * b, win)
    va = uaa - ua * ua
    vb = ubb - ub * ub
    vab = uab - ua * ub
    c1 = SSIM_K1**2
    c2 = SSIM_K2**2
    s = ((2 * ua * ub + c1) * (2 * vab + c2)) / ((ua * ua + ub * ub + c1) * (va + vb + c2))
    return float(s[r:-r, r:-r].mean())


def ssim(a: np.ndarray, b: np.ndarray) -> float:
    """Windowed SSIM: 11x11 Gaussian weights (sigma 1.5), population
    covariance, dynamic range 1; channel maps averaged. Inputs are
    (H, W) or channel-first (C, H, W) unit-range images."""
    if a.shape != b.shape:
        raise ValueError(f"ssim: shapes differ, {a.shape} vs {b.shape}")
    if min(a.shape[-2:]) < SSIM_WINDOW:
        raise ValueError(
            f"ssim: image {a.shape[-2:]} smaller than the {SSIM_WINDOW}-tap window"
        )
    if a.ndim == 2:
        return _ssim_channel(a, b, _WINDOW)
    if a.ndim != 3:
        raise ValueError(f"ssim: expected 2-D or 3-D image, got {a.ndim}-D")
    return float(np.mean([_ssim_channel(a[c], b[c], _WINDOW) for c in range(a.shape[0])]))


@dataclass
class MetricReport:
    mse: float
    psnr_db: float
    ssim: float


def image_report(x: np.ndarray, x_hat: np.ndarray) -> MetricReport:
    """All three metrics for one [-1, 1] image pair."""
    a, b = to_unit_range(x), to_unit_range(x_hat)
    return MetricReport(mse=mse(a, b), psnr_db=psnr(a, b), ssim=ssim(a, b))
