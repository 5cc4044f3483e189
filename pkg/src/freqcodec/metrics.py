"""Quality metrics (MSE, RGB-PSNR, MS-SSIM) and BD-rate curve comparison."""

from __future__ import annotations

import math
from typing import Sequence

import numpy as np

from . import tensor as T
from .tensor import Tensor

PSNR_CAP_DB = 100.0
_MSSSIM_WEIGHTS = (0.0448, 0.2856, 0.3001, 0.2363, 0.1333)
_MSSSIM_WIN = 11
_MSSSIM_SIGMA = 1.5
_K1, _K2 = 0.01, 0.03


def _check_shapes(a: np.ndarray, b: np.ndarray) -> None:
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {a.shape} vs {b.shape}")


def mse(a: np.ndarray, b: np.ndarray) -> float:
    _check_shapes(a, b)
    d = np.asarray(a, dtype=np.float64) - np.asarray(b, dtype=np.float64)
    return float(np.mean(d * d))


def psnr(a: np.ndarray, b: np.ndarray) -> float:
    """RGB-PSNR over [0,1]-normalized images, capped at 100 dB."""
    m = mse(a, b)
    if m < 1e-10:
        return PSNR_CAP_DB
    return min(PSNR_CAP_DB, 10.0 * math.log10(1.0 / m))


def _gaussian_window(dtype) -> np.ndarray:
    half = (_MSSSIM_WIN - 1) / 2.0
    xs = np.arange(_MSSSIM_WIN) - half
    g = np.exp(-(xs**2) / (2.0 * _MSSSIM_SIGMA**2))
    win = np.outer(g, g)
    return (win / win.sum()).astype(dtype)


_AVG_POOL_K = np.full((2, 2), 0.25)


def ms_ssim_tensor(a: Tensor, b: Tensor) -> Tensor:
    """Differentiable 5-scale MS-SSIM on [.,C,H,W] tensors in [0,1].

    Standard weights, 11x11 Gaussian window (sigma 1.5), K1=0.01, K2=0.03,
    valid-window statistics, 2x average-pool between scales.  Inputs must be
    at least 176 pixels on each side so the last scale still fits a window.
    """
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {a.shape} vs {b.shape}")
    scales = len(_MSSSIM_WEIGHTS)
    min_side = _MSSSIM_WIN * (1 << (scales - 1))
    if a.shape[-2] < min_side or a.shape[-1] < min_side:
        raise ValueError(
            f"inputs must be at least {min_side}x{min_side} for {scales}-scale MS-SSIM, "
            f"got {a.shape[-2]}x{a.shape[-1]}")
    win = _gaussian_window(a.dtype)
    c1 = _K1 * _K1
    c2 = _K2 * _K2
    result = None
    for i, weight in enumerate(_MSSSIM_WEIGHTS):
        mu_a = T.depthwise_conv2d(a, win)
        mu_b = T.depthwise_conv2d(b, win)
        mu_aa = mu_a * mu_a
        mu_bb = mu_b * mu_b
        mu_ab = mu_a * mu_b
        sig_aa = T.depthwise_conv2d(a * a, win) - mu_aa
        sig_bb = T.depthwise_conv2d(b * b, win) - mu_bb
        sig_ab = T.depthwise_conv2d(a * b, win) - mu_ab
        cs = (2.0 * sig_ab + c2) / (sig_aa + sig_bb + c2)
        if i < scales - 1:
            term = T.mean_all(cs)
            a = T.depthwise_conv2d(a, _AVG_POOL_K.astype(a.dtype), stride=2)
            b = T.depthwise_conv2d(b, _AVG_POOL_K.astype(b.dtype), stride=2)
        else:
            lum = (2.0 * mu_ab + c1) / (mu_aa + mu_bb + c1)
            term = T.mean_all(lum * cs)
        term = T.pow_const(T.lower_bound(term, 1e-6), weight)
        result = term if result is None else result * term
    return result


def ms_ssim(a: np.ndarray, b: np.ndarray) -> float:
    with T.no_grad():
        return float(ms_ssim_tensor(Tensor(np.asarray(a, np.float64)),
                                    Tensor(np.asarray(b, np.float64))).item())


def bd_rate(curve_a: Sequence[tuple[float, float]], curve_b: Sequence[tuple[float, float]]) -> float:
    """Average percent rate difference of curve_b against curve_a.

    Each curve is a list of (rate, quality) points, at least 4 per curve.
    Cubic polynomials of log-rate over quality are integrated across the
    overlapping quality range; negative results mean curve_b saves rate.
    """
    if len(curve_a) < 4 or len(curve_b) < 4:
        raise ValueError("need at least 4 points per curve")
    rate_a, qual_a = np.asarray([p[0] for p in curve_a]), np.asarray([p[1] for p in curve_a])
    rate_b, qual_b = np.asarray([p[0] for p in curve_b]), np.asarray([p[1] for p in curve_b])
    if np.any(rate_a <= 0) or np.any(rate_b <= 0):
        raise ValueError("rates must be positive")
    lo = max(qual_a.min(), qual_b.min())
    hi = min(qual_a.max(), qual_b.max())
    if hi <= lo:
        raise ValueError(f"quality ranges do not overlap: [{qual_a.min()}, {qual_a.max()}] "
                         f"vs [{qual_b.min()}, {qual_b.max()}]")
    poly_a = np.polyfit(qual_a, np.log(rate_a), 3)
    poly_b = np.polyfit(qual_b, np.log(rate_b), 3)
    int_a = np.polyint(poly_a)
    int_b = np.polyint(poly_b)
    avg_a = (np.polyval(int_a, hi) - np.polyval(int_a, lo)) / (hi - lo)
    avg_b = (np.polyval(int_b, hi) - np.polyval(int_b, lo)) / (hi - lo)
    return float((math.exp(avg_b - avg_a) - 1.0) * 100.0)
