"""Output composition, attention regularization, pixel losses and PSNR/SSIM.

Images are float arrays in [0, 1], either (H, W) or (H, W, C). All losses
use mean normalization.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.ndimage import correlate1d


@dataclass(frozen=True)
class LossWeights:
    lambda_p: float = 10.0  # perceptual
    lambda_f: float = 5.0  # face identity
    lambda_a: float = 2.5  # attention regularization

    def __post_init__(self):
        if min(self.lambda_p, self.lambda_f, self.lambda_a) < 0:
            raise ValueError("loss weights must be non-negative")


def _same_shape(a, b):
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {a.shape} vs {b.shape}")
    return a, b


def compose_output(color, attention, background) -> np.ndarray:
    """Blend the color map over the background with the attention map as alpha."""
    P, bg = _same_shape(color, background)
    A = np.asarray(attention, dtype=np.float64)
    if A.shape != P.shape[:2]:
        raise ValueError(f"attention map {A.shape} does not match image {P.shape[:2]}")
    if A.size and (A.min() < 0 or A.max() > 1 or not np.all(np.isfinite(A))):
        raise ValueError("attention values must lie in [0, 1]")
    if P.ndim == 3:
        A = A[..., None]
    return P * A + bg * (1.0 - A)


def tv(attention) -> float:
    """Mean squared difference over all vertical and horizontal neighbor pairs."""
    A = np.asarray(attention, dtype=np.float64)
    if A.ndim != 2 or min(A.shape) < 2:
        raise ValueError("total variation needs a 2-D map with H, W >= 2")
    dv = np.diff(A, axis=0) ** 2
    dh = np.diff(A, axis=1) ** 2
    return float((dv.sum() + dh.sum()) / (dv.size + dh.size))


def attention_reg(attention_maps, silhouettes) -> float:
    """Sum over (A, S) pairs of MSE(A, S) + tv(A)."""
    attention_maps = list(attention_maps)
    silhouettes = list(silhouettes)
    if len(attention_maps) != len(silhouettes):
        raise ValueError("attention maps and silhouettes differ in count")
    total = 0.0
    for A, S in zip(attention_maps, silhouettes):
        A, S = _same_shape(A, S)
        total += float(np.mean((A - S) ** 2)) + tv(A)
    return total


def pixel_l1(a, b) -> float:
    a, b = _same_shape(a, b)
    return float(np.mean(np.abs(a - b)))


def psnr(a, b) -> float:
    """Peak signal-to-noise ratio in dB with peak 1.0; inf for identical images."""
    a, b = _same_shape(a, b)
    mse = float(np.mean((a - b) ** 2))
    if mse == 0:
        return float("inf")
    return 10.0 * np.log10(1.0 / mse)


def to_gray(img) -> np.ndarray:
    img = np.asarray(img, dtype=np.float64)
    if img.ndim == 2:
        return img
    if img.shape[-1] == 1:
        return img[..., 0]
    if img.shape[-1] == 3:
        return img @ np.array([0.299, 0.587, 0.114])
    raise ValueError(f"unsupported channel count {img.shape[-1]}")


def _gaussian_window(size: int = 11, sigma: float = 1.5) -> np.ndarray:
    x = np.arange(size) - (size - 1) / 2
    g = np.exp(-(x**2) / (2 * sigma**2))
    return g / g.sum()


def _filter_valid(img, g):
    # separable filtering, then keep only windows fully inside the image
    r = len(g) // 2
    out = correlate1d(correlate1d(img, g, axis=0, mode="constant"), g, axis=1, mode="constant")
    return out[r:-r, r:-r]


def ssim(a, b, data_range: float = 1.0) -> float:
    """Single-scale SSIM with an 11x11 Gaussian window (sigma 1.5), valid windows only."""
    a, b = _same_shape(a, b)
    x, y = to_gray(a), to_gray(b)
    if min(x.shape) < 11:
        raise ValueError("SSIM needs images of at least 11x11 pixels")
    g = _gaussian_window()
    c1 = (0.01 * data_range) ** 2
    c2 = (0.03 * data_range) ** 2
    mx, my = _filter_valid(x, g), _filter_valid(y, g)
    sxx = _filter_valid(x * x, g) - mx * mx
    syy = _filter_valid(y * y, g) - my * my
    sxy = _filter_valid(x * y, g) - mx * my
    num = (2 * mx * my + c1) * (2 * sxy + c2)
    den = (mx * mx + my * my + c1) * (sxx + syy + c2)
    return float(np.mean(num / den))
