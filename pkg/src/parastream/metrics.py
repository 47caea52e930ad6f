"""Reconstruction quality metrics: PSNR on the 0..255 scale and
multi-scale SSIM with the standard window and scale weights."""

from __future__ import annotations

import math

import numpy as np

MS_SSIM_WEIGHTS = (0.0448, 0.2856, 0.3001, 0.2363, 0.1333)
_WINDOW = 11
_SIGMA = 1.5
_K1 = 0.01
_K2 = 0.03


def psnr(x: np.ndarray, xhat: np.ndarray) -> float:
    """10*log10(255^2 / MSE) with MSE on the 0..255 scale; identical
    inputs return math.inf (serialized as an empty CSV cell)."""
    x = np.asarray(x, dtype=np.float64)
    xhat = np.asarray(xhat, dtype=np.float64)
    if x.shape != xhat.shape:
        raise ValueError(f"psnr shape mismatch: {x.shape} vs {xhat.shape}")
    mse = float(np.mean((255.0 * (x - xhat)) ** 2))
    if mse == 0.0:
        return math.inf
    return 10.0 * math.log10(255.0**2 / mse)


def _gaussian_window() -> np.ndarray:
    t = np.arange(_WINDOW) - (_WINDOW - 1) / 2.0
    g = np.exp(-(t**2) / (2.0 * _SIGMA**2))
    return g / g.sum()


_G = _gaussian_window()


def _filter_valid(plane: np.ndarray) -> np.ndarray:
    tmp = np.apply_along_axis(lambda r: np.convolve(r, _G, mode="valid"), 1, plane)
    return np.apply_along_axis(lambda col: np.convolve(col, _G, mode="valid"), 0, tmp)


def _luminance_contrast(x: np.ndarray, y: np.ndarray):
    c1 = _K1**2
    c2 = _K2**2
    mx = _filter_valid(x)
    my = _filter_valid(y)
    vx = _filter_valid(x * x) - mx * mx
    vy = _filter_valid(y * y) - my * my
    cov = _filter_valid(x * y) - mx * my
    lum = (2.0 * mx * my + c1) / (mx * mx + my * my + c1)
    cs = (2.0 * cov + c2) / (vx + vy + c2)
    return float(lum.mean()), float(cs.mean())


def _downsample(plane: np.ndarray) -> np.ndarray:
    """2x2 mean pooling; odd dims are edge-padded first so a 161-pixel
    side survives four halvings at the 11-pixel window (161 -> ... -> 11)."""
    h, w = plane.shape
    if h % 2:
        plane = np.concatenate([plane, plane[-1:, :]], axis=0)
    if w % 2:
        plane = np.concatenate([plane, plane[:, -1:]], axis=1)
    h2, w2 = plane.shape[0] // 2, plane.shape[1] // 2
    return plane.reshape(h2, 2, w2, 2).mean(axis=(1, 3))


def _scale_count(h: int, w: int) -> int:
    scales = 0
    dim = min(h, w)
    while dim >= _WINDOW and scales < len(MS_SSIM_WEIGHTS):
        scales += 1
        dim = (dim + 1) // 2
    return scales


def _ms_ssim_plane(x: np.ndarray, y: np.ndarray) -> float:
    scales = _scale_count(*x.shape)
    if scales == 0:
        raise ValueError(
            f"image {x.shape} smaller than the {_WINDOW}x{_WINDOW} window"
        )
    weights = np.array(MS_SSIM_WEIGHTS[:scales])
    weights = weights / weights.sum()
    score = 1.0
    for s in range(scales):
        lum, cs = _luminance_contrast(x, y)
        if s < scales - 1:
            score *= max(cs, 0.0) ** weights[s]
            x = _downsample(x)
            y = _downsample(y)
        else:
            score *= max(lum * cs, 0.0) ** weights[s]
    return score


def ms_ssim(x: np.ndarray, xhat: np.ndarray) -> float:
    """Multi-scale SSIM in [0, 1], averaged over channels. Five scales
    when the image allows (min dim >= 161); otherwise as many scales as
    fit the window, with the weights renormalized."""
    x = np.asarray(x, dtype=np.float64)
    xhat = np.asarray(xhat, dtype=np.float64)
    if x.shape != xhat.shape:
        raise ValueError(f"ms_ssim shape mismatch: {x.shape} vs {xhat.shape}")
    if x.ndim == 2:
        x = x[:, :, None]
        xhat = xhat[:, :, None]
    values = [
        _ms_ssim_plane(x[:, :, ch], xhat[:, :, ch]) for ch in range(x.shape[2])
    ]
    return float(np.clip(np.mean(values), 0.0, 1.0))
