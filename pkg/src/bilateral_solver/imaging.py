"""Colorspace conversion, resampling and application-specific problem builders."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ParameterError, ShapeError
from .problem import Problem

# BT.601 full range (JFIF), chroma offset by 128.
_RGB_TO_YUV = np.array([
    [0.299, 0.587, 0.114],
    [-0.168736, -0.331264, 0.5],
    [0.5, -0.418688, -0.081312],
])
_YUV_TO_RGB = np.linalg.inv(_RGB_TO_YUV)
_CHROMA_OFFSET = np.array([0.0, 128.0, 128.0])


def rgb_to_yuv(rgb) -> np.ndarray:
    rgb = np.asarray(rgb, dtype=np.float64)
    if rgb.ndim != 3 or rgb.shape[2] != 3:
        raise ShapeError(f"expected an (H, W, 3) raster, got shape {rgb.shape}")
    return rgb @ _RGB_TO_YUV.T + _CHROMA_OFFSET


def yuv_to_rgb(yuv) -> np.ndarray:
    yuv = np.asarray(yuv, dtype=np.float64)
    if yuv.ndim != 3 or yuv.shape[2] != 3:
        raise ShapeError(f"expected an (H, W, 3) raster, got shape {yuv.shape}")
    return (yuv - _CHROMA_OFFSET) @ _YUV_TO_RGB.T


def _cubic_kernel(x: np.ndarray, a: float = -0.5) -> np.ndarray:
    x = np.abs(x)
    x2, x3 = x * x, x * x * x
    near = (a + 2) * x3 - (a + 3) * x2 + 1
    far = a * x3 - 5 * a * x2 + 8 * a * x - 4 * a
    return np.where(x <= 1, near, np.where(x < 2, far, 0.0))


def _resize_matrix(n_in: int, n_out: int, origin: str) -> np.ndarray:
    i = np.arange(n_out, dtype=np.float64)
    if origin == "center":
        src = (i + 0.5) * (n_in / n_out) - 0.5
    elif origin == "corner":
        src = i * (n_in / n_out)
    else:
        raise ParameterError(f"unknown resize origin {origin!r}")
    base = np.floor(src).astype(np.int64)
    mat = np.zeros((n_out, n_in))
    for tap in range(-1, 3):
        idx = base + tap
        weight = _cubic_kernel(src - idx)
        np.add.at(mat, (np.arange(n_out), np.clip(idx, 0, n_in - 1)), weight)
    return mat


def bicubic_resize(raster, new_w: int, new_h: int, origin: str = "center") -> np.ndarray:
    """Separable Catmull-Rom resize with clamped borders.

    ``origin="center"`` aligns pixel centers (the usual image-resize
    convention); ``"corner"`` places input sample ``i`` at output position
    ``i * scale``, which matches decimation by striding.
    """
    raster = np.asarray(raster, dtype=np.float64)
    if new_w < 1 or new_h < 1:
        raise ParameterError("target size must be positive")
    h, w = raster.shape[:2]
    if (h, w) == (new_h, new_w):
        return raster.copy()
    wy = _resize_matrix(h, new_h, origin)
    wx = _resize_matrix(w, new_w, origin)
    out = np.tensordot(wy, raster, axes=(1, 0))
    out = np.tensordot(wx, out, axes=(1, 1))
    return np.moveaxis(out, 0, 1)


def _check_factor(f):
    if f < 2:
        raise ParameterError(f"upsampling factor must be >= 2, got {f}")


@dataclass(frozen=True)
class SuperresParams:
    factor: int

    def __post_init__(self):
        _check_factor(self.factor)

    @property
    def lam(self) -> float:
        return superres_lambda(self.factor)

    @property
    def confidence_sigma(self) -> float:
        return self.factor / 4


def superres_lambda(f: float) -> float:
    _check_factor(f)
    return 4.0 ** (f - 0.5)


def superres_confidence(f: int, out_w: int, out_h: int) -> np.ndarray:
    """Gaussian bumps of std ``f/4`` centered on every ``f``-th pixel, peak 1."""
    _check_factor(f)
    sigma = f / 4

    def offsets(n):
        r = np.arange(n) % f
        return np.minimum(r, f - r).astype(np.float64)

    dy, dx = offsets(out_h), offsets(out_w)
    return np.exp(-(dy[:, None] ** 2 + dx[None, :] ** 2) / (2 * sigma ** 2))


@dataclass(frozen=True)
class DepthInterval:
    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        lo = np.asarray(self.lower, dtype=np.float64)
        hi = np.asarray(self.upper, dtype=np.float64)
        if lo.shape != hi.shape:
            raise ShapeError(f"interval bounds differ in shape: {lo.shape} vs {hi.shape}")
        if (lo > hi).any():
            raise ParameterError("interval lower bound exceeds upper bound")
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)


def interval_to_target_confidence(interval: DepthInterval) -> Problem:
    """Interval midpoint as target, ``exp(-length)`` as confidence."""
    target = 0.5 * (interval.lower + interval.upper)
    confidence = np.exp(interval.lower - interval.upper)
    return Problem(target, confidence)
