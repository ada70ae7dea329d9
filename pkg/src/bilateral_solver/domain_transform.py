"""Recursive-filter domain transform (edge-aware smoothing)."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ParameterError, ShapeError


@dataclass(frozen=True)
class DTParams:
    sigma_xy: float
    sigma_rgb: float
    n_passes: int = 3

    def __post_init__(self):
        if not (self.sigma_xy > 0 and self.sigma_rgb > 0):
            raise ParameterError("domain transform bandwidths must be positive")
        if self.n_passes < 1:
            raise ParameterError("n_passes must be >= 1")

    @classmethod
    def parse(cls, text: str) -> DTParams:
        """Parse ``"SXY:SRGB"``."""
        try:
            sxy, srgb = (float(part) for part in text.split(":"))
        except ValueError:
            raise ParameterError(f"expected SXY:SRGB, got {text!r}") from None
        return cls(sxy, srgb)


def _sweep(f: np.ndarray, coeff: np.ndarray) -> None:
    # f, coeff: (n, rows, ...) with the recursion running along axis 0.
    # coeff[j] weights the step between samples j-1 and j.
    for j in range(1, f.shape[0]):
        f[j] += coeff[j] * (f[j - 1] - f[j])
    for j in range(f.shape[0] - 2, -1, -1):
        f[j] += coeff[j + 1] * (f[j + 1] - f[j])


def dt_filter(signal, guide, params: DTParams) -> np.ndarray:
    """Filter ``signal`` (H, W[, K]) with edges taken from ``guide`` (H, W[, C]).

    Alternates horizontal and vertical causal/anticausal first-order
    recursions; filtering a constant returns that constant.
    """
    signal = np.asarray(signal, dtype=np.float64)
    guide = np.asarray(guide, dtype=np.float64)
    if guide.ndim == 2:
        guide = guide[..., None]
    if signal.shape[:2] != guide.shape[:2]:
        raise ShapeError(f"signal shape {signal.shape} does not match guide shape {guide.shape}")
    ratio = params.sigma_xy / params.sigma_rgb
    # Domain distances between consecutive samples; index 0 is unused.
    dx = np.ones(guide.shape[:2])
    dy = np.ones(guide.shape[:2])
    dx[:, 1:] += ratio * np.abs(np.diff(guide, axis=1)).sum(axis=2)
    dy[1:, :] += ratio * np.abs(np.diff(guide, axis=0)).sum(axis=2)

    # Recursions run along axis 0; keep a column-major copy for horizontal passes.
    extra = (1,) * (signal.ndim - 2)
    out = np.swapaxes(signal, 0, 1).copy()
    dx_t = np.ascontiguousarray(dx.T)
    n = params.n_passes
    for i in range(n):
        sigma_i = params.sigma_xy * np.sqrt(3.0) * 2.0 ** (n - i - 1) / np.sqrt(4.0 ** n - 1)
        a = np.exp(-np.sqrt(2.0) / sigma_i)
        _sweep(out, (a ** dx_t).reshape(dx_t.shape + extra))
        out = np.ascontiguousarray(np.swapaxes(out, 0, 1))
        _sweep(out, (a ** dy).reshape(dy.shape + extra))
        out = np.ascontiguousarray(np.swapaxes(out, 0, 1))
    return np.swapaxes(out, 0, 1).copy()


def dt_variance(z, guide, params: DTParams) -> np.ndarray:
    """Edge-aware local variance ``DT(z**2) - DT(z)**2``, clamped at 0."""
    z = np.asarray(z, dtype=np.float64)
    mean = dt_filter(z, guide, params)
    return np.maximum(dt_filter(z * z, guide, params) - mean * mean, 0.0)
