from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ParameterError, ShapeError


@dataclass(frozen=True)
class Problem:
    """Per-pixel target ``t`` and confidence ``c``.

    ``target`` is ``(H, W)`` or ``(H, W, K)`` for ``K`` targets sharing one
    confidence raster of shape ``(H, W)``.
    """

    target: np.ndarray
    confidence: np.ndarray

    def __post_init__(self):
        t = np.asarray(self.target, dtype=np.float64)
        c = np.asarray(self.confidence, dtype=np.float64)
        if c.ndim != 2:
            raise ShapeError(f"confidence must be 2-D, got shape {c.shape}")
        if t.shape[:2] != c.shape or t.ndim not in (2, 3):
            raise ShapeError(f"target shape {t.shape} does not match confidence shape {c.shape}")
        if not np.isfinite(t).all():
            raise ParameterError("target contains non-finite values")
        if not np.isfinite(c).all():
            raise ParameterError("confidence contains non-finite values")
        if (c < 0).any():
            raise ParameterError("confidence must be nonnegative")
        object.__setattr__(self, "target", t)
        object.__setattr__(self, "confidence", c)

    @classmethod
    def uniform(cls, target) -> Problem:
        target = np.asarray(target, dtype=np.float64)
        return cls(target, np.ones(target.shape[:2]))

    @property
    def shape(self) -> tuple[int, int]:
        return self.confidence.shape

    @property
    def nchannels(self) -> int:
        return 1 if self.target.ndim == 2 else self.target.shape[2]

    def flat_target(self) -> np.ndarray:
        if self.target.ndim == 2:
            return self.target.ravel()
        return self.target.reshape(-1, self.target.shape[2])

    def flat_confidence(self) -> np.ndarray:
        return self.confidence.ravel()
