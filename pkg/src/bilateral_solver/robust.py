"""Geman-McClure robust bilateral solver (IRLS) and variance-based confidence."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .domain_transform import DTParams, dt_filter, dt_variance
from .errors import ParameterError
from .grid import GridParams, ReferenceImage
from .problem import Problem
from .solver import BilateralSolver, BilateralSystem, SolverConfig


@dataclass(frozen=True)
class RobustParams:
    sigma_gm: float = 1.0
    n_irls: int = 32
    solver_config: SolverConfig = field(default_factory=SolverConfig)

    def __post_init__(self):
        if not self.sigma_gm > 0:
            raise ParameterError("sigma_gm must be positive")
        if self.n_irls < 1:
            raise ParameterError("n_irls must be >= 1")


@dataclass(frozen=True)
class ConfidenceInitParams:
    sigma_dt: float = 2.0
    dt_sigma_xy: float = 32.0
    dt_sigma_rgb: float = 32.0
    zero_left_columns: int = 0

    def __post_init__(self):
        if not (self.sigma_dt > 0 and self.dt_sigma_xy > 0 and self.dt_sigma_rgb > 0):
            raise ParameterError("confidence bandwidths must be positive")
        if self.zero_left_columns < 0:
            raise ParameterError("zero_left_columns must be nonnegative")


def gm_rho(e, sigma_gm: float):
    e2 = np.square(e)
    return e2 / (sigma_gm ** 2 + e2)


def gm_weight(e, sigma_gm: float):
    s2 = sigma_gm ** 2
    return 2 * s2 / np.square(s2 + np.square(e))


def smoothness(sys: BilateralSystem, y: np.ndarray) -> float:
    """``lam * y'(D_m - D_n B D_n)y``, i.e. ``lam * x'(I - W)x`` for ``x = S^T y``."""
    n = sys.bistoch.n
    ly = sys.grid.m * y - n * sys.grid.blur(n * y)
    return float(sys.lam * np.dot(y, ly))


def robust_objective(sys: BilateralSystem, y: np.ndarray, residual: np.ndarray,
                     sigma_gm: float) -> float:
    # Smoothness enters at half weight: with IRLS weights 2 * rho'(e) / (2e) the
    # reweighted least-squares problem is a majorizer of this objective.
    return 0.5 * smoothness(sys, y) + float(gm_rho(residual, sigma_gm).sum())


@dataclass
class RobustResult:
    output: np.ndarray
    y: np.ndarray
    losses: list
    confidence: np.ndarray


def robust_solve(reference: ReferenceImage, target, c_init, robust_params: RobustParams | None = None,
                 grid_params: GridParams | None = None, lam: float = 0.25,
                 dt_post: DTParams | None = None, solver: BilateralSolver | None = None,
                 weight_fn: Callable | None = None) -> RobustResult:
    """Iteratively reweighted bilateral solve under a Geman-McClure penalty.

    Each outer iteration solves with the current per-pixel weights, then
    resets the weights from the pixel residual ``x - t``. Solves after the
    first are warm-started from the previous solution, so the robust
    objective cannot increase even when inner solves are truncated.
    ``weight_fn`` overrides the Geman-McClure weight function.
    """
    params = robust_params or RobustParams()
    config = params.solver_config
    if solver is None:
        solver = BilateralSolver(reference, grid_params, config)
    target = np.asarray(target, dtype=np.float64)
    conf = np.asarray(c_init, dtype=np.float64)
    if weight_fn is None:
        def weight_fn(e):
            return gm_weight(e, params.sigma_gm)
    losses = []
    y = None
    x = target
    for _ in range(params.n_irls):
        result = solver.solve(Problem(target, conf), lam, config=config, y0=y)
        y, x = result.y, result.output
        residual = x - target
        losses.append(robust_objective(result.system, y, residual, params.sigma_gm))
        conf = weight_fn(residual)
    if dt_post is not None:
        x = dt_filter(x, reference.guide(), dt_post)
    return RobustResult(x, y, losses, conf)


def variance_confidence(depth, guide, params: ConfidenceInitParams | None = None) -> np.ndarray:
    """``exp(-V / (2 sigma_dt**2))`` with ``V`` the edge-aware local variance of ``depth``."""
    params = params or ConfidenceInitParams()
    if isinstance(guide, ReferenceImage):
        guide = guide.guide()
    variance = dt_variance(depth, guide, DTParams(params.dt_sigma_xy, params.dt_sigma_rgb))
    conf = np.exp(-variance / (2 * params.sigma_dt ** 2))
    conf[:, :params.zero_left_columns] = 0.0
    return conf
