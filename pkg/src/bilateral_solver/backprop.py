"""Gradients of a downstream loss with respect to the solver's target and confidence."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import solver as _solver
from .errors import ShapeError
from .pyramid import GridPyramid


@dataclass(frozen=True)
class GradientBundle:
    d_target: np.ndarray
    d_confidence: np.ndarray
    d_b: np.ndarray
    d_diagA: np.ndarray


def solve_backward(sys: _solver.BilateralSystem, y_hat, grad_xhat,
                   solver_config: _solver.SolverConfig | None = None,
                   pyramid: GridPyramid | None = None) -> GradientBundle:
    """Backpropagate ``grad_xhat = df/dx_hat`` through ``x_hat = S^T A^-1 b``.

    Costs one linear solve with the forward preconditioner and iteration
    budget; only the bilateral-space solution ``y_hat`` is needed from the
    forward pass. Returned pixel-space gradients have the problem's raster
    shape.
    """
    config = solver_config or _solver.SolverConfig()
    grid = sys.grid
    grad = np.asarray(grad_xhat, dtype=np.float64).reshape(-1)
    y_hat = np.asarray(y_hat, dtype=np.float64)
    if grad.shape[0] != grid.npixels or y_hat.shape != (grid.nverts,):
        raise ShapeError("backward pass expects single-channel forward outputs")
    if "hierarchical" in (config.preconditioner, config.init) and pyramid is None:
        pyramid = _solver.build_pyramid(grid)
    rhs = grid.splat(grad)
    precond = _solver.make_preconditioner(sys, config, pyramid)
    y0 = _solver.initial_guess(sys, config, rhs=rhs, pyramid=pyramid)
    d_b = _solver.solve_columns(sys, rhs, precond, y0, config)
    d_diag = -d_b * y_hat

    shape = sys.problem.shape
    c = sys.problem.flat_confidence()
    t = sys.problem.flat_target()
    d_b_px = grid.slice(d_b)
    d_target = (c * d_b_px).reshape(shape)
    d_conf = (grid.slice(d_diag) + d_b_px * t).reshape(shape)
    return GradientBundle(d_target, d_conf, d_b, d_diag)
