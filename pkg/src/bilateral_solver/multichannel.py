"""Many right-hand sides sharing one system, with optional pivoted-QR rank reduction."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .errors import ParameterError, ShapeError
from .pyramid import GridPyramid
from .solver import (BilateralSystem, SolverConfig, build_pyramid, initial_guess,
                     make_preconditioner, solve_columns)


@dataclass(frozen=True)
class ReducedRHS:
    Q_tilde: np.ndarray
    R_tilde: np.ndarray
    epsilon: float
    dropped_mass_fraction: float

    @property
    def t(self) -> int:
        return self.Q_tilde.shape[1]

    def reconstruct(self) -> np.ndarray:
        return self.Q_tilde @ self.R_tilde


def reduce_rhs(B, epsilon: float) -> ReducedRHS:
    """Low-rank basis for the columns of ``B`` keeping all but ``epsilon`` of its mass.

    ``B P = Q R`` by column-pivoted Householder QR; rows of ``R P^T`` are
    ordered by decreasing squared norm and the shortest prefix holding at
    least ``(1 - epsilon)`` of the total is kept, so
    ``||B - Q_t R_t||_F^2 <= epsilon * ||B||_F^2``.
    """
    if not 0 <= epsilon < 1:
        raise ParameterError(f"epsilon must lie in [0, 1), got {epsilon!r}")
    B = np.asarray(B, dtype=np.float64)
    if B.ndim != 2:
        raise ShapeError(f"expected a 2-D right-hand-side matrix, got shape {B.shape}")
    if not np.isfinite(B).all():
        raise ParameterError("right-hand sides contain non-finite values")
    q, r, perm = scipy.linalg.qr(B, mode="economic", pivoting=True)
    r_unpermuted = np.empty_like(r)
    r_unpermuted[:, perm] = r
    mass = np.square(r_unpermuted).sum(axis=1)
    order = np.argsort(-mass, kind="stable")
    mass = mass[order]
    total = mass.sum()
    if total == 0:
        t = 0
    else:
        cumulative = np.cumsum(mass)
        t = int(np.searchsorted(cumulative, (1 - epsilon) * total, side="left")) + 1
        t = min(t, mass.size)
    kept = order[:t]
    dropped = 0.0 if total == 0 else float(max(total - mass[:t].sum(), 0.0) / total)
    return ReducedRHS(q[:, kept], r_unpermuted[kept], float(epsilon), dropped)


def solve_multi(sys: BilateralSystem, B, epsilon: float = 0.01,
                solver_config: SolverConfig | None = None,
                pyramid: GridPyramid | None = None) -> np.ndarray:
    """Solve ``A Y = B`` column by column, through a reduced basis when ``epsilon > 0``."""
    config = solver_config or SolverConfig()
    B = np.asarray(B, dtype=np.float64)
    if B.ndim != 2 or B.shape[0] != sys.grid.nverts:
        raise ShapeError(f"expected ({sys.grid.nverts}, K) right-hand sides, got {B.shape}")
    if "hierarchical" in (config.preconditioner, config.init) and pyramid is None:
        pyramid = build_pyramid(sys.grid)
    precond = make_preconditioner(sys, config, pyramid)
    if epsilon == 0:
        y0 = initial_guess(sys, config, rhs=B, pyramid=pyramid)
        return solve_columns(sys, B, precond, y0, config)
    reduced = reduce_rhs(B, epsilon)
    if reduced.t == 0:
        return np.zeros_like(B)
    y0 = initial_guess(sys, config, rhs=reduced.Q_tilde, pyramid=pyramid)
    basis = solve_columns(sys, reduced.Q_tilde, precond, y0, config)
    return basis @ reduced.R_tilde
