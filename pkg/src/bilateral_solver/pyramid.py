"""Bilateral-space pyramids for hierarchical preconditioning and initialization.

Each coarser level halves the integer vertex coordinates of the level below
and merges vertices that land in the same cell. Halving steps that merge
nothing are folded into the next step that does, so stored level sizes are
strictly decreasing; ``scales[k]`` records how many halvings level ``k`` is
above the base and is what the per-level weights are computed from.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ParameterError, ShapeError
from .grid import BilateralGrid, _coalesce, scatter_add
from .problem import Problem

# Level 0 is the base (bilateral-space) vector, coarser levels follow.
PyramidVector = list


@dataclass(frozen=True, eq=False)
class GridPyramid:
    maps: tuple
    level_sizes: tuple
    scales: tuple

    @property
    def K(self) -> int:
        return len(self.maps)


def build_pyramid(grid: BilateralGrid) -> GridPyramid:
    coords = grid.vertex_coords - grid.vertex_coords.min(axis=0)
    maps, sizes, scales = [], [grid.nverts], [0]
    halvings = 0
    while coords.shape[0] > 1:
        coords = coords // 2
        halvings += 1
        ids, coarse = _coalesce(coords)
        if coarse.shape[0] == coords.shape[0]:
            # No merge: first-visit numbering makes ``ids`` the identity.
            continue
        maps.append(ids)
        sizes.append(coarse.shape[0])
        scales.append(halvings)
        coords = coarse
    return GridPyramid(tuple(maps), tuple(sizes), tuple(scales))


def lift(pyr: GridPyramid, y) -> PyramidVector:
    """``P(y)``: the base vector followed by its successive coarse splats."""
    y = np.asarray(y, dtype=np.float64)
    if y.shape[0] != pyr.level_sizes[0]:
        raise ShapeError(f"expected {pyr.level_sizes[0]} base values, got shape {y.shape}")
    z = [y]
    for ids, size in zip(pyr.maps, pyr.level_sizes[1:]):
        z.append(scatter_add(ids, z[-1], size))
    return z


def project(pyr: GridPyramid, z: PyramidVector) -> np.ndarray:
    """``P^T(z)``: collapse every level back onto the base, coarse to fine."""
    if len(z) != len(pyr.level_sizes) or any(
            level.shape[0] != size for level, size in zip(z, pyr.level_sizes)):
        raise ShapeError("pyramid vector does not match the pyramid's level sizes")
    acc = np.asarray(z[-1], dtype=np.float64)
    for k in range(pyr.K - 1, -1, -1):
        acc = z[k] + acc[pyr.maps[k]]
    return acc


def pyramid_dot(a: PyramidVector, b: PyramidVector) -> float:
    return float(sum(np.vdot(u, v) for u, v in zip(a, b)))


def zweight(k: int, alpha: float, beta: float) -> float:
    if k < 0:
        raise ParameterError("pyramid level must be >= 0")
    if k == 0:
        return 1.0
    return float(alpha) ** -(beta + k)


class HierarchicalPreconditioner:
    """``y -> P^T(zweight * P(1) * P(y) / P(diag_A))``."""

    def __init__(self, pyr: GridPyramid, diag_A, alpha: float = 2.0, beta: float = 5.0):
        diag_A = np.asarray(diag_A, dtype=np.float64)
        if not (diag_A > 0).all():
            raise ParameterError("hierarchical preconditioner needs a positive diagonal")
        self.pyramid = pyr
        ones = lift(pyr, np.ones(pyr.level_sizes[0]))
        diags = lift(pyr, diag_A)
        self.multipliers = [
            zweight(pyr.scales[k], alpha, beta) * ones[k] / diags[k]
            for k in range(len(ones))
        ]

    def __call__(self, y) -> np.ndarray:
        z = lift(self.pyramid, y)
        if z[0].ndim == 1:
            return project(self.pyramid, [w * level for w, level in zip(self.multipliers, z)])
        return project(self.pyramid, [w[:, None] * level for w, level in zip(self.multipliers, z)])


def hier_precond(pyr: GridPyramid, diag_A, alpha: float = 2.0, beta: float = 5.0):
    return HierarchicalPreconditioner(pyr, diag_A, alpha, beta)


def push_pull(pyr: GridPyramid, rhs, conf_mass, alpha: float = 4.0, beta: float = 0.0,
              guard: float = 1e-12) -> np.ndarray:
    """Confidence-normalized pyramid fill of ``rhs / conf_mass``.

    ``rhs`` plays the role of ``S(c * t)`` and ``conf_mass`` of ``S(c)``;
    entries whose filled denominator is at most ``guard`` are set to 0.
    """
    ones = lift(pyr, np.ones(pyr.level_sizes[0]))
    weights = [zweight(pyr.scales[k], alpha, beta) / ones[k] for k in range(len(ones))]
    den = project(pyr, [w * level for w, level in zip(weights, lift(pyr, conf_mass))])
    rhs = np.asarray(rhs, dtype=np.float64)
    if rhs.ndim == 1:
        num = project(pyr, [w * level for w, level in zip(weights, lift(pyr, rhs))])
    else:
        num = project(pyr, [w[:, None] * level for w, level in zip(weights, lift(pyr, rhs))])
        den = den[:, None]
    ok = den > guard
    return np.where(ok, num / np.where(ok, den, 1.0), 0.0)


def hier_init(pyr: GridPyramid, grid: BilateralGrid, problem: Problem,
              alpha: float = 4.0, beta: float = 0.0) -> np.ndarray:
    c = problem.flat_confidence()
    t = problem.flat_target()
    ct = c * t if t.ndim == 1 else c[:, None] * t
    return push_pull(pyr, grid.splat(ct), grid.splat(c), alpha, beta)
