"""Bilateral-space quadratic assembly and preconditioned conjugate gradients."""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import AssemblyError, NumericalError, ParameterError, ShapeError
from .grid import (BilateralGrid, Bistochastization, GridParams, ReferenceImage,
                   bistochastize, build_grid)
from .problem import Problem
from .pyramid import GridPyramid, build_pyramid, hier_precond, push_pull

Operator = Callable[[np.ndarray], np.ndarray]

_PRECONDITIONERS = {"jacobi": "jacobi", "hierarchical": "hierarchical", "pyr": "hierarchical",
                    "none": "none"}
_INITS = {"flat": "flat", "hierarchical": "hierarchical", "pyr": "hierarchical"}


@dataclass(frozen=True)
class SolverConfig:
    n_iters: int = 25
    tol: float | None = None
    preconditioner: str = "hierarchical"
    init: str = "hierarchical"
    precond_alpha: float = 2.0
    precond_beta: float = 5.0
    init_alpha: float = 4.0
    init_beta: float = 0.0
    bistoch_iters: int = 64
    bistoch_tol: float = 1e-9  # tight enough that constants survive to ~1e-8

    def __post_init__(self):
        if self.n_iters < 1:
            raise ParameterError("n_iters must be >= 1")
        if self.tol is not None and self.tol < 0:
            raise ParameterError("tol must be nonnegative")
        if self.preconditioner not in _PRECONDITIONERS:
            raise ParameterError(f"unknown preconditioner {self.preconditioner!r}")
        if self.init not in _INITS:
            raise ParameterError(f"unknown init {self.init!r}")
        object.__setattr__(self, "preconditioner", _PRECONDITIONERS[self.preconditioner])
        object.__setattr__(self, "init", _INITS[self.init])


@dataclass(frozen=True, eq=False)
class BilateralSystem:
    """``A = lam * (D_m - D_n B D_n) + diag(S c)``, ``b = S(c * t)``.

    ``A`` is never formed; see :func:`apply_A`.
    """

    grid: BilateralGrid
    bistoch: Bistochastization
    problem: Problem | None
    lam: float
    diag_A: np.ndarray
    b: np.ndarray
    c_scalar: float | np.ndarray
    sc: np.ndarray

    @property
    def precond_diag(self) -> np.ndarray:
        # Isolated vertices without confidence have an (up to rounding) zero
        # row in A; give them the smoothness scale so preconditioners stay PD.
        m = self.grid.m
        degenerate = self.diag_A <= 1e-9 * self.lam * m
        if not degenerate.any():
            return self.diag_A
        return np.where(degenerate, self.lam * m, self.diag_A)

    def with_rhs(self, b) -> BilateralSystem:
        b = np.asarray(b, dtype=np.float64)
        if b.shape[0] != self.grid.nverts:
            raise ShapeError(f"right-hand side has {b.shape[0]} rows, expected {self.grid.nverts}")
        return BilateralSystem(self.grid, self.bistoch, None, self.lam, self.diag_A, b, 0.0, self.sc)


def assemble(grid: BilateralGrid, bistoch: Bistochastization, problem: Problem,
             lam: float) -> BilateralSystem:
    if problem.shape != grid.shape:
        raise ShapeError(f"problem shape {problem.shape} does not match grid shape {grid.shape}")
    if not np.isfinite(lam) or lam < 0:
        raise AssemblyError(f"lambda must be nonnegative and finite, got {lam!r}")
    c = problem.flat_confidence()
    t = problem.flat_target()
    ct = c * t if t.ndim == 1 else c[:, None] * t
    sc = grid.splat(c)
    if lam == 0 and (sc <= 0).any():
        raise AssemblyError("lambda = 0 requires positive confidence mass at every vertex")
    n = bistoch.n
    diag_A = lam * (grid.m - grid.blur_diag * n * n) + sc
    c_scalar = 0.5 * (ct * t).sum(axis=0)
    return BilateralSystem(grid, bistoch, problem, float(lam), diag_A, grid.splat(ct),
                           c_scalar if t.ndim > 1 else float(c_scalar), sc)


def _col(v: np.ndarray, like: np.ndarray) -> np.ndarray:
    return v if like.ndim == 1 else v.reshape((-1,) + (1,) * (like.ndim - 1))


def apply_A(sys: BilateralSystem, y) -> np.ndarray:
    y = np.asarray(y, dtype=np.float64)
    if y.shape[0] != sys.grid.nverts:
        raise ShapeError(f"expected {sys.grid.nverts} vertex values, got shape {y.shape}")
    m, n, sc = _col(sys.grid.m, y), _col(sys.bistoch.n, y), _col(sys.sc, y)
    return sys.lam * (m * y - n * sys.grid.blur(n * y)) + sc * y


def quadratic_loss(sys: BilateralSystem, y, b=None) -> float:
    """``0.5 y'Ay - b'y + c`` for a single right-hand side."""
    y = np.asarray(y, dtype=np.float64)
    b = sys.b if b is None else b
    const = sys.c_scalar if b is sys.b else 0.0
    return float(0.5 * np.dot(y, apply_A(sys, y)) - np.dot(b, y) + const)


def _flat_from_rhs(rhs: np.ndarray, sc: np.ndarray) -> np.ndarray:
    den = _col(sc, rhs)
    ok = den > 0
    return np.where(ok, rhs / np.where(ok, den, 1.0), 0.0)


def flat_init(grid: BilateralGrid, problem: Problem) -> np.ndarray:
    """Per-vertex confidence-weighted mean of the target; 0 where ``S c == 0``."""
    c = problem.flat_confidence()
    t = problem.flat_target()
    ct = c * t if t.ndim == 1 else c[:, None] * t
    return _flat_from_rhs(grid.splat(ct), grid.splat(c))


def jacobi_precond(diag_A) -> Operator:
    diag_A = np.asarray(diag_A, dtype=np.float64)
    if not (diag_A > 0).all():
        raise AssemblyError("Jacobi preconditioner needs a strictly positive diagonal")
    inv = 1.0 / diag_A

    def apply(r):
        return _col(inv, r) * r

    return apply


def _identity(r):
    return r.copy()


def pcg(apply: Operator, b, y0, precond: Operator | None = None, n_iters: int = 25,
        tol: float | None = None, callback=None) -> np.ndarray:
    """Preconditioned conjugate gradients for a single right-hand side.

    Runs ``n_iters`` iterations, or stops early once ``||r|| <= tol * ||b||``
    when ``tol`` is given. ``callback(i, y, r)`` sees every iterate, with
    ``i = 0`` for the initial guess.
    """
    precond = _identity if precond is None else precond
    b = np.asarray(b, dtype=np.float64)
    y = np.array(y0, dtype=np.float64)
    r = b - apply(y)
    d = precond(r)
    delta = float(np.dot(r, d))
    if callback is not None:
        callback(0, y, r)
    stop = None if tol is None else tol * float(np.linalg.norm(b))
    for i in range(n_iters):
        if delta == 0.0 or (stop is not None and np.linalg.norm(r) <= stop):
            break
        q = apply(d)
        dq = float(np.dot(d, q))
        if dq <= 0.0:
            if not np.isfinite(dq):
                raise NumericalError(f"non-finite curvature at PCG iteration {i + 1}", i + 1)
            break
        alpha = delta / dq
        y += alpha * d
        r -= alpha * q
        s = precond(r)
        delta_old, delta = delta, float(np.dot(r, s))
        if not (np.isfinite(alpha) and np.isfinite(delta)):
            raise NumericalError(f"non-finite value at PCG iteration {i + 1}", i + 1)
        d = s + (delta / delta_old) * d
        if callback is not None:
            callback(i + 1, y, r)
    if not np.isfinite(y).all():
        raise NumericalError("PCG produced non-finite iterates", n_iters)
    return y


def make_preconditioner(sys: BilateralSystem, config: SolverConfig,
                        pyramid: GridPyramid | None = None) -> Operator:
    if config.preconditioner == "none":
        return _identity
    if config.preconditioner == "jacobi":
        return jacobi_precond(sys.precond_diag)
    pyramid = build_pyramid(sys.grid) if pyramid is None else pyramid
    return hier_precond(pyramid, sys.precond_diag, config.precond_alpha, config.precond_beta)


def initial_guess(sys: BilateralSystem, config: SolverConfig, rhs=None,
                  pyramid: GridPyramid | None = None) -> np.ndarray:
    rhs = sys.b if rhs is None else rhs
    if config.init == "flat":
        return _flat_from_rhs(rhs, sys.sc)
    pyramid = build_pyramid(sys.grid) if pyramid is None else pyramid
    return push_pull(pyramid, rhs, sys.sc, config.init_alpha, config.init_beta)


def solve_columns(sys: BilateralSystem, rhs, precond: Operator, y0, config: SolverConfig,
                  callback=None) -> np.ndarray:
    """Run PCG on each column of ``rhs`` independently (1-D ``rhs`` is one column)."""

    def apply(v):
        return apply_A(sys, v)

    rhs = np.asarray(rhs, dtype=np.float64)
    if rhs.ndim == 1:
        return pcg(apply, rhs, y0, precond, config.n_iters, config.tol, callback)
    out = np.empty_like(rhs)
    for j in range(rhs.shape[1]):
        out[:, j] = pcg(apply, rhs[:, j], y0[:, j], precond, config.n_iters, config.tol)
    return out


@dataclass
class SolveResult:
    output: np.ndarray
    y: np.ndarray
    loss: float | np.ndarray
    system: BilateralSystem
    losses: list = field(default_factory=list)
    construction_s: float = 0.0
    optimization_s: float = 0.0


class BilateralSolver:
    """Grid, bistochastization and pyramid for one reference image.

    Building these is the expensive, reference-only part of a solve; reuse
    one instance across targets, confidences and smoothness weights.
    """

    def __init__(self, reference: ReferenceImage, grid_params: GridParams | None = None,
                 config: SolverConfig | None = None):
        start = time.perf_counter()
        self.reference = reference
        self.grid_params = grid_params or GridParams()
        self.config = config or SolverConfig()
        self.grid = build_grid(reference, self.grid_params)
        self.bistoch = bistochastize(self.grid, self.config.bistoch_iters, self.config.bistoch_tol)
        self._pyramid = None
        if "hierarchical" in (self.config.preconditioner, self.config.init):
            self._pyramid = build_pyramid(self.grid)
        self.construction_s = time.perf_counter() - start

    @property
    def pyramid(self) -> GridPyramid:
        if self._pyramid is None:
            self._pyramid = build_pyramid(self.grid)
        return self._pyramid

    def _pyr_if_needed(self, config):
        if "hierarchical" in (config.preconditioner, config.init):
            return self.pyramid
        return None

    def assemble(self, problem: Problem, lam: float) -> BilateralSystem:
        return assemble(self.grid, self.bistoch, problem, lam)

    def preconditioner(self, sys: BilateralSystem, config: SolverConfig | None = None) -> Operator:
        config = config or self.config
        return make_preconditioner(sys, config, self._pyr_if_needed(config))

    def solve_system(self, sys: BilateralSystem, config: SolverConfig | None = None,
                     y0=None, precond: Operator | None = None, callback=None) -> np.ndarray:
        config = config or self.config
        pyr = self._pyr_if_needed(config)
        if precond is None:
            precond = make_preconditioner(sys, config, pyr)
        if y0 is None:
            y0 = initial_guess(sys, config, pyramid=pyr)
        return solve_columns(sys, sys.b, precond, y0, config, callback)

    def solve(self, problem: Problem, lam: float, dt_post=None, config: SolverConfig | None = None,
              track_loss: bool = False, y0=None) -> SolveResult:
        from .domain_transform import dt_filter

        config = config or self.config
        start = time.perf_counter()
        sys = self.assemble(problem, lam)
        assembled = time.perf_counter()
        losses = []
        callback = None
        if track_loss and problem.nchannels == 1:
            def callback(i, y, r):
                # 0.5 y'Ay - b'y = -0.5 y'r - 0.5 b'y with r = b - Ay
                losses.append(float(-0.5 * np.dot(y, r) - 0.5 * np.dot(sys.b, y) + sys.c_scalar))
        y = self.solve_system(sys, config, y0=y0, callback=callback)
        x = self.grid.slice(y)
        h, w = self.grid.shape
        x = x.reshape((h, w) + x.shape[1:])
        if dt_post is not None:
            x = dt_filter(x, self.reference.guide(), dt_post)
        if y.ndim == 1:
            loss = quadratic_loss(sys, y)
        else:
            ay = apply_A(sys, y)
            loss = 0.5 * (y * ay).sum(axis=0) - (sys.b * y).sum(axis=0) + sys.c_scalar
        done = time.perf_counter()
        return SolveResult(x, y, loss, sys, losses,
                           construction_s=self.construction_s + (assembled - start),
                           optimization_s=done - assembled)


def solve(reference: ReferenceImage, problem: Problem, grid_params: GridParams | None = None,
          solver_config: SolverConfig | None = None, lam: float = 1.0, dt_post=None) -> SolveResult:
    """Build the grid for ``reference`` and solve one problem end to end."""
    solver = BilateralSolver(reference, grid_params, solver_config)
    return solver.solve(problem, lam, dt_post=dt_post)
