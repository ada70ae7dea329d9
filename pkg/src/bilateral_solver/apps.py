"""Application front-ends: superresolution, colorization, segmentation, stereo, defocus."""

from __future__ import annotations

import csv
import json
import time
from dataclasses import asdict, dataclass, field, is_dataclass

import numpy as np

from .domain_transform import DTParams, dt_filter
from .errors import ParameterError, ShapeError
from .grid import GridParams, ReferenceImage
from .imaging import (DepthInterval, bicubic_resize, interval_to_target_confidence,
                      rgb_to_yuv, superres_confidence, superres_lambda, yuv_to_rgb)
from .multichannel import solve_multi
from .problem import Problem
from .robust import ConfidenceInitParams, RobustParams, robust_solve, variance_confidence
from .solver import BilateralSolver, SolverConfig, apply_A

CSV_FIELDS = ("iteration", "config", "image", "loss", "wall_ms")


@dataclass
class RunReport:
    losses: list = field(default_factory=list)
    construction_ms: float = 0.0
    optimization_ms: float = 0.0
    params: dict = field(default_factory=dict)

    @property
    def total_ms(self) -> float:
        return self.construction_ms + self.optimization_ms

    def rows(self, config: str, image: str):
        for i, loss in enumerate(self.losses):
            yield {"iteration": i, "config": config, "image": image, "loss": f"{loss:.17g}",
                   "wall_ms": f"{self.total_ms:.3f}"}

    def write(self, path, config: str = "solve", image: str = "") -> None:
        """CSV of per-iteration losses plus a JSON sidecar with timings and parameters."""
        with open(path, "w", newline="") as fh:
            writer = csv.DictWriter(fh, fieldnames=CSV_FIELDS)
            writer.writeheader()
            writer.writerows(self.rows(config, image))
        summary = {
            "construction_ms": self.construction_ms,
            "optimization_ms": self.optimization_ms,
            "total_ms": self.total_ms,
            "params": self.params,
        }
        with open(str(path) + ".json", "w") as fh:
            json.dump(summary, fh, indent=2, sort_keys=True, default=_jsonable)


def _jsonable(obj):
    if is_dataclass(obj):
        return asdict(obj)
    if isinstance(obj, np.generic):
        return obj.item()
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def _report_from(result, params) -> RunReport:
    return RunReport(list(result.losses), 1e3 * result.construction_s,
                     1e3 * result.optimization_s, params)


def run_solve(reference: ReferenceImage, problem: Problem, grid_params: GridParams,
              config: SolverConfig, lam: float, dt_post: DTParams | None = None):
    solver = BilateralSolver(reference, grid_params, config)
    result = solver.solve(problem, lam, dt_post=dt_post, track_loss=True)
    params = {"grid": grid_params, "solver": config, "lambda": lam, "dt_post": dt_post}
    return result.output, _report_from(result, params)


SUPERRES_GRID = GridParams(sigma_xy=8, sigma_l=4, sigma_uv=3)
SUPERRES_DT = DTParams(16, 16)


def superres(depth_low, reference_rgb, factor: int, grid_params: GridParams = SUPERRES_GRID,
             lam: float | None = None, dt_post: DTParams | None = SUPERRES_DT,
             config: SolverConfig | None = None):
    """Upsample ``depth_low`` by ``factor`` guided by ``reference_rgb``."""
    depth_low = np.asarray(depth_low, dtype=np.float64)
    reference = ReferenceImage.from_array(reference_rgb)
    h, w = reference.shape
    if (depth_low.shape[0] * factor, depth_low.shape[1] * factor) != (h, w):
        raise ShapeError(f"reference {w}x{h} is not {factor}x the depth map "
                         f"{depth_low.shape[1]}x{depth_low.shape[0]}")
    lam = superres_lambda(factor) if lam is None else lam
    config = config or SolverConfig(n_iters=15)
    target = bicubic_resize(depth_low, w, h, origin="corner")
    conf = superres_confidence(factor, w, h)
    solver = BilateralSolver(reference, grid_params, config)
    result = solver.solve(Problem(target, conf), lam, dt_post=dt_post, track_loss=True)
    params = {"factor": factor, "lambda": lam, "confidence_sigma": factor / 4,
              "grid": grid_params, "solver": config, "dt_post": dt_post}
    return result.output, _report_from(result, params)


COLORIZE_GRID = GridParams(sigma_xy=4, sigma_l=4, sigma_uv=4)


def scribble_mask(gray, scribbles, threshold: float = 1.0) -> np.ndarray:
    """Pixels where the scribble image departs from the gray image by more than ``threshold``."""
    gray = np.asarray(gray, dtype=np.float64)
    scribbles = np.asarray(scribbles, dtype=np.float64)[..., :3]
    if gray.ndim == 3:
        gray = gray[..., :3]
    else:
        gray = gray[..., None]
    return (np.abs(scribbles - gray) > threshold).any(axis=2)


def _as_luma(gray) -> np.ndarray:
    gray = np.asarray(gray, dtype=np.float64)
    if gray.ndim == 2:
        return gray
    if gray.shape[2] == 1:
        return gray[..., 0]
    return rgb_to_yuv(gray[..., :3])[..., 0]


@dataclass
class ColorizeResult:
    rgb: np.ndarray
    yuv: np.ndarray
    mask: np.ndarray
    report: RunReport


def colorize(gray, scribbles, grid_params: GridParams = COLORIZE_GRID, lam: float = 0.5,
             dt_post: DTParams | None = None, config: SolverConfig | None = None) -> ColorizeResult:
    """Propagate scribbled chroma over a grayscale image; luma passes through untouched."""
    luma = _as_luma(gray)
    scribbles = np.asarray(scribbles, dtype=np.float64)
    if scribbles.ndim != 3 or scribbles.shape[:2] != luma.shape:
        raise ShapeError("scribble image must be RGB with the gray image's size")
    mask = scribble_mask(gray, scribbles)
    if not mask.any():
        raise ParameterError("no scribbles found: scribble image matches the gray image")
    uv = rgb_to_yuv(scribbles[..., :3])[..., 1:]
    solver = BilateralSolver(ReferenceImage.from_gray(luma), grid_params, config)
    result = solver.solve(Problem(uv, mask.astype(np.float64)), lam, dt_post=None)
    chroma = result.output
    if dt_post is not None:
        chroma = dt_filter(chroma, luma, dt_post)
    yuv = np.concatenate([luma[..., None], chroma], axis=2)
    params = {"grid": grid_params, "lambda": lam, "dt_post": dt_post, "solver": solver.config,
              "scribble_pixels": int(mask.sum())}
    report = RunReport([], 1e3 * result.construction_s, 1e3 * result.optimization_s, params)
    return ColorizeResult(yuv_to_rgb(yuv), yuv, mask, report)


SEGMENT_GRID = GridParams(sigma_xy=8, sigma_l=4, sigma_uv=4)


def segsmooth(probs, reference_rgb, epsilon: float = 0.01, grid_params: GridParams = SEGMENT_GRID,
              lam: float = 1.0, dt_post: DTParams | None = None,
              config: SolverConfig | None = None):
    """Smooth per-class probability maps with uniform confidence; return labels and maps."""
    probs = np.asarray(probs, dtype=np.float64)
    if probs.ndim != 3 or probs.shape[2] < 2:
        raise ShapeError("segmentation smoothing needs at least two probability channels")
    reference = ReferenceImage.from_array(reference_rgb)
    if probs.shape[:2] != reference.shape:
        raise ShapeError("probability maps and reference differ in size")
    solver = BilateralSolver(reference, grid_params, config)
    start = time.perf_counter()
    sys = solver.assemble(Problem.uniform(probs), lam)
    y = solve_multi(sys, sys.b, epsilon, solver.config, solver._pyr_if_needed(solver.config))
    smoothed = solver.grid.slice(y).reshape(probs.shape)
    if dt_post is not None:
        smoothed = dt_filter(smoothed, reference.guide(), dt_post)
    labels = np.argmax(smoothed, axis=2)
    elapsed = time.perf_counter() - start
    params = {"grid": grid_params, "lambda": lam, "epsilon": epsilon, "solver": solver.config,
              "dt_post": dt_post}
    report = RunReport([], 1e3 * solver.construction_s, 1e3 * elapsed, params)
    return labels, smoothed, report


STEREO_GRID = GridParams(sigma_xy=4, sigma_l=4, sigma_uv=4)
STEREO_DT = DTParams(4, 4)


def stereo_post(depth, reference_rgb, zero_left_columns: int = 0, grid_params: GridParams = STEREO_GRID,
                lam: float = 0.25, robust_params: RobustParams | None = None,
                conf_params: ConfidenceInitParams | None = None,
                dt_post: DTParams | None = STEREO_DT):
    """Variance-based confidence, robust IRLS solve, then domain-transform smoothing."""
    depth = np.asarray(depth, dtype=np.float64)
    reference = ReferenceImage.from_array(reference_rgb)
    if depth.shape != reference.shape:
        raise ShapeError("depth map and reference differ in size")
    conf_params = conf_params or ConfidenceInitParams(zero_left_columns=zero_left_columns)
    robust_params = robust_params or RobustParams()
    start = time.perf_counter()
    c_init = variance_confidence(depth, reference, conf_params)
    solver = BilateralSolver(reference, grid_params, robust_params.solver_config)
    built = time.perf_counter()
    result = robust_solve(reference, depth, c_init, robust_params, lam=lam, dt_post=dt_post,
                          solver=solver)
    done = time.perf_counter()
    params = {"grid": grid_params, "lambda": lam, "robust": robust_params,
              "confidence": conf_params, "dt_post": dt_post}
    report = RunReport(result.losses, 1e3 * (built - start), 1e3 * (done - built), params)
    return result.output, c_init, report


def defocus_prep(lower, upper) -> Problem:
    return interval_to_target_confidence(DepthInterval(lower, upper))


BENCH_CONFIGS = {
    "jacobi+flat": SolverConfig(preconditioner="jacobi", init="flat"),
    "pyr+flat": SolverConfig(preconditioner="hierarchical", init="flat"),
    "jacobi+pyr": SolverConfig(preconditioner="jacobi", init="hierarchical"),
    "pyr+pyr": SolverConfig(preconditioner="hierarchical", init="hierarchical"),
    "none": SolverConfig(preconditioner="none", init="flat"),
}


def bench_problem(reference: ReferenceImage, seed: int = 0) -> Problem:
    """Deterministic noisy target with sparse confidence for preconditioner benchmarks."""
    rng = np.random.default_rng(seed)
    h, w = reference.shape
    target = reference.luma / 255.0 + 0.1 * rng.standard_normal((h, w))
    confidence = (rng.random((h, w)) < 0.1) * rng.uniform(0.5, 1.0, (h, w))
    return Problem(target, confidence)


def bench_precond(reference: ReferenceImage, problem: Problem, n_iters: int = 25, lam: float = 4.0,
                  grid_params: GridParams | None = None, configs: dict | None = None,
                  reference_iters: int = 500):
    """Per-iteration quadratic loss for each configuration, normalized to [0, 1].

    ``0`` is the optimum (estimated by a long hierarchical solve), ``1`` the
    worst initial loss among the configurations. Returns
    ``{config: (normalized_losses, cumulative_ms)}``.
    """
    configs = BENCH_CONFIGS if configs is None else configs
    solver = BilateralSolver(reference, grid_params, SolverConfig())
    sys = solver.assemble(problem, lam)
    raw = {}
    for name, config in configs.items():
        config = SolverConfig(**{**asdict(config), "n_iters": n_iters, "tol": None})
        losses, stamps = [], []
        start = time.perf_counter()

        def record(i, y, r):
            stamps.append(1e3 * (time.perf_counter() - start))
            losses.append(float(0.5 * np.dot(y, apply_A(sys, y)) - np.dot(sys.b, y) + sys.c_scalar))

        solver.solve_system(sys, config, callback=record)
        # Pad iterations skipped by an exact early exit with the final loss.
        while len(losses) < n_iters + 1:
            losses.append(losses[-1])
            stamps.append(stamps[-1])
        raw[name] = (np.array(losses), np.array(stamps))
    best_config = SolverConfig(n_iters=reference_iters, tol=1e-12)
    y_best = solver.solve_system(sys, best_config)
    best = float(0.5 * np.dot(y_best, apply_A(sys, y_best)) - np.dot(sys.b, y_best) + sys.c_scalar)
    best = min(best, min(losses.min() for losses, _ in raw.values()))
    worst = max(losses[0] for losses, _ in raw.values())
    span = worst - best if worst > best else 1.0
    return {name: (np.clip((losses - best) / span, 0.0, 1.0), stamps)
            for name, (losses, stamps) in raw.items()}
