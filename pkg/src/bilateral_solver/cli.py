"""``bs`` command-line entry point."""

from __future__ import annotations

import argparse
import csv
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from . import apps
from .domain_transform import DTParams
from .errors import BilateralSolverError
from .grid import GridParams, ReferenceImage
from .problem import Problem
from .raster_io import read_raster, write_raster
from .solver import SolverConfig


def _dt_arg(text: str) -> DTParams | None:
    if text.lower() in ("off", "none"):
        return None
    try:
        return DTParams.parse(text)
    except (ValueError, BilateralSolverError) as exc:
        raise argparse.ArgumentTypeError(f"expected SXY:SRGB (e.g. 16:16) or 'off', got {text!r}") from exc


def _positive_int(text: str) -> int:
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {text}")
    return value


def _add_grid_flags(p, sxy, sl, suv):
    p.add_argument("--sigma-xy", type=float, default=sxy)
    p.add_argument("--sigma-l", type=float, default=sl)
    p.add_argument("--sigma-uv", type=float, default=suv)


def _add_solver_flags(p, iters=25):
    p.add_argument("--iters", type=_positive_int, default=iters, help="PCG iterations")
    p.add_argument("--precond", choices=["jacobi", "pyr", "none"], default="pyr")
    p.add_argument("--init", choices=["flat", "pyr"], default="pyr")


def _grid(args) -> GridParams:
    return GridParams(args.sigma_xy, args.sigma_l, args.sigma_uv)


def _config(args) -> SolverConfig:
    return SolverConfig(n_iters=args.iters, preconditioner=args.precond, init=args.init)


def _single_channel(raster, what: str) -> np.ndarray:
    raster = np.asarray(raster, dtype=np.float64)
    if raster.ndim == 3 and raster.shape[2] == 1:
        raster = raster[..., 0]
    if raster.ndim != 2:
        raise BilateralSolverError(f"{what} must be single-channel, got shape {raster.shape}")
    return raster


def _check_size(a, b, what: str) -> None:
    if a.shape[:2] != b.shape[:2]:
        raise BilateralSolverError(f"{what}: {a.shape[1]}x{a.shape[0]} vs {b.shape[1]}x{b.shape[0]}")


def cmd_solve(args) -> None:
    reference = read_raster(args.reference)
    target = np.asarray(read_raster(args.target), dtype=np.float64)
    _check_size(target, reference, "target and reference sizes differ")
    if args.confidence is None:
        print("using uniform confidence", file=sys.stderr)
        conf = np.ones(target.shape[:2])
    else:
        conf = _single_channel(read_raster(args.confidence), "confidence")
        _check_size(conf, reference, "confidence and reference sizes differ")
    output, report = apps.run_solve(ReferenceImage.from_array(reference), Problem(target, conf),
                                    _grid(args), _config(args), args.lam, args.dt_post)
    write_raster(args.output, output, args.bits)
    if args.report:
        report.write(args.report, config=f"{args.precond}+{args.init}", image=Path(args.reference).name)


def cmd_superres(args) -> None:
    depth = _single_channel(read_raster(args.depth), "depth")
    reference = read_raster(args.reference)
    output, report = apps.superres(depth, reference, args.factor, _grid(args), args.lam,
                                   args.dt_post, _config(args))
    write_raster(args.output, output, args.bits)
    if args.report:
        report.write(args.report, config="superres", image=Path(args.reference).name)


def cmd_colorize(args) -> None:
    gray = read_raster(args.gray)
    scribbles = read_raster(args.scribbles)
    result = apps.colorize(gray, scribbles, _grid(args), args.lam, args.dt_post, _config(args))
    write_raster(args.output, result.rgb, args.bits)
    if args.report:
        result.report.write(args.report, config="colorize", image=Path(args.gray).name)


def cmd_segsmooth(args) -> None:
    probs = read_raster(args.probs)
    if probs.ndim != 3 or probs.shape[2] < 2:
        raise BilateralSolverError("probability raster needs at least two channels")
    reference = read_raster(args.reference)
    _check_size(probs, reference, "probabilities and reference sizes differ")
    labels, smoothed, report = apps.segsmooth(probs, reference, args.epsilon, _grid(args), args.lam,
                                              args.dt_post, _config(args))
    write_raster(args.labels, labels.astype(np.float64), args.bits)
    if args.smoothed:
        write_raster(args.smoothed, smoothed, args.bits)
    if args.report:
        report.write(args.report, config="segsmooth", image=Path(args.reference).name)


def cmd_stereo_post(args) -> None:
    depth = _single_channel(read_raster(args.depth), "depth")
    reference = read_raster(args.reference)
    _check_size(depth, reference, "depth and reference sizes differ")
    robust = apps.RobustParams(args.sigma_gm, args.irls, _config(args))
    output, _, report = apps.stereo_post(depth, reference, args.zero_left_cols, _grid(args), args.lam,
                                         robust_params=robust, dt_post=args.dt_post)
    write_raster(args.output, output, args.bits)
    if args.report:
        report.write(args.report, config="stereo-post", image=Path(args.reference).name)


def cmd_defocus_prep(args) -> None:
    lower = _single_channel(read_raster(args.lower), "lower bound")
    upper = _single_channel(read_raster(args.upper), "upper bound")
    _check_size(lower, upper, "bound rasters differ in size")
    problem = apps.defocus_prep(lower, upper)
    write_raster(args.target_out, problem.target, args.bits)
    write_raster(args.confidence_out, problem.confidence, args.bits)


def _bench_one(index: int, path: str, args):
    reference = ReferenceImage.from_array(read_raster(path))
    problem = apps.bench_problem(reference, seed=index)
    return apps.bench_precond(reference, problem, n_iters=args.iters, lam=args.lam,
                              grid_params=_grid(args))


def bench_threads() -> int:
    try:
        return max(1, int(os.environ.get("BS_THREADS", "1")))
    except ValueError:
        raise BilateralSolverError("BS_THREADS must be a positive integer") from None


def cmd_bench_precond(args) -> None:
    with ThreadPoolExecutor(max_workers=bench_threads()) as pool:
        results = list(pool.map(lambda item: _bench_one(item[0], item[1], args),
                                enumerate(args.references)))
    with open(args.output, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=apps.CSV_FIELDS)
        writer.writeheader()
        for path, result in zip(args.references, results):
            for name, (losses, stamps) in result.items():
                for i, (loss, ms) in enumerate(zip(losses, stamps)):
                    writer.writerow({"iteration": i, "config": name, "image": Path(path).name,
                                     "loss": f"{loss:.17g}", "wall_ms": f"{ms:.3f}"})


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="bs", description="Fast edge-aware bilateral-space solver.")
    sub = parser.add_subparsers(dest="command", required=True)
    bits = {"type": int, "choices": [8, 16], "default": 16, "help": "bit depth for .png outputs"}

    p = sub.add_parser("solve", help="generic solve of a target/confidence pair")
    p.add_argument("--reference", required=True)
    p.add_argument("--target", required=True)
    p.add_argument("--confidence")
    p.add_argument("--output", required=True)
    _add_grid_flags(p, 8, 4, 4)
    _add_solver_flags(p)
    p.add_argument("--lambda", dest="lam", type=float, default=1.0)
    p.add_argument("--dt-post", type=_dt_arg, default=None)
    p.add_argument("--report")
    p.add_argument("--bits", **bits)
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("superres", help="reference-guided depth upsampling")
    p.add_argument("--depth", required=True)
    p.add_argument("--reference", required=True)
    p.add_argument("--factor", type=_positive_int, required=True)
    p.add_argument("--output", required=True)
    _add_grid_flags(p, 8, 4, 3)
    _add_solver_flags(p, iters=15)
    p.add_argument("--lambda", dest="lam", type=float, default=None,
                   help="defaults to 4**(factor - 0.5)")
    p.add_argument("--dt-post", type=_dt_arg, default=apps.SUPERRES_DT)
    p.add_argument("--report")
    p.add_argument("--bits", **bits)
    p.set_defaults(func=cmd_superres)

    p = sub.add_parser("colorize", help="scribble-based colorization")
    p.add_argument("--gray", required=True)
    p.add_argument("--scribbles", required=True)
    p.add_argument("--output", required=True)
    _add_grid_flags(p, 4, 4, 4)
    _add_solver_flags(p)
    p.add_argument("--lambda", dest="lam", type=float, default=0.5)
    p.add_argument("--dt-post", type=_dt_arg, default=None, help="e.g. 4:8; off by default")
    p.add_argument("--report")
    p.add_argument("--bits", **{**bits, "default": 8})
    p.set_defaults(func=cmd_colorize)

    p = sub.add_parser("segsmooth", help="smooth class probabilities and take the argmax")
    p.add_argument("--probs", required=True)
    p.add_argument("--reference", required=True)
    p.add_argument("--labels", required=True)
    p.add_argument("--smoothed")
    p.add_argument("--epsilon", type=float, default=0.01)
    _add_grid_flags(p, 8, 4, 4)
    _add_solver_flags(p)
    p.add_argument("--lambda", dest="lam", type=float, default=1.0)
    p.add_argument("--dt-post", type=_dt_arg, default=None)
    p.add_argument("--report")
    p.add_argument("--bits", **bits)
    p.set_defaults(func=cmd_segsmooth)

    p = sub.add_parser("stereo-post", help="robust refinement of a stereo depth map")
    p.add_argument("--depth", required=True)
    p.add_argument("--reference", required=True)
    p.add_argument("--output", required=True)
    p.add_argument("--zero-left-cols", type=int, default=0)
    _add_grid_flags(p, 4, 4, 4)
    _add_solver_flags(p)
    p.add_argument("--lambda", dest="lam", type=float, default=0.25)
    p.add_argument("--sigma-gm", type=float, default=1.0)
    p.add_argument("--irls", type=_positive_int, default=32)
    p.add_argument("--dt-post", type=_dt_arg, default=apps.STEREO_DT)
    p.add_argument("--report")
    p.add_argument("--bits", **bits)
    p.set_defaults(func=cmd_stereo_post)

    p = sub.add_parser("defocus-prep", help="depth interval to target and confidence")
    p.add_argument("--lower", required=True)
    p.add_argument("--upper", required=True)
    p.add_argument("--target-out", required=True)
    p.add_argument("--confidence-out", required=True)
    p.add_argument("--bits", **bits)
    p.set_defaults(func=cmd_defocus_prep)

    p = sub.add_parser("bench-precond", help="loss-vs-iteration benchmark of solver configurations")
    p.add_argument("references", nargs="+")
    p.add_argument("--output", required=True)
    _add_grid_flags(p, 8, 4, 4)
    p.add_argument("--iters", type=_positive_int, default=25)
    p.add_argument("--lambda", dest="lam", type=float, default=4.0)
    p.set_defaults(func=cmd_bench_precond)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        args.func(args)
    except (BilateralSolverError, OSError) as exc:
        print(f"bs {args.command}: error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
