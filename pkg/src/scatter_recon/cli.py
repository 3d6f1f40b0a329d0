"""Command-line front end: reconstruct, sweep, simulate, analyze.

Exit codes: 0 success, 1 validation problem (bad config, bad file, bad
flags), 2 numerical failure inside the solver.  All products are text files
in the chosen output directory.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import time

import numpy as np

from . import io as sio
from .analysis import (
    cosine_similarity,
    display_transform,
    mtp_extract,
    spatial_distribution,
    spatial_rmse,
    spectral_rmse,
)
from .exceptions import (
    InfeasibleMeanError,
    NonFiniteError,
    UnboundedVoxelError,
    ValidationError,
)
from .grid import MeasurementSet, SolverConfig, validate_problem
from .simulate import default_fixture
from .solver import solve

__all__ = ["main", "cmd_reconstruct", "cmd_sweep", "cmd_simulate", "cmd_analyze"]

THREADS_ENV = "SCATTER_RECON_THREADS"

_NUMERICAL_ERRORS = (InfeasibleMeanError, UnboundedVoxelError, NonFiniteError)


def _resolve_threads(flag_value: int | None) -> int:
    if flag_value is not None:
        return flag_value
    env = os.environ.get(THREADS_ENV)
    if env is not None:
        try:
            return int(env)
        except ValueError:
            raise ValidationError(f"{THREADS_ENV}={env!r} is not an integer") from None
    return 1


def _apply_overrides(spec: sio.RunSpec, args) -> sio.RunSpec:
    cfg = spec.solver
    if args.seed is not None:
        cfg = SolverConfig(
            beta=cfg.beta,
            lam=cfg.lam,
            outer_iters=cfg.outer_iters,
            inner_iters=cfg.inner_iters,
            regularizer=cfg.regularizer,
            tol_rel_primal=cfg.tol_rel_primal,
            tol_rel_obj=cfg.tol_rel_obj,
            seed=args.seed,
            deterministic_reductions=cfg.deterministic_reductions,
        )
    if getattr(args, "deterministic", False):
        cfg.deterministic_reductions = True
    spec.solver = cfg
    if getattr(args, "out_dir", None):
        spec.output_dir = args.out_dir
    return spec


def _load_problem(spec: sio.RunSpec):
    matrix = sio.read_matrix(spec.matrix)
    counts = sio.read_counts(spec.counts)
    background = sio.read_vector(spec.background)
    measurements = MeasurementSet(counts, background)
    weights = None
    if spec.weights is not None:
        flat = sio.read_vector(spec.weights)
        n_dirs = 2
        expected = spec.grid.n_voxels * n_dirs
        if flat.size != expected:
            raise ValidationError(
                f"weights file {spec.weights} has {flat.size} values, expected "
                f"{expected} (S*Q*N with p fastest)"
            )
        weights = flat.reshape(spec.grid.n_spatial, spec.grid.n_spectral, n_dirs)
    diagnostics = validate_problem(matrix, measurements, spec.grid)
    return matrix, measurements, weights, diagnostics


def _run_solve(spec: sio.RunSpec, weights, matrix, measurements):
    start = time.perf_counter()
    result = solve(matrix, measurements, spec.grid, spec.solver, weights=weights)
    wall = time.perf_counter() - start
    return result, wall


def cmd_reconstruct(args) -> int:
    spec = _apply_overrides(sio.load_config(args.config), args)
    threads = _resolve_threads(args.threads)
    matrix, measurements, weights, diagnostics = _load_problem(spec)
    if diagnostics.infeasible_rows:
        raise InfeasibleMeanError(
            f"{len(diagnostics.infeasible_rows)} measurement(s) cannot be explained "
            f"by any image (first index {diagnostics.infeasible_rows[0]})"
        )
    os.makedirs(spec.output_dir, exist_ok=True)
    result, wall = _run_solve(spec, weights, matrix, measurements)
    image_path = os.path.join(spec.output_dir, "image.csv")
    trace_path = os.path.join(spec.output_dir, "trace.csv")
    summary_path = os.path.join(spec.output_dir, "summary.json")
    sio.write_image(result.image, image_path)
    sio.write_trace(result.traces, trace_path)
    last = result.traces[-1]
    summary = {
        "config": spec.raw,
        "threads": threads,
        "deterministic_reductions": spec.solver.deterministic_reductions,
        "converged": result.converged,
        "n_iters": result.n_iters,
        "objective": last.objective,
        "nll": last.nll,
        "penalty": last.penalty,
        "primal_res": last.primal_res,
        "dual_res": last.dual_res,
        "unobservable_voxels": len(diagnostics.unobservable_voxels),
        "wall_time_s": wall,
        "outputs": {"image": image_path, "trace": trace_path},
    }
    with open(summary_path, "w") as fh:
        json.dump(summary, fh, indent=2)
        fh.write("\n")
    print(
        f"reconstruct: {result.n_iters} iterations, objective {last.objective:.6g}, "
        f"{'converged' if result.converged else 'iteration cap reached'}"
    )
    print(f"wrote {image_path}, {trace_path}, {summary_path}")
    return 0


def _parse_betas(text: str | None) -> list[float]:
    if text is None or not text.strip():
        raise ValidationError("sweep requires --betas with at least one value")
    try:
        betas = [float(tok) for tok in text.split(",") if tok.strip()]
    except ValueError as exc:
        raise ValidationError(f"--betas: {exc}") from exc
    if not betas:
        raise ValidationError("sweep requires --betas with at least one value")
    if any(b < 0 for b in betas):
        raise ValidationError("--betas values must be nonnegative")
    return betas


def cmd_sweep(args) -> int:
    spec = _apply_overrides(sio.load_config(args.config), args)
    threads = _resolve_threads(args.threads)
    betas = _parse_betas(args.betas)
    if spec.truth is None:
        raise ValidationError(
            "sweep requires a 'truth' image path in the config (synthetic mode)"
        )
    truth = sio.read_image(spec.truth)
    if truth.grid != spec.grid:
        raise ValidationError("truth image grid does not match the config grid")
    matrix, measurements, weights, diagnostics = _load_problem(spec)
    if diagnostics.infeasible_rows:
        raise InfeasibleMeanError(
            f"{len(diagnostics.infeasible_rows)} measurement(s) cannot be explained "
            f"by any image"
        )
    os.makedirs(spec.output_dir, exist_ok=True)

    rows = []
    best = None
    # A lambda left to default tracks each sweep beta; an explicit one is kept.
    derived_lam = spec.solver.beta if spec.solver.beta > 0 else 1.0
    lam_was_default = spec.solver.lam == derived_lam
    for beta in sorted(betas):
        cfg = SolverConfig(
            beta=beta,
            lam=None if lam_was_default else spec.solver.lam,
            outer_iters=spec.solver.outer_iters,
            inner_iters=spec.solver.inner_iters,
            regularizer=spec.solver.regularizer,
            tol_rel_primal=spec.solver.tol_rel_primal,
            tol_rel_obj=spec.solver.tol_rel_obj,
            seed=spec.solver.seed,
            deterministic_reductions=spec.solver.deterministic_reductions,
        )
        result = solve(matrix, measurements, spec.grid, cfg, weights=weights)
        sp_rmse = spatial_rmse(result.image, truth)
        spec_rmse = spectral_rmse(result.image, truth)
        objective = result.traces[-1].objective
        rows.append((beta, sp_rmse, spec_rmse, objective))
        if best is None or sp_rmse < best[1]:
            best = (beta, sp_rmse, result.image)
        print(
            f"beta={beta:g}: spatial_rmse={sp_rmse:.6g} "
            f"spectral_rmse={spec_rmse:.6g} objective={objective:.6g}"
        )
    sweep_path = os.path.join(spec.output_dir, "sweep.csv")
    sio.write_sweep(rows, best[0], sweep_path)
    _, true_mtp = mtp_extract(truth)
    _, best_mtp = mtp_extract(best[2])
    print(f"best beta by spatial RMSE: {best[0]:g} (threads={threads})")
    print(f"MTP cosine similarity at best beta: {cosine_similarity(best_mtp, true_mtp):.6g}")
    print(f"wrote {sweep_path}")
    return 0


def cmd_simulate(args) -> int:
    out_dir = args.out_dir
    os.makedirs(out_dir, exist_ok=True)
    bundle = default_fixture(args.seed if args.seed is not None else 0)
    paths = {
        "matrix": os.path.join(out_dir, "matrix.txt"),
        "counts": os.path.join(out_dir, "counts.txt"),
        "background": os.path.join(out_dir, "background.txt"),
        "truth": os.path.join(out_dir, "truth.csv"),
    }
    sio.write_matrix(bundle.matrix, paths["matrix"])
    sio.write_vector(bundle.measurements.counts, paths["counts"], integer=True)
    sio.write_vector(bundle.measurements.background, paths["background"])
    sio.write_image(bundle.truth, paths["truth"])
    config_path = os.path.join(out_dir, "config.json")
    sio.write_config(
        bundle.grid,
        SolverConfig(seed=bundle.seed),
        {
            "matrix": "matrix.txt",
            "counts": "counts.txt",
            "background": "background.txt",
            "truth": "truth.csv",
            "output_dir": ".",
        },
        config_path,
    )
    manifest = {
        "seed": bundle.seed,
        "grid": {
            "nz": bundle.grid.nz,
            "ny": bundle.grid.ny,
            "Q": bundle.grid.n_spectral,
            "dz": bundle.grid.dz,
            "dy": bundle.grid.dy,
            "q_min": bundle.grid.q_min,
            "q_max": bundle.grid.q_max,
        },
        "n_measurements": bundle.measurements.n_measurements,
        "mean_counts": float(np.mean(bundle.measurements.counts)),
        "true_image": paths["truth"],
        "paths": {**paths, "config": config_path},
    }
    manifest_path = os.path.join(out_dir, "manifest.json")
    with open(manifest_path, "w") as fh:
        json.dump(manifest, fh, indent=2)
        fh.write("\n")
    print(
        f"simulate: wrote fixture (seed {bundle.seed}, mean counts "
        f"{manifest['mean_counts']:.2f}) to {out_dir}"
    )
    return 0


def cmd_analyze(args) -> int:
    image = sio.read_image(args.image)
    out_dir = args.out_dir or os.path.dirname(os.path.abspath(args.image))
    os.makedirs(out_dir, exist_ok=True)
    dist = spatial_distribution(image)
    display = display_transform(dist)
    s_star, mtp = mtp_extract(image)
    q_centers = image.grid.q_centers()

    dist_path = os.path.join(out_dir, "spatial_distribution.csv")
    with open(dist_path, "w") as fh:
        fh.write("s,spatial_sum,display\n")
        for s in range(dist.size):
            fh.write(f"{s},{sio.FLOAT_FMT % dist[s]},{sio.FLOAT_FMT % display[s]}\n")
    mtp_path = os.path.join(out_dir, "mtp.csv")
    with open(mtp_path, "w") as fh:
        fh.write("q_center,value\n")
        for q, v in zip(q_centers, mtp):
            fh.write(f"{sio.FLOAT_FMT % q},{sio.FLOAT_FMT % v}\n")
    print(f"analyze: peak spatial bin {s_star}")
    if args.truth:
        truth = sio.read_image(args.truth)
        _, true_mtp = mtp_extract(truth)
        print(f"spatial RMSE vs truth: {spatial_rmse(image, truth):.6g}")
        print(f"spectral RMSE vs truth: {spectral_rmse(image, truth):.6g}")
        print(f"MTP cosine similarity: {cosine_similarity(mtp, true_mtp):.6g}")
    print(f"wrote {dist_path}, {mtp_path}")
    return 0


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="scatter-recon",
        description="Hyperspectral coherent-scatter reconstruction toolkit",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    rec = sub.add_parser("reconstruct", help="run one reconstruction from a config")
    rec.add_argument("--config", required=True, help="run configuration JSON")
    rec.add_argument("--seed", type=int, default=None, help="override config seed")
    rec.add_argument("--threads", type=int, default=None, help="worker threads")
    rec.add_argument("--deterministic", action="store_true", help="force deterministic reductions")
    rec.add_argument("--out-dir", default=None, help="override config output_dir")
    rec.set_defaults(func=cmd_reconstruct)

    swp = sub.add_parser("sweep", help="sweep beta and pick by spatial RMSE vs truth")
    swp.add_argument("--config", required=True, help="run configuration JSON")
    swp.add_argument("--betas", default=None, help="comma-separated beta values")
    swp.add_argument("--seed", type=int, default=None, help="override config seed")
    swp.add_argument("--threads", type=int, default=None, help="worker threads")
    swp.add_argument("--deterministic", action="store_true", help="force deterministic reductions")
    swp.add_argument("--out-dir", default=None, help="override config output_dir")
    swp.set_defaults(func=cmd_sweep)

    sim = sub.add_parser("simulate", help="generate the synthetic fixture")
    sim.add_argument("--out-dir", required=True, help="directory for fixture files")
    sim.add_argument("--seed", type=int, default=0, help="fixture seed")
    sim.set_defaults(func=cmd_simulate)

    ana = sub.add_parser("analyze", help="summarize a saved image file")
    ana.add_argument("--image", required=True, help="image CSV to analyze")
    ana.add_argument("--truth", default=None, help="optional ground-truth image CSV")
    ana.add_argument("--out-dir", default=None, help="directory for analysis CSVs")
    ana.set_defaults(func=cmd_analyze)
    return parser


def main(argv=None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except _NUMERICAL_ERRORS as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
