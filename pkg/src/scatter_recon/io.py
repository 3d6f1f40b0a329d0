"""Text file formats: matrices, vectors, images, traces, sweeps, configs.

Everything is plain text at full float precision (17 significant digits), so
files round-trip bit-exactly and stay diffable and portable across
implementations.  Read errors always name the offending file.
"""

from __future__ import annotations

import json
import os
import re
from dataclasses import dataclass, field

import numpy as np

from .exceptions import ValidationError
from .grid import ImageGrid, SolverConfig, SparseSystemMatrix, build_grid
from .solver import TraceRecord

__all__ = [
    "FLOAT_FMT",
    "RunSpec",
    "write_matrix",
    "read_matrix",
    "write_vector",
    "read_vector",
    "read_counts",
    "write_image",
    "read_image",
    "write_trace",
    "read_trace",
    "write_sweep",
    "read_sweep",
    "load_config",
    "write_config",
]

# 17 significant digits round-trip any IEEE double exactly.
FLOAT_FMT = "%.17g"

_GRID_KEYS = ("nz", "ny", "Q", "dz", "dy", "q_min", "q_max")
_SOLVER_KEYS = (
    "beta",
    "lambda",
    "outer_iters",
    "inner_iters",
    "regularizer",
    "tol_rel_primal",
    "tol_rel_obj",
    "seed",
    "deterministic_reductions",
)
_PATH_KEYS = ("matrix", "counts", "background", "weights", "truth", "output_dir")


def _fmt(x: float) -> str:
    return FLOAT_FMT % float(x)


def write_matrix(matrix: SparseSystemMatrix, path: str) -> None:
    """Triplet text format with a `# rows= cols= nnz=` header line."""
    with open(path, "w") as fh:
        fh.write(f"# rows={matrix.n_rows} cols={matrix.n_cols} nnz={matrix.nnz}\n")
        for r, c, v in zip(matrix.rows, matrix.cols, matrix.vals):
            fh.write(f"{r} {c} {_fmt(v)}\n")


def read_matrix(path: str) -> SparseSystemMatrix:
    try:
        with open(path) as fh:
            lines = fh.read().splitlines()
    except OSError as exc:
        raise ValidationError(f"cannot read matrix file {path}: {exc}") from exc
    if not lines:
        raise ValidationError(f"matrix file {path} is empty")
    header = re.fullmatch(r"#\s*rows=(\d+)\s+cols=(\d+)\s+nnz=(\d+)", lines[0].strip())
    if header is None:
        raise ValidationError(
            f"matrix file {path} must start with '# rows=I cols=J nnz=K', got "
            f"{lines[0]!r}"
        )
    n_rows, n_cols, nnz = (int(g) for g in header.groups())
    rows = np.empty(nnz, dtype=np.int64)
    cols = np.empty(nnz, dtype=np.int64)
    vals = np.empty(nnz, dtype=np.float64)
    body = [ln for ln in lines[1:] if ln.strip()]
    if len(body) != nnz:
        raise ValidationError(
            f"matrix file {path} declares nnz={nnz} but has {len(body)} triplet lines"
        )
    for k, line in enumerate(body):
        parts = line.split()
        if len(parts) != 3:
            raise ValidationError(
                f"matrix file {path} line {k + 2}: expected 'row col value', got {line!r}"
            )
        try:
            rows[k] = int(parts[0])
            cols[k] = int(parts[1])
            vals[k] = float(parts[2])
        except ValueError as exc:
            raise ValidationError(f"matrix file {path} line {k + 2}: {exc}") from exc
    return SparseSystemMatrix(n_rows, n_cols, rows, cols, vals)


def write_vector(values: np.ndarray, path: str, integer: bool = False) -> None:
    """One value per line."""
    values = np.asarray(values).ravel()
    with open(path, "w") as fh:
        for v in values:
            fh.write((str(int(v)) if integer else _fmt(v)) + "\n")


def read_vector(path: str) -> np.ndarray:
    try:
        with open(path) as fh:
            lines = [ln.strip() for ln in fh if ln.strip()]
    except OSError as exc:
        raise ValidationError(f"cannot read vector file {path}: {exc}") from exc
    try:
        return np.array([float(ln) for ln in lines], dtype=np.float64)
    except ValueError as exc:
        raise ValidationError(f"vector file {path}: {exc}") from exc


def read_counts(path: str) -> np.ndarray:
    """Vector file that must hold nonnegative integers."""
    try:
        with open(path) as fh:
            lines = [ln.strip() for ln in fh if ln.strip()]
    except OSError as exc:
        raise ValidationError(f"cannot read counts file {path}: {exc}") from exc
    out = np.empty(len(lines), dtype=np.int64)
    for k, ln in enumerate(lines):
        try:
            out[k] = int(ln)
        except ValueError as exc:
            raise ValidationError(
                f"counts file {path} line {k + 1}: {ln!r} is not an integer"
            ) from exc
        if out[k] < 0:
            raise ValidationError(f"counts file {path} line {k + 1}: negative count")
    return out


def _grid_header(grid: ImageGrid) -> str:
    return (
        f"# nz={grid.nz} ny={grid.ny} Q={grid.n_spectral} "
        f"dz={_fmt(grid.dz)} dy={_fmt(grid.dy)} "
        f"q_min={_fmt(grid.q_min)} q_max={_fmt(grid.q_max)}"
    )


def write_image(image, path: str) -> None:
    """CSV with one row per spatial bin and a grid-metadata comment header."""
    grid = image.grid
    with open(path, "w") as fh:
        fh.write(_grid_header(grid) + "\n")
        for s in range(grid.n_spatial):
            fh.write(",".join(_fmt(v) for v in image.values[s]) + "\n")


def read_image(path: str):
    from .grid import HyperImage

    try:
        with open(path) as fh:
            lines = fh.read().splitlines()
    except OSError as exc:
        raise ValidationError(f"cannot read image file {path}: {exc}") from exc
    if not lines or not lines[0].startswith("#"):
        raise ValidationError(f"image file {path} is missing its grid header")
    meta: dict[str, str] = {}
    for token in lines[0].lstrip("#").split():
        if "=" not in token:
            raise ValidationError(f"image file {path}: bad header token {token!r}")
        key, _, val = token.partition("=")
        meta[key] = val
    missing = [k for k in _GRID_KEYS if k not in meta]
    if missing:
        raise ValidationError(f"image file {path}: header missing {missing}")
    grid = build_grid(
        int(meta["nz"]),
        int(meta["ny"]),
        int(meta["Q"]),
        float(meta["dz"]),
        float(meta["dy"]),
        float(meta["q_min"]),
        float(meta["q_max"]),
    )
    body = [ln for ln in lines[1:] if ln.strip()]
    if len(body) != grid.n_spatial:
        raise ValidationError(
            f"image file {path} has {len(body)} data rows, grid expects "
            f"{grid.n_spatial}"
        )
    values = np.empty((grid.n_spatial, grid.n_spectral))
    for s, line in enumerate(body):
        parts = line.split(",")
        if len(parts) != grid.n_spectral:
            raise ValidationError(
                f"image file {path} row {s}: expected {grid.n_spectral} columns, "
                f"got {len(parts)}"
            )
        values[s] = [float(p) for p in parts]
    return HyperImage(grid, values)


TRACE_HEADER = "iter,objective,nll,penalty,primal_res,dual_res"


def write_trace(traces, path: str) -> None:
    with open(path, "w") as fh:
        fh.write(TRACE_HEADER + "\n")
        for t in traces:
            fh.write(
                f"{t.iteration},{_fmt(t.objective)},{_fmt(t.nll)},{_fmt(t.penalty)},"
                f"{_fmt(t.primal_res)},{_fmt(t.dual_res)}\n"
            )


def read_trace(path: str) -> list[TraceRecord]:
    try:
        with open(path) as fh:
            lines = [ln.strip() for ln in fh if ln.strip()]
    except OSError as exc:
        raise ValidationError(f"cannot read trace file {path}: {exc}") from exc
    if not lines or lines[0] != TRACE_HEADER:
        raise ValidationError(f"trace file {path} has a bad header")
    out = []
    for ln in lines[1:]:
        parts = ln.split(",")
        if len(parts) != 6:
            raise ValidationError(f"trace file {path}: bad row {ln!r}")
        out.append(
            TraceRecord(
                iteration=int(parts[0]),
                objective=float(parts[1]),
                nll=float(parts[2]),
                penalty=float(parts[3]),
                primal_res=float(parts[4]),
                dual_res=float(parts[5]),
            )
        )
    return out


SWEEP_HEADER = "beta,spatial_rmse,spectral_rmse,objective"


def write_sweep(rows, best_beta: float, path: str) -> None:
    """Sweep summary sorted by beta; the chosen beta rides in a comment line.

    ``rows`` is a sequence of (beta, spatial_rmse, spectral_rmse, objective).
    """
    rows = sorted(rows, key=lambda r: r[0])
    with open(path, "w") as fh:
        fh.write(f"# best_beta={_fmt(best_beta)}\n")
        fh.write(SWEEP_HEADER + "\n")
        for beta, sp, spec, obj in rows:
            fh.write(f"{_fmt(beta)},{_fmt(sp)},{_fmt(spec)},{_fmt(obj)}\n")


def read_sweep(path: str) -> tuple[list[tuple[float, float, float, float]], float]:
    try:
        with open(path) as fh:
            lines = [ln.strip() for ln in fh if ln.strip()]
    except OSError as exc:
        raise ValidationError(f"cannot read sweep file {path}: {exc}") from exc
    if len(lines) < 2 or not lines[0].startswith("# best_beta="):
        raise ValidationError(f"sweep file {path} is missing its best-beta marker")
    best_beta = float(lines[0].partition("=")[2])
    if lines[1] != SWEEP_HEADER:
        raise ValidationError(f"sweep file {path} has a bad header")
    rows = []
    for ln in lines[2:]:
        parts = ln.split(",")
        if len(parts) != 4:
            raise ValidationError(f"sweep file {path}: bad row {ln!r}")
        rows.append(tuple(float(p) for p in parts))
    return rows, best_beta


@dataclass
class RunSpec:
    """A fully resolved run configuration: grid, file paths, solver settings."""

    grid: ImageGrid
    matrix: str
    counts: str
    background: str
    solver: SolverConfig
    weights: str | None = None
    truth: str | None = None
    output_dir: str | None = None
    raw: dict = field(default_factory=dict)


def _solver_from_dict(entries: dict) -> SolverConfig:
    kwargs = {}
    for key, value in entries.items():
        kwargs["lam" if key == "lambda" else key] = value
    return SolverConfig(**kwargs)


def load_config(path: str) -> RunSpec:
    """Parse and validate a run-configuration JSON file.

    Top-level keys: ``grid`` (object with nz, ny, Q, dz, dy, q_min, q_max),
    the file paths ``matrix``, ``counts``, ``background`` (required) and
    ``weights``, ``truth``, ``output_dir`` (optional), plus any solver
    settings (``beta``, ``lambda``, ``outer_iters``, ``inner_iters``,
    ``regularizer``, ``tol_rel_primal``, ``tol_rel_obj``, ``seed``,
    ``deterministic_reductions``).  Unknown keys are rejected.  Relative
    paths resolve against the config file's directory.
    """
    try:
        with open(path) as fh:
            doc = json.load(fh)
    except OSError as exc:
        raise ValidationError(f"cannot read config file {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ValidationError(f"config file {path} is not valid JSON: {exc}") from exc
    if not isinstance(doc, dict):
        raise ValidationError(f"config file {path} must hold a JSON object")

    allowed = set(_SOLVER_KEYS) | set(_PATH_KEYS) | {"grid"}
    unknown = sorted(set(doc) - allowed)
    if unknown:
        raise ValidationError(f"config file {path}: unknown key {unknown[0]!r}")
    for key in ("grid", "matrix", "counts", "background"):
        if key not in doc:
            raise ValidationError(f"config file {path}: missing required key {key!r}")

    grid_doc = doc["grid"]
    if not isinstance(grid_doc, dict):
        raise ValidationError(f"config file {path}: 'grid' must be an object")
    unknown = sorted(set(grid_doc) - set(_GRID_KEYS))
    if unknown:
        raise ValidationError(f"config file {path}: unknown grid key {unknown[0]!r}")
    missing = [k for k in _GRID_KEYS if k not in grid_doc]
    if missing:
        raise ValidationError(f"config file {path}: grid is missing {missing[0]!r}")
    grid = build_grid(
        grid_doc["nz"],
        grid_doc["ny"],
        grid_doc["Q"],
        grid_doc["dz"],
        grid_doc["dy"],
        grid_doc["q_min"],
        grid_doc["q_max"],
    )
    solver = _solver_from_dict({k: doc[k] for k in _SOLVER_KEYS if k in doc})

    base = os.path.dirname(os.path.abspath(path))

    def resolve(p: str | None) -> str | None:
        if p is None:
            return None
        return os.path.normpath(p if os.path.isabs(p) else os.path.join(base, p))

    return RunSpec(
        grid=grid,
        matrix=resolve(doc["matrix"]),
        counts=resolve(doc["counts"]),
        background=resolve(doc["background"]),
        weights=resolve(doc.get("weights")),
        truth=resolve(doc.get("truth")),
        output_dir=resolve(doc.get("output_dir")) or base,
        solver=solver,
        raw=doc,
    )


def write_config(
    grid: ImageGrid,
    solver: SolverConfig,
    paths: dict,
    out_path: str,
) -> None:
    """Emit a config JSON that :func:`load_config` accepts unchanged."""
    doc = {
        "grid": {
            "nz": grid.nz,
            "ny": grid.ny,
            "Q": grid.n_spectral,
            "dz": grid.dz,
            "dy": grid.dy,
            "q_min": grid.q_min,
            "q_max": grid.q_max,
        },
        "beta": solver.beta,
        "lambda": solver.lam,
        "outer_iters": solver.outer_iters,
        "inner_iters": solver.inner_iters,
        "regularizer": solver.regularizer,
        "tol_rel_primal": solver.tol_rel_primal,
        "tol_rel_obj": solver.tol_rel_obj,
        "seed": solver.seed,
        "deterministic_reductions": solver.deterministic_reductions,
    }
    for key, value in paths.items():
        if key not in _PATH_KEYS:
            raise ValidationError(f"unknown path key {key!r}")
        if value is not None:
            doc[key] = value
    with open(out_path, "w") as fh:
        json.dump(doc, fh, indent=2)
        fh.write("\n")
