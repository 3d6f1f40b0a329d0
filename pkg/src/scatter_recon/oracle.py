"""Slow, independent reference routines for tests and acceptance checks.

Everything here trades speed for transparency: dense matrices assembled from
index arithmetic, smoothed-norm gradient descent instead of closed forms, and
plain finite differences.  These routines exist to certify the fast paths, so
they deliberately avoid calling them; only the shared likelihood evaluation
and the sparse matrix product are reused.  All routines are deterministic
(no RNG) and are restricted to desk-scale instances.
"""

from __future__ import annotations

import numpy as np

from .diffops import DEFAULT_STENCIL, NeighborStencil, broadcast_weights, default_weights
from .exceptions import InfeasibleMeanError, OracleFailure, ValidationError
from .grid import ImageGrid, MeasurementSet, SparseSystemMatrix
from .likelihood import neg_log_likelihood, nll_gradient

__all__ = [
    "fd_gradient",
    "dense_diff_matrix",
    "smoothed_penalty",
    "prox_numeric",
    "reference_solve",
]

_ARMIJO = 1e-4
_SHRINK = 0.5
_GROW = 2.0


def fd_gradient(fun, x: np.ndarray, h: float = 1e-6) -> np.ndarray:
    """Central-difference gradient of a scalar function of a flat vector."""
    x = np.asarray(x, dtype=np.float64).ravel()
    out = np.empty_like(x)
    for j in range(x.size):
        step = np.zeros_like(x)
        step[j] = h
        out[j] = (fun(x + step) - fun(x - step)) / (2.0 * h)
    return out


def dense_diff_matrix(grid: ImageGrid, stencil: NeighborStencil = DEFAULT_STENCIL) -> np.ndarray:
    """Unweighted difference operator as an explicit dense matrix.

    Rows are ordered (s, q, p) with p fastest, matching the raveled edge
    field.  Assembled entry by entry from neighbor index arithmetic, so it is
    an independent witness for the sliced implementation.
    """
    n = len(stencil)
    big_g = np.zeros((grid.n_voxels * n, grid.n_voxels))
    for s in range(grid.n_spatial):
        z, y = divmod(s, grid.ny)
        for q in range(grid.n_spectral):
            j = s * grid.n_spectral + q
            for p, (oz, oy) in enumerate(stencil):
                row = j * n + p
                big_g[row, j] -= 1.0
                z2, y2 = z + oz, y + oy
                if 0 <= z2 < grid.nz and 0 <= y2 < grid.ny:
                    j2 = (z2 * grid.ny + y2) * grid.n_spectral + q
                    big_g[row, j2] += 1.0
    return big_g


def smoothed_penalty(
    edge_values: np.ndarray,
    eps: float,
    kind: str,
) -> tuple[float, np.ndarray]:
    """Smoothed block-norm sum and its gradient in the edge values.

    ``edge_values`` has shape ``(S, Q, N)``; each block norm ``n`` is replaced
    by ``sqrt(n**2 + eps**2)``, which upper-bounds the true norm by at most
    ``eps`` per block and is differentiable everywhere.
    """
    edge_values = np.asarray(edge_values, dtype=np.float64)
    if kind == "group_tv":
        sq = np.sum(edge_values**2, axis=(1, 2))
        smooth = np.sqrt(sq + eps**2)
        grad = edge_values / smooth[:, None, None]
    elif kind == "standard_tv":
        sq = np.sum(edge_values**2, axis=2)
        smooth = np.sqrt(sq + eps**2)
        grad = edge_values / smooth[:, :, None]
    else:
        raise ValidationError(f"unknown regularizer {kind!r}")
    return float(smooth.sum()), grad


def prox_numeric(
    v_block: np.ndarray,
    tau: float,
    lam: float = 1.0,
    max_stage_iters: int = 1000,
) -> np.ndarray:
    """Numerical proximal map of the Euclidean norm on one block.

    Minimizes ``tau * ||d|| + (lam/2) * ||d - v||**2`` by gradient descent on
    the eps-smoothed norm, tightening eps from 1e-2 down to 1e-10 and
    stopping each stage once the step change drops to 1e-12.  The line search
    is exact (bisection on the directional derivative), which copes with the
    ``tau/eps`` curvature near the shrink threshold where a fixed or
    backtracked step would crawl.  With ``lam = 1`` this is the proximal
    operator that block shrinkage computes in closed form.

    Raises:
        OracleFailure: a smoothing stage exhausted its iteration cap.
    """
    v = np.asarray(v_block, dtype=np.float64).ravel()
    if v.size > 64:
        raise ValidationError(f"oracle prox is limited to blocks of <= 64, got {v.size}")
    if tau < 0 or lam <= 0:
        raise ValidationError("prox_numeric requires tau >= 0 and lam > 0")
    if tau == 0:
        return v.copy()

    def grad(d: np.ndarray, eps: float) -> np.ndarray:
        return tau * d / np.sqrt(d @ d + eps**2) + lam * (d - v)

    d = v.copy()
    for eps in [10.0**-k for k in range(2, 11)]:
        for _ in range(max_stage_iters):
            g = grad(d, eps)
            if float(g @ g) == 0.0:
                break

            # Along d - t*g the slope starts negative; bracket then bisect
            # its sign change for the exact minimizing step.
            def slope(t: float) -> float:
                return -float(grad(d - t * g, eps) @ g)

            t_hi = 1.0 / (lam + tau / eps)
            for _ in range(300):
                if slope(t_hi) >= 0:
                    break
                t_hi *= 2.0
            else:
                raise OracleFailure("prox oracle line search failed to bracket")
            t_lo = 0.0
            for _ in range(120):
                mid = 0.5 * (t_lo + t_hi)
                if slope(mid) < 0:
                    t_lo = mid
                else:
                    t_hi = mid
            trial = d - 0.5 * (t_lo + t_hi) * g
            moved = float(np.linalg.norm(trial - d))
            d = trial
            if moved <= 1e-12:
                break
        else:
            raise OracleFailure(
                f"prox oracle did not converge at eps={eps} within {max_stage_iters} iterations"
            )
    return d


def _penalized_objective(
    matrix: SparseSystemMatrix,
    counts: np.ndarray,
    background: np.ndarray,
    big_g: np.ndarray,
    weights: np.ndarray,
    beta: float,
    kind: str,
    f_flat: np.ndarray,
    eps: float,
) -> float:
    try:
        nll = neg_log_likelihood(counts, matrix.matvec(f_flat) + background)
    except InfeasibleMeanError:
        return np.inf
    if beta == 0:
        return nll
    edges = (big_g @ f_flat).reshape(weights.shape) * weights
    if eps == 0:
        if kind == "group_tv":
            pen = float(np.sqrt(np.sum(edges**2, axis=(1, 2))).sum())
        else:
            pen = float(np.sqrt(np.sum(edges**2, axis=2)).sum())
    else:
        pen, _ = smoothed_penalty(edges, eps, kind)
    return nll + beta * pen


def reference_solve(
    matrix: SparseSystemMatrix,
    counts: np.ndarray,
    background: np.ndarray,
    beta: float,
    grid: ImageGrid,
    weights: np.ndarray | None = None,
    regularizer: str = "group_tv",
    stencil: NeighborStencil = DEFAULT_STENCIL,
    max_stage_iters: int = 30000,
) -> tuple[np.ndarray, float]:
    """Independent small-instance minimizer of the penalized likelihood.

    Runs projected gradient descent with backtracking on the eps-smoothed
    penalty, tightening eps from 1e-2 to 1e-8 (each stage stops when the
    relative objective change falls below 1e-10), then polishes against the
    unsmoothed objective and returns the best image seen with its exact
    penalized objective value.

    Only suitable for desk-scale problems (J <= 200, I <= 400).

    Raises:
        OracleFailure: a continuation stage exhausted its iteration cap.
    """
    if grid.n_voxels > 200 or matrix.n_rows > 400:
        raise ValidationError(
            f"reference solver is limited to J <= 200 and I <= 400, got "
            f"J={grid.n_voxels} I={matrix.n_rows}"
        )
    counts = np.asarray(counts, dtype=np.float64).ravel()
    background = np.asarray(background, dtype=np.float64).ravel()
    if weights is None:
        weights = default_weights(grid, stencil)
    weights = broadcast_weights(weights, grid, stencil)
    big_g = dense_diff_matrix(grid, stencil)
    meas = MeasurementSet(counts.astype(np.int64), background)

    def smooth_grad(f_flat: np.ndarray, eps: float) -> np.ndarray:
        grad = nll_gradient(matrix, meas.counts, matrix.matvec(f_flat) + background)
        if beta > 0:
            edges = (big_g @ f_flat).reshape(weights.shape) * weights
            _, pen_grad = smoothed_penalty(edges, eps, regularizer)
            grad = grad + beta * (big_g.T @ (pen_grad * weights).ravel())
        return grad

    def objective(f_flat: np.ndarray, eps: float) -> float:
        return _penalized_objective(
            matrix, counts, background, big_g, weights, beta, regularizer, f_flat, eps
        )

    total = float(matrix.col_sums.sum())
    level = float(np.maximum(counts - background, 0.0).sum() / total) if total > 0 else 0.0
    f = np.full(grid.n_voxels, max(level, 1e-6))

    def stage(f: np.ndarray, eps: float, stop_tol: float, step: float) -> tuple[np.ndarray, float]:
        # Monotone accelerated projected gradient with backtracking and
        # restart; plain projected gradient crawls once the smoothed penalty
        # curvature reaches beta/eps.
        x_prev = f.copy()
        x = f.copy()
        z_prev = f.copy()
        y = f.copy()
        t = 1.0
        fx = objective(x, eps)
        consec = 0
        for _ in range(max_stage_iters):
            y = np.maximum(y, 0.0)
            fy = objective(y, eps)
            if not np.isfinite(fy):
                y, t = x.copy(), 1.0
                fy = fx
            gy = smooth_grad(y, eps)
            step = min(step * 1.5, 1e15)
            while True:
                z = np.maximum(y - step * gy, 0.0)
                fz = objective(z, eps)
                dzy = z - y
                bound = fy + float(gy @ dzy) + float(dzy @ dzy) / (2.0 * step)
                if fz <= bound + 1e-12 * abs(fy):
                    break
                step *= _SHRINK
                if step < 1e-20:
                    z, fz = x.copy(), fx
                    break
            # Restart test against the point the step was taken from.
            restart = float((y - z) @ (z - z_prev)) > 0
            t_next = 0.5 * (1.0 + np.sqrt(1.0 + 4.0 * t * t))
            if fz <= fx:
                x_new, fx_new = z, fz
            else:
                x_new, fx_new = x, fx
            if restart:
                t_next = 1.0
                y = x_new.copy()
            else:
                y = x_new + (t / t_next) * (z - x_new) + ((t - 1.0) / t_next) * (x_new - x_prev)
            change = abs(fx - fx_new) / max(abs(fx), 1e-12)
            x_prev, x, fx = x, x_new, fx_new
            z_prev = z
            t = t_next
            consec = consec + 1 if change <= stop_tol else 0
            if consec >= 3 or step < 1e-19:
                return x, step
        raise OracleFailure(
            f"reference solver stalled at eps={eps} after {max_stage_iters} iterations"
        )

    step = 1.0
    for eps in [10.0**-k for k in range(2, 9)]:
        f, step = stage(f, eps, 1e-10, step)

    # Polish against the unsmoothed objective, keeping the best point seen.
    best_f = f.copy()
    best_val = objective(f, 0.0)
    step = 1.0
    for _ in range(500):
        grad = smooth_grad(f, 1e-10)
        cur = objective(f, 0.0)
        step = min(step * _GROW, 1e12)
        improved = False
        while step >= 1e-20:
            trial = np.maximum(f - step * grad, 0.0)
            val = objective(trial, 0.0)
            if val < cur:
                f = trial
                improved = True
                if val < best_val:
                    best_val, best_f = val, trial.copy()
                break
            step *= _SHRINK
        if not improved:
            break
    return best_f.reshape(grid.n_spatial, grid.n_spectral), float(best_val)
