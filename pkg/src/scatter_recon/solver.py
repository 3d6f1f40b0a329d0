"""Penalized-likelihood solver: outer variable splitting, inner surrogate steps.

One outer iteration alternates three updates.  The image update minimizes the
Poisson negative log-likelihood plus a quadratic coupling to the split edge
variable; it is handled by an inner majorize-minimize loop whose combined
surrogate (separable EM surrogate for the likelihood, separable quadratic for
the coupling) decouples across hyper-voxels and admits a closed-form
nonnegative root.  The edge variable then absorbs the total-variation penalty
through block shrinkage, and scaled dual variables accumulate the remaining
constraint violation.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .diffops import (
    DEFAULT_STENCIL,
    NeighborStencil,
    adjoint_diff,
    default_weights,
    forward_diff,
    incident_weight_sq,
)
from .exceptions import NonFiniteError, UnboundedVoxelError, ValidationError
from .grid import HyperImage, ImageGrid, MeasurementSet, SolverConfig, SparseSystemMatrix, validate_problem
from .likelihood import em_coeffs, forward_project, neg_log_likelihood
from .regularizers import block_shrink, group_norms, standard_norms

__all__ = [
    "QuadSurrogate",
    "TraceRecord",
    "SolverState",
    "ReconResult",
    "quad_surrogate",
    "voxel_update",
    "image_update",
    "admm_step",
    "solve",
]

# Denominator floor for relative residuals and objective changes.
_REL_EPS = 1e-12


@dataclass(frozen=True)
class QuadSurrogate:
    """Separable quadratic majorizer of the edge-coupling term.

    ``g`` is the exact gradient of the coupling term at the expansion point
    and ``alpha`` a per-voxel curvature bound, both shape ``(S, Q)``.  The
    surrogate ``g*(f - f_n) + (alpha/2)*(f - f_n)**2`` summed over voxels lies
    above the coupling term (constants aligned at ``f_n``) because each
    squared difference splits into two one-voxel quadratics by convexity.
    """

    g: np.ndarray
    alpha: np.ndarray


@dataclass(frozen=True)
class TraceRecord:
    """Per-outer-iteration diagnostics."""

    iteration: int
    objective: float
    nll: float
    penalty: float
    primal_res: float
    dual_res: float


@dataclass
class SolverState:
    """Mutable state of the outer loop: image, edge split, scaled duals."""

    f: np.ndarray
    d: np.ndarray
    c: np.ndarray
    k: int = 0
    traces: list[TraceRecord] = field(default_factory=list)


@dataclass
class ReconResult:
    """Outcome of :func:`solve`."""

    image: HyperImage
    traces: list[TraceRecord]
    converged: bool
    state: SolverState

    @property
    def n_iters(self) -> int:
        return len(self.traces)


def quad_surrogate(
    f_n: np.ndarray,
    d: np.ndarray,
    c: np.ndarray,
    grid: ImageGrid,
    lam: float,
    stencil: NeighborStencil = DEFAULT_STENCIL,
    weights: np.ndarray | None = None,
) -> QuadSurrogate:
    """Gradient and curvature of the coupling term at ``f_n``.

    The coupling term is ``(lam/2) * ||d - w*(G f) - c||**2``; its gradient in
    ``f`` is ``lam * G'(w * (w*(G f_n) + c - d))``.  The curvature bound per
    voxel is ``2 * lam`` times the sum of squared weights over edges incident
    to its spatial bin, which dominates the row sums of ``lam * G' W^2 G``.
    """
    if not lam > 0:
        raise ValidationError(f"coupling weight lambda must be > 0, got {lam}")
    if weights is None:
        weights = default_weights(grid, stencil)
    v = forward_diff(f_n, grid, stencil) * weights
    g = lam * adjoint_diff((v + c - d) * weights, grid, stencil)
    alpha = 2.0 * lam * incident_weight_sq(grid, stencil, weights)
    return QuadSurrogate(g=g, alpha=alpha)


def voxel_update(e, sigma, alpha, g, f_n):
    """Closed-form minimizer of one voxel's combined surrogate over ``f >= 0``.

    Minimizes ``sigma*f - e*ln(f) + g*(f - f_n) + (alpha/2)*(f - f_n)**2``.
    All arguments broadcast; the result has the broadcast shape.

    With ``b = sigma + g - alpha*f_n`` the positive-curvature solution is the
    nonnegative root of ``alpha*f**2 + b*f - e``; the root is evaluated in a
    cancellation-free form when ``b > 0``.  Zero curvature falls back to the
    plain EM update ``e/sigma``.

    Raises:
        UnboundedVoxelError: ``alpha == 0`` and ``sigma == 0`` while ``e > 0``
            (nothing bounds the voxel from above but the data pulls it up).
    """
    e, sigma, alpha, g, f_n = np.broadcast_arrays(
        *(np.asarray(a, dtype=np.float64) for a in (e, sigma, alpha, g, f_n))
    )
    if np.any(e < 0) or np.any(sigma < 0) or np.any(alpha < 0) or np.any(f_n < 0):
        raise ValidationError("voxel_update requires e, sigma, alpha, f_n >= 0")
    b = sigma + g - alpha * f_n
    out = np.zeros(b.shape)

    pos = alpha > 0
    if np.any(pos):
        bp = b[pos]
        disc = np.sqrt(bp * bp + 4.0 * alpha[pos] * e[pos])
        root = np.empty_like(bp)
        hi = bp > 0
        # 2e / (b + disc) avoids subtracting nearly equal magnitudes.
        root[hi] = 2.0 * e[pos][hi] / (bp[hi] + disc[hi])
        root[~hi] = (disc[~hi] - bp[~hi]) / (2.0 * alpha[pos][~hi])
        out[pos] = root

    flat = ~pos
    if np.any(flat):
        bad = flat & (sigma == 0) & (e > 0)
        if np.any(bad):
            raise UnboundedVoxelError(
                f"{int(bad.sum())} unobservable voxel(s) with positive data pull"
            )
        em = flat & (sigma > 0)
        out[em] = e[em] / sigma[em]
        # No curvature, no observation, no pull: nothing moves the voxel.
        out[flat & (sigma == 0)] = f_n[flat & (sigma == 0)]
    return out if out.ndim else float(out)


def image_update(
    f: np.ndarray,
    d: np.ndarray,
    c: np.ndarray,
    matrix: SparseSystemMatrix,
    measurements: MeasurementSet,
    grid: ImageGrid,
    config: SolverConfig,
    stencil: NeighborStencil = DEFAULT_STENCIL,
    weights: np.ndarray | None = None,
    callback=None,
) -> np.ndarray:
    """Inner majorize-minimize loop for the image sub-problem.

    Runs ``config.inner_iters`` passes; each pass rebuilds both surrogates at
    the current iterate and applies :func:`voxel_update` to every voxel.  The
    sub-objective (likelihood plus coupling) is non-increasing across passes.
    ``callback(f)`` fires on entry and after each pass.
    """
    f = np.array(f, dtype=np.float64)
    if callback is not None:
        callback(f.copy())
    for _ in range(config.inner_iters):
        coeffs = em_coeffs(matrix, measurements, f.ravel())
        quad = quad_surrogate(f, d, c, grid, config.lam, stencil, weights)
        f = voxel_update(
            coeffs.e.reshape(f.shape),
            coeffs.sigma.reshape(f.shape),
            quad.alpha,
            quad.g,
            f,
        )
        if callback is not None:
            callback(f.copy())
    return f


def admm_step(
    state: SolverState,
    matrix: SparseSystemMatrix,
    measurements: MeasurementSet,
    grid: ImageGrid,
    config: SolverConfig,
    stencil: NeighborStencil = DEFAULT_STENCIL,
    weights: np.ndarray | None = None,
    inner_callback=None,
) -> SolverState:
    """One outer iteration: image update, block shrinkage, dual update.

    Appends one :class:`TraceRecord` and increments ``state.k``.
    ``inner_callback`` is forwarded to :func:`image_update`, exposing every
    inner iterate for descent monitoring.
    """
    if weights is None:
        weights = default_weights(grid, stencil)
    state.f = image_update(
        state.f,
        state.d,
        state.c,
        matrix,
        measurements,
        grid,
        config,
        stencil,
        weights,
        callback=inner_callback,
    )
    assert state.f.min() >= 0, "image iterate went negative"

    v = forward_diff(state.f, grid, stencil) * weights
    d_prev = state.d
    state.d = block_shrink(v + state.c, config.beta / config.lam, config.regularizer)
    state.c = state.c + v - state.d

    nll = neg_log_likelihood(
        measurements.counts,
        forward_project(matrix, state.f.ravel(), measurements.background),
    )
    if config.regularizer == "group_tv":
        penalty = float(group_norms(v).sum())
    else:
        penalty = float(standard_norms(v).sum())
    objective = nll + config.beta * penalty
    primal = float(np.linalg.norm((v - state.d).ravel()))
    dual = config.lam * float(
        np.linalg.norm(adjoint_diff((state.d - d_prev) * weights, grid, stencil).ravel())
    )
    state.k += 1
    state.traces.append(
        TraceRecord(
            iteration=state.k,
            objective=objective,
            nll=nll,
            penalty=penalty,
            primal_res=primal,
            dual_res=dual,
        )
    )
    if not np.isfinite(objective) or not np.all(np.isfinite(state.f)):
        raise NonFiniteError(f"non-finite value at outer iteration {state.k}")
    return state


def _initial_state(
    matrix: SparseSystemMatrix,
    measurements: MeasurementSet,
    grid: ImageGrid,
    stencil: NeighborStencil,
    weights: np.ndarray,
) -> SolverState:
    total_sens = float(matrix.col_sums.sum())
    excess = np.maximum(measurements.counts - measurements.background, 0.0).sum()
    level = excess / total_sens if total_sens > 0 else 0.0
    f = np.full((grid.n_spatial, grid.n_spectral), max(level, 1e-6))
    d = forward_diff(f, grid, stencil) * weights
    c = np.zeros_like(d)
    return SolverState(f=f, d=d, c=c)


def solve(
    matrix: SparseSystemMatrix,
    measurements: MeasurementSet,
    grid: ImageGrid,
    config: SolverConfig,
    stencil: NeighborStencil = DEFAULT_STENCIL,
    weights: np.ndarray | None = None,
    init: np.ndarray | None = None,
    inner_callback=None,
) -> ReconResult:
    """Run the full solver to convergence or the outer iteration cap.

    The image starts uniform at the background-corrected mean count level
    (floored at 1e-6; zero initialization is absorbing for the multiplicative
    likelihood step).  Termination requires the relative primal residual to
    drop below ``tol_rel_primal`` while the relative objective change stays
    below ``tol_rel_obj`` for five consecutive iterations.

    Args:
        matrix: forward operator, shape I x J.
        measurements: observed counts and background means, length I.
        grid: reconstruction grid with J hyper-voxels.
        config: solver settings.
        stencil: spatial difference directions.
        weights: per-direction difference weights (default: inverse pitch).
        init: optional length-J or (S, Q) warm start, overrides the uniform
            initialization.
        inner_callback: optional ``callback(f)`` invoked at every inner
            iterate of every image update.

    Returns:
        ReconResult with the final image, one trace record per completed
        outer iteration, and a convergence flag.
    """
    validate_problem(matrix, measurements, grid)
    if weights is None:
        weights = default_weights(grid, stencil)
    weights = np.asarray(weights, dtype=np.float64)

    state = _initial_state(matrix, measurements, grid, stencil, weights)
    if init is not None:
        f0 = np.asarray(init, dtype=np.float64).reshape(state.f.shape)
        if np.any(f0 < 0):
            raise ValidationError("warm start image must be nonnegative")
        state.f = f0.copy()
        state.d = forward_diff(state.f, grid, stencil) * weights

    stall = 0
    prev_obj = None
    converged = False
    for _ in range(config.outer_iters):
        admm_step(
            state,
            matrix,
            measurements,
            grid,
            config,
            stencil,
            weights,
            inner_callback=inner_callback,
        )
        rec = state.traces[-1]
        v = forward_diff(state.f, grid, stencil) * weights
        rel_primal = rec.primal_res / max(float(np.linalg.norm(v.ravel())), _REL_EPS)
        if prev_obj is not None:
            change = abs(rec.objective - prev_obj) / max(abs(prev_obj), _REL_EPS)
            stall = stall + 1 if change <= config.tol_rel_obj else 0
        prev_obj = rec.objective
        if rel_primal <= config.tol_rel_primal and stall >= 5:
            converged = True
            break
    return ReconResult(
        image=HyperImage(grid, state.f.copy()),
        traces=state.traces,
        converged=converged,
        state=state,
    )
