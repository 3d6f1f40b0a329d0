"""Penalized-likelihood reconstruction of coherent-scatter hyperspectral images.

Reconstructs per-spatial-bin momentum-transfer profiles from multiplexed
Poisson count data by minimizing a Poisson negative log-likelihood plus a
spectrally grouped total-variation penalty, solved with an ADMM splitting
whose image step uses separable closed-form surrogate updates.
"""

from .analysis import (
    cosine_similarity,
    display_transform,
    mtp_extract,
    spatial_distribution,
    spatial_rmse,
    spectral_rmse,
)
from .diffops import (
    DEFAULT_STENCIL,
    adjoint_diff,
    default_weights,
    forward_diff,
    incident_weight_sq,
)
from .estimator import CoherentScatterReconstructor
from .exceptions import (
    InfeasibleMeanError,
    NonFiniteError,
    OracleFailure,
    ScatterReconError,
    UnboundedVoxelError,
    ValidationError,
)
from .grid import (
    HyperImage,
    ImageGrid,
    MeasurementSet,
    ProblemDiagnostics,
    SolverConfig,
    SparseSystemMatrix,
    build_grid,
    validate_problem,
)
from .likelihood import (
    em_coeffs,
    forward_project,
    neg_log_likelihood,
    nll_gradient,
)
from .regularizers import block_shrink, group_tv, shrink_standard, standard_tv, tv_penalty
from .simulate import (
    FixtureBundle,
    Phantom,
    Region,
    default_fixture,
    gaussian_mixture_template,
    make_phantom,
    make_system,
    poisson_sample,
)
from .solver import (
    ReconResult,
    SolverState,
    TraceRecord,
    admm_step,
    image_update,
    quad_surrogate,
    solve,
    voxel_update,
)

__version__ = "0.1.0"

__all__ = [
    "CoherentScatterReconstructor",
    "DEFAULT_STENCIL",
    "FixtureBundle",
    "HyperImage",
    "ImageGrid",
    "InfeasibleMeanError",
    "MeasurementSet",
    "NonFiniteError",
    "OracleFailure",
    "Phantom",
    "ProblemDiagnostics",
    "ReconResult",
    "Region",
    "ScatterReconError",
    "SolverConfig",
    "SolverState",
    "SparseSystemMatrix",
    "TraceRecord",
    "UnboundedVoxelError",
    "ValidationError",
    "adjoint_diff",
    "admm_step",
    "block_shrink",
    "build_grid",
    "cosine_similarity",
    "default_fixture",
    "default_weights",
    "display_transform",
    "em_coeffs",
    "forward_diff",
    "forward_project",
    "gaussian_mixture_template",
    "group_tv",
    "image_update",
    "incident_weight_sq",
    "make_phantom",
    "make_system",
    "mtp_extract",
    "neg_log_likelihood",
    "nll_gradient",
    "poisson_sample",
    "quad_surrogate",
    "shrink_standard",
    "solve",
    "spatial_distribution",
    "spatial_rmse",
    "spectral_rmse",
    "standard_tv",
    "tv_penalty",
    "validate_problem",
    "voxel_update",
]
