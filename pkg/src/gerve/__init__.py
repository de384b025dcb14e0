"""Entropy-regularised Gaussian mixtures for mode and cluster estimation."""

__version__ = "0.1.0"

from ._kernels import BACKEND
from .bootstrap import (
    BootstrapConfig,
    BootstrapReport,
    Ellipse,
    adaptive_gates,
    bootstrap_uq,
    confidence_ellipse,
    hungarian,
    match_modes,
    stability_scores,
)
from .errors import (
    DegenerateEllipseError,
    DegeneratePointError,
    DimensionMismatchError,
    GerveError,
    InsufficientMatchesError,
    InvalidInputError,
    NumericalFailure,
    StalledPointError,
)
from .metrics import (
    MixtureSpec,
    gen_mixture_sample,
    hungarian_sum,
    mode_recovery,
    nearest_neighbor_sum,
)
from .mixture import (
    Domain,
    GaussianComponent,
    MixtureState,
    ParameterBounds,
    canonical_order,
    component_density,
    mixture_density,
    outside_mass,
    project_to_bounds,
    responsibilities,
)
from .modes import (
    PruneMergeConfig,
    ResolvedMode,
    assign_clusters,
    elbow_scan,
    merge,
    prune,
    resolve_modes,
)
from .objective import (
    EntropyConfig,
    GradientBundle,
    data_gradients,
    empirical_objective,
    entropy_gradients,
    entropy_mc,
)
from .optimizer import (
    EarlyStop,
    FitConfig,
    FitResult,
    InitSpec,
    Schedule,
    fit,
    fit_fixed_cov,
    mean_shift_step,
    step_fixed_cov,
    step_mixture,
)
