"""Entropies of hybrid quantum noise modelled as a Poisson-weighted Gaussian mixture."""

from ._validation import ParameterError, UnsupportedDimensionError
from .entropy import (
    EntropyEstimate,
    GapCurvePoint,
    GridSurface,
    Method,
    SurfaceKind,
    collision_entropy_closed,
    collision_entropy_separated,
    collision_entropy_separated_paper,
    differential_entropy_grid,
    differential_entropy_mc,
    differential_entropy_separated,
    effective_rank,
    entropy_gap_empirical,
    gap_curve,
    gap_law,
    gaussian_entropy,
    grid_axes,
    renyi_entropy_mc,
    surface,
    weight_entropy,
)
from .noise_model import (
    HybridNoiseSpec,
    MixtureModel,
    build_model,
    load_spec,
    log_pdf,
    mixture_covariance,
    pdf,
    poisson_weights,
    sample,
)
from .qkd import (
    QkdScenario,
    RateCurveParams,
    degradation_ratio,
    eve_success_bound,
    finite_key_rate_curve,
    key_length,
    key_length_deviation,
)

__version__ = "0.1.0"
