"""Differential, Renyi and collision entropies of Gaussian mixtures.

All values are in nats.  Three routes are provided and cross-check each other:

* closed forms (single Gaussians, the collision entropy of any mixture),
* deterministic trapezoidal quadrature on a box grid (``d <= 2``),
* Monte-Carlo averages of ``log f`` over draws from the model.

The well-separated approximations come in two flavours: ``approximation_paper``
reproduces the self-overlap formula with ``|Sigma_i|`` as it is usually quoted,
``approximation_exact`` uses the correct ``|2 Sigma_i|`` factor.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from enum import Enum

import numpy as np
from scipy.integrate import trapezoid
from scipy.linalg import cho_factor, cho_solve
from scipy.special import logsumexp

from ._validation import (
    ParameterError,
    check_dimension,
    check_finite_scalar,
    check_positive_int,
    check_spd,
    check_vector,
    check_weights,
)
from .noise_model import LOG_2PI, MixtureModel, SAMPLE_CHUNK, log_pdf, sample

LOG2E = math.log2(math.e)

DEFAULT_SAMPLES = 10**6
DEFAULT_HALF_WIDTH = 8.0
DEFAULT_GRID_POINTS = {1: 4096, 2: 512}


class Method(str, Enum):
    CLOSED_FORM = "closed_form"
    GRID_QUADRATURE = "grid_quadrature"
    MONTE_CARLO = "monte_carlo"
    APPROXIMATION_PAPER = "approximation_paper"
    APPROXIMATION_EXACT = "approximation_exact"


class SurfaceKind(str, Enum):
    DENSITY = "density"
    DIFF_INTEGRAND = "diff_integrand"
    RENYI_INTEGRAND = "renyi_integrand"
    COLLISION_INTEGRAND = "collision_integrand"


@dataclass(frozen=True)
class EntropyEstimate:
    """An entropy value with its provenance.

    ``std_error_nats`` and ``samples`` are set exactly for Monte-Carlo results.
    """

    value_nats: float
    method: Method
    std_error_nats: float | None = None
    samples: int | None = None

    def __post_init__(self):
        object.__setattr__(self, "method", Method(self.method))
        if not math.isfinite(self.value_nats):
            raise ParameterError(f"entropy value is not finite: {self.value_nats}")
        stochastic = self.method is Method.MONTE_CARLO
        if stochastic != (self.std_error_nats is not None):
            raise ParameterError("std_error_nats must be given iff method is monte_carlo")

    @property
    def value_bits(self) -> float:
        return self.value_nats * LOG2E

    @property
    def std_error_bits(self) -> float | None:
        return None if self.std_error_nats is None else self.std_error_nats * LOG2E


@dataclass(frozen=True, eq=False)
class GridSurface:
    """Pointwise values on a (q, p) grid; ``values[j, i]`` is at ``(q[i], p[j])``."""

    q_axis: np.ndarray
    p_axis: np.ndarray
    values: np.ndarray
    kind: SurfaceKind
    alpha: float | None = None

    def __post_init__(self):
        object.__setattr__(self, "kind", SurfaceKind(self.kind))
        for name in ("q_axis", "p_axis"):
            axis = getattr(self, name)
            if axis.ndim != 1 or axis.size < 2 or np.any(np.diff(axis) <= 0):
                raise ParameterError(f"{name} must be strictly increasing with >= 2 points")
        if self.values.shape != (self.p_axis.size, self.q_axis.size):
            raise ParameterError("values must have shape (len(p_axis), len(q_axis))")

    def integral(self) -> float:
        """Trapezoidal integral of the surface over its grid."""
        return float(trapezoid(trapezoid(self.values, self.q_axis, axis=1), self.p_axis))


@dataclass(frozen=True)
class GapCurvePoint:
    r_eff: float
    exact_gap_bits: float
    approx_gap_bits: float
    relative_error: float


# ---------------------------------------------------------------------------
# closed forms


def gaussian_entropy(cov, d: int | None = None) -> float:
    """``(d/2) log(2 pi e) + 1/2 log|cov|`` via a Cholesky log-determinant."""
    chol = check_spd(cov, "cov", d)
    d = chol.shape[0]
    logdet = 2.0 * np.sum(np.log(np.diag(chol)))
    return 0.5 * d * (LOG_2PI + 1.0) + 0.5 * logdet


def effective_rank(weights) -> float:
    """Participation ratio ``1 / sum w_i^2``."""
    w = _weights_of(weights)
    return 1.0 / float(np.sum(w**2))


def weight_entropy(weights) -> float:
    """Shannon entropy ``-sum w_i ln w_i`` of the mixture weights."""
    if isinstance(weights, MixtureModel):
        w, log_w = weights.weights, weights.log_weights
    else:
        w = _weights_of(weights)
        with np.errstate(divide="ignore"):
            log_w = np.log(w)
    mask = w > 0
    return float(-np.sum(w[mask] * log_w[mask]))


def _weights_of(weights) -> np.ndarray:
    if isinstance(weights, MixtureModel):
        return weights.weights
    return check_weights(weights)


def _pair_log_overlaps(model: MixtureModel) -> np.ndarray:
    """``log N(mu_i; mu_j, Sigma_i + Sigma_j)`` for all pairs, shape (K, K)."""
    k, d = model.n_components, model.dimension
    out = np.empty((k, k))
    if model.shared_covariance:
        factor = cho_factor(2.0 * model.covariances[0], lower=True)
        logdet = d * math.log(2.0) + model.log_determinants[0]
        diff = model.means[:, None, :] - model.means[None, :, :]
        sol = cho_solve(factor, diff.reshape(-1, d).T).T.reshape(k, k, d)
        maha = np.sum(diff * sol, axis=-1)
        return -0.5 * (d * LOG_2PI + logdet + maha)
    for i in range(k):
        for j in range(i, k):
            s = model.covariances[i] + model.covariances[j]
            chol = np.linalg.cholesky(s)
            y = np.linalg.solve(chol, model.means[i] - model.means[j])
            val = -0.5 * (d * LOG_2PI + 2.0 * np.sum(np.log(np.diag(chol))) + y @ y)
            out[i, j] = out[j, i] = val
    return out


def collision_entropy_closed(model: MixtureModel) -> EntropyEstimate:
    """Exact ``H_2 = -log sum_ij w_i w_j N(mu_i; mu_j, Sigma_i + Sigma_j)``."""
    lw = model.log_weights
    terms = lw[:, None] + lw[None, :] + _pair_log_overlaps(model)
    return EntropyEstimate(-float(logsumexp(terms)), Method.CLOSED_FORM)


def _require_shared_covariance(model: MixtureModel, operation: str) -> None:
    if not np.allclose(model.covariances, model.covariances[0], rtol=1e-12, atol=1e-12):
        raise ParameterError(f"{operation} requires all component covariances to be equal")


def collision_entropy_separated_paper(model: MixtureModel) -> EntropyEstimate:
    """Self-overlap approximation ``-log sum w_i^2 (2 pi)^(-d/2) |Sigma_i|^(-1/2)``.

    This is the formula in its commonly printed form; the true self-overlap
    uses ``|2 Sigma_i|``, see :func:`collision_entropy_separated`.  Even for a
    single Gaussian the two differ by ``(d/2) ln 2``.
    """
    _require_shared_covariance(model, "collision_entropy_separated_paper")
    d = model.dimension
    terms = 2.0 * model.log_weights - 0.5 * d * LOG_2PI - 0.5 * model.log_determinants
    return EntropyEstimate(-float(logsumexp(terms)), Method.APPROXIMATION_PAPER)


def collision_entropy_separated(model: MixtureModel) -> EntropyEstimate:
    """Diagonal (``i == j``) part of the exact collision double sum."""
    d = model.dimension
    terms = 2.0 * model.log_weights - 0.5 * d * (LOG_2PI + math.log(2.0)) - 0.5 * model.log_determinants
    return EntropyEstimate(-float(logsumexp(terms)), Method.APPROXIMATION_EXACT)


def differential_entropy_separated(model: MixtureModel) -> EntropyEstimate:
    """``sum w_i H(N_i) + H(w)``, the no-overlap limit of the differential entropy."""
    d = model.dimension
    comp = 0.5 * d * (LOG_2PI + 1.0) + 0.5 * model.log_determinants
    value = float(model.weights @ comp) + weight_entropy(model)
    return EntropyEstimate(value, Method.APPROXIMATION_EXACT)


# ---------------------------------------------------------------------------
# Monte Carlo


def _mc_log_density(model: MixtureModel, n: int, seed: int, n_jobs: int) -> np.ndarray:
    """``log f(z_k)`` for ``n`` draws, evaluated chunk by chunk."""
    points = sample(model, n, seed, n_jobs=n_jobs)
    chunks = [points[i : i + SAMPLE_CHUNK] for i in range(0, n, SAMPLE_CHUNK)]
    if n_jobs == 1 or len(chunks) == 1:
        parts = [log_pdf(model, c) for c in chunks]
    else:
        with ThreadPoolExecutor(max_workers=n_jobs) as pool:
            parts = list(pool.map(lambda c: log_pdf(model, c), chunks))
    return np.concatenate(parts)


def _check_mc_args(n, seed, minimum=1000):
    return check_positive_int(n, "n", minimum=minimum), check_positive_int(seed, "seed", minimum=0)


def differential_entropy_mc(
    model: MixtureModel, n: int = DEFAULT_SAMPLES, seed: int = 42, n_jobs: int = 1
) -> EntropyEstimate:
    """Monte-Carlo estimate ``-(1/n) sum log f(z_k)`` with its CLT standard error."""
    n, seed = _check_mc_args(n, seed)
    lp = _mc_log_density(model, n, seed, n_jobs)
    se = float(np.std(lp, ddof=1) / math.sqrt(n))
    return EntropyEstimate(-float(np.mean(lp)), Method.MONTE_CARLO, se, n)


def renyi_entropy_mc(
    model: MixtureModel, alpha: float, n: int = DEFAULT_SAMPLES, seed: int = 42, n_jobs: int = 1
) -> EntropyEstimate:
    """Monte-Carlo Renyi entropy ``log E_f[f^(alpha-1)] / (1 - alpha)``.

    The standard error comes from the delta method on the log of the sample
    mean.  For ``alpha < 1`` the summand ``f^(alpha-1)`` is heavy tailed and
    the reported error is only indicative.
    """
    alpha = check_finite_scalar(alpha, "alpha")
    if alpha <= 0:
        raise ParameterError(f"alpha must be positive, got {alpha}")
    if alpha == 1.0:
        raise ParameterError("alpha = 1 is the differential entropy; use differential_entropy_mc")
    n, seed = _check_mc_args(n, seed)
    a = (alpha - 1.0) * _mc_log_density(model, n, seed, n_jobs)
    shift = a.max()
    ratios = np.exp(a - shift)
    mean = ratios.mean()
    log_mean = math.log(mean) + float(shift)
    se_log = float(np.std(ratios, ddof=1) / (math.sqrt(n) * mean))
    return EntropyEstimate(float(log_mean / (1.0 - alpha)), Method.MONTE_CARLO, se_log / abs(1.0 - alpha), n)


def entropy_gap_empirical(
    model: MixtureModel, n: int = DEFAULT_SAMPLES, seed: int = 42, n_jobs: int = 1
) -> EntropyEstimate:
    """Measured ``H - H_2``: Monte-Carlo differential minus closed-form collision.

    The collision term is exact, so the standard error is that of the
    differential estimate.
    """
    h = differential_entropy_mc(model, n, seed, n_jobs)
    h2 = collision_entropy_closed(model)
    return EntropyEstimate(h.value_nats - h2.value_nats, Method.MONTE_CARLO, h.std_error_nats, h.samples)


# ---------------------------------------------------------------------------
# grid quadrature


def grid_axes(model: MixtureModel, half_width_sigmas: float = DEFAULT_HALF_WIDTH, points_per_axis: int | None = None):
    """Per-axis grids spanning the extreme means padded by ``half_width_sigmas``.

    The padding on each axis uses the largest marginal standard deviation of
    any component along that axis.
    """
    half_width_sigmas = check_finite_scalar(half_width_sigmas, "half_width_sigmas")
    if half_width_sigmas <= 0:
        raise ParameterError("half_width_sigmas must be positive")
    d = model.dimension
    if points_per_axis is None:
        points_per_axis = DEFAULT_GRID_POINTS.get(d, 512)
    points_per_axis = check_positive_int(points_per_axis, "points_per_axis", minimum=2)
    sigma = np.sqrt(np.max(np.diagonal(model.covariances, axis1=1, axis2=2), axis=0))
    lo = model.means.min(axis=0) - half_width_sigmas * sigma
    hi = model.means.max(axis=0) + half_width_sigmas * sigma
    return [np.linspace(lo[a], hi[a], points_per_axis) for a in range(d)]


def _log_pdf_on_grid(model: MixtureModel, axes) -> np.ndarray:
    if len(axes) == 1:
        return log_pdf(model, axes[0].reshape(-1, 1))
    q, p = axes
    qq, pp = np.meshgrid(q, p)  # shape (len(p), len(q))
    flat = np.column_stack([qq.ravel(), pp.ravel()])
    out = np.concatenate([log_pdf(model, flat[i : i + SAMPLE_CHUNK]) for i in range(0, flat.shape[0], SAMPLE_CHUNK)])
    return out.reshape(qq.shape)


def _integrate(values: np.ndarray, axes) -> float:
    if len(axes) == 1:
        return float(trapezoid(values, axes[0]))
    return float(trapezoid(trapezoid(values, axes[0], axis=1), axes[1]))


def _neg_f_log_f(lp: np.ndarray) -> np.ndarray:
    # exp underflows to 0 where f is tiny, giving the x log x -> 0 limit
    return -np.exp(lp) * lp


def differential_entropy_grid(
    model: MixtureModel, half_width_sigmas: float = DEFAULT_HALF_WIDTH, points_per_axis: int | None = None
) -> EntropyEstimate:
    """Trapezoidal integral of ``-f log f`` on the :func:`grid_axes` box (``d <= 2``)."""
    check_dimension(model.dimension, {1, 2}, "differential_entropy_grid")
    if points_per_axis is not None and points_per_axis < 64:
        raise ParameterError(f"points_per_axis must be >= 64, got {points_per_axis}")
    axes = grid_axes(model, half_width_sigmas, points_per_axis)
    value = _integrate(_neg_f_log_f(_log_pdf_on_grid(model, axes)), axes)
    return EntropyEstimate(value, Method.GRID_QUADRATURE)


def surface(model: MixtureModel, kind, q_axis, p_axis, alpha: float = 2.0) -> GridSurface:
    """Evaluate a pointwise entropic function of a 2-D model on a (q, p) grid.

    ``density`` is ``f``; ``diff_integrand`` is ``-f log f``; ``renyi_integrand``
    is ``f**alpha``; ``collision_integrand`` is ``f**2``.
    """
    check_dimension(model.dimension, {2}, "surface")
    kind = SurfaceKind(kind)
    q_axis = check_vector(q_axis, "q_axis")
    p_axis = check_vector(p_axis, "p_axis")
    lp = _log_pdf_on_grid(model, [q_axis, p_axis])
    if kind is SurfaceKind.DENSITY:
        values = np.exp(lp)
    elif kind is SurfaceKind.DIFF_INTEGRAND:
        values = _neg_f_log_f(lp)
    elif kind is SurfaceKind.COLLISION_INTEGRAND:
        values = np.exp(2.0 * lp)
    else:
        alpha = check_finite_scalar(alpha, "alpha")
        if alpha <= 0:
            raise ParameterError(f"alpha must be positive, got {alpha}")
        values = np.exp(alpha * lp)
    return GridSurface(
        q_axis, p_axis, values, kind, alpha if kind is SurfaceKind.RENYI_INTEGRAND else None
    )


# ---------------------------------------------------------------------------
# effective-rank gap law


def gap_law(r_eff: float, d: int) -> GapCurvePoint:
    """Stated gap ``log2 R_eff + (d/2) log2 e`` against its ``log2 R_eff`` approximation.

    This is the heuristic law as a function of ``R_eff``; it is not the true
    ``H - H_2`` of any particular model (see :func:`entropy_gap_empirical`).
    """
    r_eff = check_finite_scalar(r_eff, "r_eff")
    if r_eff < 1.0:
        raise ParameterError(f"r_eff must be >= 1, got {r_eff}")
    d = check_positive_int(d, "d")
    correction = 0.5 * d * LOG2E
    approx = math.log2(r_eff)
    exact = approx + correction
    return GapCurvePoint(r_eff, exact, approx, correction / exact)


def gap_curve(d: int = 2, r_min: float = 1.0, r_max: float = 1e6, points: int = 601) -> list[GapCurvePoint]:
    """:func:`gap_law` on a logarithmic ``R_eff`` sweep."""
    points = check_positive_int(points, "points", minimum=2)
    if not 1.0 <= r_min < r_max:
        raise ParameterError("need 1 <= r_min < r_max")
    return [gap_law(r, d) for r in np.geomspace(r_min, r_max, points)]


def gap_threshold_r_eff(d: int, threshold: float = 0.10) -> float:
    """``R_eff`` at which the gap law's relative error equals ``threshold``."""
    correction = 0.5 * d * LOG2E
    return 2.0 ** (correction * (1.0 - threshold) / threshold)
