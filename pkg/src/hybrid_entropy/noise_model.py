"""Poisson-weighted Gaussian mixture model of hybrid (photon + AWGN) noise.

The hybrid noise ``Z = Z1 + Z2`` adds a Poisson count ``Z1 ~ Poisson(lam)`` to
a Gaussian ``Z2 ~ N(mu, Sigma)``.  Conditioning on the count gives a Gaussian
mixture whose i-th component has weight ``exp(-lam) lam**i / i!`` and mean
``mu + i * spacing * direction``.  In one dimension with unit spacing this is
exactly the convolution of the two noise sources.

Everything downstream (entropies, surfaces, CLI) consumes a
:class:`MixtureModel`; :class:`HybridNoiseSpec` only describes how to build one.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.linalg import solve_triangular
from scipy.special import gammaln, logsumexp
from scipy.stats import poisson

from ._validation import (
    ParameterError,
    check_finite_scalar,
    check_open_unit,
    check_positive_int,
    check_spd,
    check_vector,
)

__all__ = [
    "HybridNoiseSpec",
    "MixtureModel",
    "SAMPLE_CHUNK",
    "build_model",
    "load_spec",
    "log_pdf",
    "mixture_covariance",
    "parse_spec",
    "pdf",
    "poisson_weights",
    "sample",
]

LOG_2PI = math.log(2.0 * math.pi)

# Fixed chunk length for sampling; substreams are keyed by chunk index so the
# output never depends on how many workers process the chunks.
SAMPLE_CHUNK = 1 << 16


def _readonly(arr: np.ndarray) -> np.ndarray:
    arr = np.array(arr, dtype=float, copy=True)
    arr.setflags(write=False)
    return arr


def poisson_weights(lam, tail_epsilon=1e-12) -> tuple[np.ndarray, int]:
    """Truncated, renormalised Poisson probabilities ``P(0..R)``.

    ``R`` is the smallest index whose untruncated tail ``P(X > R)`` does not
    exceed ``tail_epsilon``.  Probabilities are formed in log space so large
    intensities do not overflow ``lam**i / i!``.

    Returns
    -------
    weights : ndarray, shape (R + 1,)
    R : int
    """
    lam = check_finite_scalar(lam, "lambda")
    if lam < 0:
        raise ParameterError(f"lambda must be >= 0, got {lam}")
    tail_epsilon = check_open_unit(tail_epsilon, "tail_epsilon")
    log_w = _poisson_log_weights(lam, tail_epsilon)
    return np.exp(log_w), log_w.size - 1


def _poisson_log_weights(lam: float, tail_epsilon: float) -> np.ndarray:
    if lam == 0.0:
        return np.zeros(1)
    r = int(poisson.isf(tail_epsilon, lam))
    # isf is only accurate to a step; settle on the smallest admissible R
    while r > 0 and poisson.sf(r - 1, lam) <= tail_epsilon:
        r -= 1
    while poisson.sf(r, lam) > tail_epsilon:
        r += 1
    i = np.arange(r + 1, dtype=float)
    log_w = -lam + i * math.log(lam) - gammaln(i + 1.0)
    return log_w - logsumexp(log_w)


@dataclass(frozen=True)
class HybridNoiseSpec:
    """Parameters of the hybrid noise mixture.

    ``placement_direction`` must already be a unit vector; :func:`parse_spec`
    normalises directions read from files.
    """

    lam: float = 1.0
    dimension: int = 2
    base_mean: np.ndarray | None = None
    base_cov: np.ndarray | None = None
    placement_direction: np.ndarray | None = None
    spacing: float = 1.0
    tail_epsilon: float = 1e-12

    def __post_init__(self):
        d = check_positive_int(self.dimension, "dimension")
        lam = check_finite_scalar(self.lam, "lambda")
        if lam < 0:
            raise ParameterError(f"lambda must be >= 0, got {lam}")
        spacing = check_finite_scalar(self.spacing, "spacing")
        if spacing <= 0:
            raise ParameterError(f"spacing must be positive, got {spacing}")
        check_open_unit(self.tail_epsilon, "tail_epsilon")

        mean = np.zeros(d) if self.base_mean is None else check_vector(self.base_mean, "base_mean", d)
        cov = np.eye(d) if self.base_cov is None else np.asarray(self.base_cov, dtype=float).reshape(d, d)
        check_spd(cov, "base_cov", d)
        if self.placement_direction is None:
            direction = np.full(d, 1.0 / math.sqrt(d))
        else:
            direction = check_vector(self.placement_direction, "placement_direction", d)
        if abs(np.linalg.norm(direction) - 1.0) > 1e-12:
            raise ParameterError("placement_direction must have unit norm")

        object.__setattr__(self, "dimension", d)
        object.__setattr__(self, "lam", lam)
        object.__setattr__(self, "spacing", spacing)
        object.__setattr__(self, "base_mean", _readonly(mean))
        object.__setattr__(self, "base_cov", _readonly(cov))
        object.__setattr__(self, "placement_direction", _readonly(direction))


@dataclass(frozen=True, eq=False)
class MixtureModel:
    """Immutable Gaussian mixture ``sum_i w_i N(mu_i, Sigma_i)``.

    Parameters
    ----------
    weights : array_like, shape (K,)
        Mixture weights, summing to one.
    means : array_like, shape (K, d)
    covariances : array_like, shape (K, d, d)
        Symmetric positive-definite component covariances.
    log_weights : array_like, optional
        Log of the weights, kept when weights are tiny enough to underflow.
    """

    weights: np.ndarray
    means: np.ndarray
    covariances: np.ndarray
    log_weights: np.ndarray | None = None
    _chol: np.ndarray = field(init=False, repr=False)
    _logdet: np.ndarray = field(init=False, repr=False)
    _shared_cov: bool = field(init=False, repr=False)

    def __post_init__(self):
        w = check_vector(self.weights, "weights")
        k = w.size
        if k == 0:
            raise ParameterError("a mixture needs at least one component")
        means = np.asarray(self.means, dtype=float)
        if means.ndim == 1:
            means = means.reshape(k, -1)
        if means.ndim != 2 or means.shape[0] != k:
            raise ParameterError("means must have shape (K, d) matching the weights")
        d = means.shape[1]
        covs = np.asarray(self.covariances, dtype=float).reshape(k, d, d)
        if not np.all(np.isfinite(means)):
            raise ParameterError("means contain non-finite entries")

        if self.log_weights is None:
            if np.any(w <= 0):
                raise ParameterError("weights must be strictly positive")
            log_w = np.log(w)
        else:
            log_w = check_vector(self.log_weights, "log_weights", k)
            if not np.allclose(np.exp(log_w), w, rtol=1e-12, atol=0.0):
                raise ParameterError("log_weights disagree with weights")
        if np.any(w < 0) or abs(w.sum() - 1.0) > 1e-12:
            raise ParameterError(f"weights must be nonnegative and sum to 1 (sum={w.sum()!r})")

        chol = np.stack([check_spd(c, f"covariances[{i}]", d) for i, c in enumerate(covs)])
        logdet = 2.0 * np.log(np.diagonal(chol, axis1=1, axis2=2)).sum(axis=1)

        object.__setattr__(self, "weights", _readonly(w))
        object.__setattr__(self, "log_weights", _readonly(log_w))
        object.__setattr__(self, "means", _readonly(means))
        object.__setattr__(self, "covariances", _readonly(covs))
        object.__setattr__(self, "_chol", _readonly(chol))
        object.__setattr__(self, "_logdet", _readonly(logdet))
        object.__setattr__(self, "_shared_cov", bool(np.all(covs == covs[0])))

    @property
    def dimension(self) -> int:
        return self.means.shape[1]

    @property
    def n_components(self) -> int:
        return self.weights.size

    @property
    def shared_covariance(self) -> bool:
        """True when every component has the identical covariance matrix."""
        return self._shared_cov

    @property
    def cholesky_factors(self) -> np.ndarray:
        return self._chol

    @property
    def log_determinants(self) -> np.ndarray:
        return self._logdet

    def transformed(self, scale: float = 1.0, shift=None) -> "MixtureModel":
        """Model of ``scale * Z + shift``."""
        shift = np.zeros(self.dimension) if shift is None else check_vector(shift, "shift", self.dimension)
        return MixtureModel(
            self.weights,
            scale * self.means + shift,
            scale**2 * self.covariances,
            log_weights=self.log_weights,
        )


def build_model(spec: HybridNoiseSpec) -> MixtureModel:
    """Materialise the mixture described by ``spec``."""
    log_w = _poisson_log_weights(spec.lam, spec.tail_epsilon)
    idx = np.arange(log_w.size, dtype=float)
    means = spec.base_mean + np.outer(idx * spec.spacing, spec.placement_direction)
    covs = np.broadcast_to(spec.base_cov, (log_w.size,) + spec.base_cov.shape)
    return MixtureModel(np.exp(log_w), means, covs, log_weights=log_w)


def _as_points(model: MixtureModel, z) -> tuple[np.ndarray, bool]:
    arr = np.asarray(z, dtype=float)
    single = arr.ndim <= 1
    if arr.ndim == 0 or (arr.ndim == 1 and model.dimension == 1 and arr.size != 1):
        # a bare 1-D array in one dimension is a batch of scalar points
        arr = arr.reshape(-1, 1)
        single = arr.shape[0] == 1 and np.asarray(z).ndim == 0
    elif arr.ndim == 1:
        arr = arr.reshape(1, -1)
    if arr.ndim != 2 or arr.shape[1] != model.dimension:
        raise ParameterError(
            f"points must have dimension {model.dimension}, got shape {np.shape(z)}"
        )
    return arr, single


def component_log_densities(model: MixtureModel, points: np.ndarray) -> np.ndarray:
    """``log w_i + log N(z; mu_i, Sigma_i)`` for each component, shape (K, n)."""
    d = model.dimension
    const = -0.5 * d * LOG_2PI
    if model.shared_covariance:
        chol = model.cholesky_factors[0]
        zw = solve_triangular(chol, points.T, lower=True)  # (d, n)
        mw = solve_triangular(chol, model.means.T, lower=True)  # (d, K)
        maha = np.zeros((model.n_components, points.shape[0]))
        for a in range(d):
            maha += (zw[a][None, :] - mw[a][:, None]) ** 2
        return (model.log_weights + const - 0.5 * model.log_determinants)[:, None] - 0.5 * maha
    out = np.empty((model.n_components, points.shape[0]))
    for k in range(model.n_components):
        y = solve_triangular(model.cholesky_factors[k], (points - model.means[k]).T, lower=True)
        out[k] = model.log_weights[k] + const - 0.5 * model.log_determinants[k] - 0.5 * np.sum(y**2, axis=0)
    return out


def log_pdf(model: MixtureModel, z):
    """Log density via log-sum-exp; finite even where :func:`pdf` underflows.

    ``z`` may be a single point of length ``d`` or an array of shape (n, d).
    """
    points, single = _as_points(model, z)
    out = logsumexp(component_log_densities(model, points), axis=0)
    return float(out[0]) if single else out


def pdf(model: MixtureModel, z):
    """Mixture density at ``z`` (a point or an (n, d) array)."""
    return np.exp(log_pdf(model, z))


def _sample_chunk(model: MixtureModel, seed: int, chunk: int, size: int, with_labels: bool):
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed, spawn_key=(chunk,))))
    cdf = np.cumsum(model.weights)
    labels = np.minimum(np.searchsorted(cdf, rng.random(size), side="right"), model.n_components - 1)
    eps = rng.standard_normal((size, model.dimension))
    out = np.empty_like(eps)
    for k in np.unique(labels):
        mask = labels == k
        out[mask] = model.means[k] + eps[mask] @ model.cholesky_factors[k].T
    return (out, labels) if with_labels else (out, None)


def sample(model: MixtureModel, n: int, seed: int = 42, n_jobs: int = 1, return_labels: bool = False):
    """Draw ``n`` i.i.d. points from the mixture.

    Draws are generated in fixed chunks of :data:`SAMPLE_CHUNK` points, each
    from its own ``SeedSequence(seed, spawn_key=(chunk,))`` stream, so the
    result is bit-identical for any ``n_jobs``.

    Returns
    -------
    points : ndarray, shape (n, d)
    labels : ndarray of int, shape (n,)
        Component index of each draw; only when ``return_labels`` is true.
    """
    n = check_positive_int(n, "n")
    seed = check_positive_int(seed, "seed", minimum=0)
    n_jobs = check_positive_int(n_jobs, "n_jobs")
    bounds = [(c, min(SAMPLE_CHUNK, n - c * SAMPLE_CHUNK)) for c in range(-(-n // SAMPLE_CHUNK))]

    def work(bound):
        return _sample_chunk(model, seed, bound[0], bound[1], return_labels)

    if n_jobs == 1 or len(bounds) == 1:
        parts = [work(b) for b in bounds]
    else:
        with ThreadPoolExecutor(max_workers=n_jobs) as pool:
            parts = list(pool.map(work, bounds))
    points = np.concatenate([p for p, _ in parts])
    if return_labels:
        return points, np.concatenate([lab for _, lab in parts])
    return points


def mixture_covariance(model: MixtureModel) -> np.ndarray:
    """Total covariance ``sum_i w_i (Sigma_i + mu_i mu_i^T) - m m^T``."""
    w = model.weights
    m = w @ model.means
    centred = model.means - m
    # centring first keeps the result exact for a single component
    return np.einsum("k,kij->ij", w, model.covariances) + np.einsum("k,ki,kj->ij", w, centred, centred)


# ---------------------------------------------------------------------------
# key=value model files

SPEC_KEYS = ("lambda", "dimension", "base_mean", "base_cov", "direction", "spacing", "tail_epsilon")


def _floats(text: str, key: str) -> list[float]:
    try:
        return [float(tok) for tok in text.split(",") if tok.strip()]
    except ValueError as exc:
        raise ParameterError(f"{key}: cannot parse {text!r} as comma-separated reals") from exc


def _scalar(text: str, key: str) -> float:
    vals = _floats(text, key)
    if len(vals) != 1:
        raise ParameterError(f"{key}: expected a single real, got {text!r}")
    return vals[0]


def parse_spec(entries: dict[str, str]) -> HybridNoiseSpec:
    """Build a :class:`HybridNoiseSpec` from raw ``key -> value`` strings.

    Missing keys take the defaults (``lambda=1``, ``dimension=2``, zero mean,
    identity covariance, diagonal direction, unit spacing).  Directions are
    normalised to unit length.
    """
    unknown = sorted(set(entries) - set(SPEC_KEYS))
    if unknown:
        raise ParameterError(f"unknown model keys: {', '.join(unknown)}")
    kwargs = {}
    if "lambda" in entries:
        kwargs["lam"] = _scalar(entries["lambda"], "lambda")
    if "dimension" in entries:
        try:
            kwargs["dimension"] = int(entries["dimension"])
        except ValueError as exc:
            raise ParameterError(f"dimension: not an integer: {entries['dimension']!r}") from exc
    else:
        if "base_mean" in entries:
            kwargs["dimension"] = len(_floats(entries["base_mean"], "base_mean"))
    d = kwargs.get("dimension", 2)
    if "base_mean" in entries:
        kwargs["base_mean"] = _floats(entries["base_mean"], "base_mean")
    if "base_cov" in entries:
        vals = _floats(entries["base_cov"], "base_cov")
        if len(vals) != d * d:
            raise ParameterError(f"base_cov needs {d * d} row-major entries, got {len(vals)}")
        kwargs["base_cov"] = np.array(vals).reshape(d, d)
    if "direction" in entries:
        direction = check_vector(_floats(entries["direction"], "direction"), "direction", d)
        norm = np.linalg.norm(direction)
        if norm == 0:
            raise ParameterError("direction must be nonzero")
        kwargs["placement_direction"] = direction / norm
    for key in ("spacing", "tail_epsilon"):
        if key in entries:
            kwargs[key] = _scalar(entries[key], key)
    return HybridNoiseSpec(**kwargs)


def read_spec_file(path) -> dict[str, str]:
    """Read a flat ``key=value`` file; ``#`` starts a comment."""
    entries = {}
    text = Path(path).read_text()
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ParameterError(f"{path}:{lineno}: expected key=value, got {raw!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        if key not in SPEC_KEYS:
            raise ParameterError(f"{path}:{lineno}: unknown key {key!r}")
        entries[key] = value
    return entries


def load_spec(path) -> HybridNoiseSpec:
    return parse_spec(read_spec_file(path))
