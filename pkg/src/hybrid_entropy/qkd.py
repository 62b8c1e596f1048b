"""Finite-key QKD arithmetic driven by a (possibly mis-estimated) collision entropy.

Entropies here are in bits.  ``key_length`` works per block (``h2_bits`` is the
block's conditional collision entropy); ``finite_key_rate_curve`` works per
symbol and scales a per-symbol entropy rate by the block size ``N``.
"""

from __future__ import annotations

import math
import sys
from dataclasses import dataclass, field

import numpy as np

from ._validation import ParameterError, check_finite_scalar, check_open_unit

_MIN_LOG2 = math.log2(sys.float_info.min * sys.float_info.epsilon)


@dataclass(frozen=True)
class QkdScenario:
    h2_bits: float = 100.0
    delta: float = -0.1
    leak_ec_bits: float = 30.0
    eps_s: float = 1e-10
    eps_pa: float = 1e-10

    def __post_init__(self):
        h2 = check_finite_scalar(self.h2_bits, "h2_bits")
        if h2 <= 0:
            raise ParameterError(f"h2_bits must be positive, got {h2}")
        delta = check_finite_scalar(self.delta, "delta")
        if not -1.0 < delta < 1.0:
            raise ParameterError(f"delta must lie in (-1, 1), got {delta}")
        if check_finite_scalar(self.leak_ec_bits, "leak_ec_bits") < 0:
            raise ParameterError("leak_ec_bits must be nonnegative")
        check_open_unit(self.eps_s, "eps_s")
        check_open_unit(self.eps_pa, "eps_pa")


@dataclass(frozen=True)
class SuccessBound:
    """Upper bound ``2**log2`` on Eve's guessing probability."""

    log2: float

    @property
    def probability(self) -> float | None:
        """The bound as a float, or ``None`` if it is below the subnormal range."""
        if self.log2 < _MIN_LOG2:
            return None
        return 2.0**self.log2


@dataclass(frozen=True)
class KeyLength:
    length_bits: float
    penalty_bits: float
    margin_bits: float


@dataclass(frozen=True)
class KeyDeviation:
    absolute_bits: float
    relative: float
    bounded: bool


def eve_success_bound(h2_bits: float) -> SuccessBound:
    """``p_succ <= 2**(-h2_bits)``, kept in log2 form."""
    h2_bits = check_finite_scalar(h2_bits, "h2_bits")
    if h2_bits <= 0:
        raise ParameterError(f"h2_bits must be positive, got {h2_bits}")
    return SuccessBound(-h2_bits)


def degradation_ratio(delta: float, h2_bits: float) -> float:
    """Ratio ``2**(-delta * h2_bits)`` of the estimated to the true success bound."""
    delta = check_finite_scalar(delta, "delta")
    h2_bits = check_finite_scalar(h2_bits, "h2_bits")
    if h2_bits <= 0:
        raise ParameterError(f"h2_bits must be positive, got {h2_bits}")
    return 2.0 ** (-delta * h2_bits)


def privacy_amplification_penalty(eps_pa: float) -> float:
    """``2 log2(1 / (2 eps_pa))`` bits."""
    eps_pa = check_open_unit(eps_pa, "eps_pa")
    return 2.0 * math.log2(1.0 / (2.0 * eps_pa))


def key_length(scenario: QkdScenario) -> KeyLength:
    """Leftover-hash key length at the estimated entropy ``(1 + delta) h2``.

    The length is signed; a negative value means no key can be extracted.
    ``h2_bits`` is taken as already smoothed.  Penalty and margin refer to the
    true entropy.
    """
    penalty = scenario.leak_ec_bits + privacy_amplification_penalty(scenario.eps_pa)
    margin = scenario.h2_bits - penalty
    return KeyLength(margin + scenario.delta * scenario.h2_bits, penalty, margin)


def key_length_deviation(scenario: QkdScenario) -> KeyDeviation:
    """``(delta h2, delta h2 / (h2 - penalty))``; unbounded when the margin is zero."""
    absolute = scenario.delta * scenario.h2_bits
    margin = key_length(scenario).margin_bits
    if margin == 0.0:
        rel = 0.0 if absolute == 0.0 else math.copysign(math.inf, absolute)
        return KeyDeviation(absolute, rel, absolute == 0.0)
    return KeyDeviation(absolute, absolute / margin, True)


@dataclass(frozen=True, eq=False)
class RateCurveParams:
    """Inputs of the per-symbol finite-size key rate.

    ``leak_rate`` is an absolute per-symbol leakage in bits; by default it is
    30% of ``entropy_rate_bits``.
    """

    entropy_rate_bits: float = 1.0
    delta: float = -0.1
    leak_rate: float | None = None
    eps_s: float = 1e-10
    eps_pa: float = 1e-10
    fs_coefficient: float = 4.0
    block_sizes: np.ndarray = field(default_factory=lambda: np.logspace(4, 12, 81))

    def __post_init__(self):
        h = check_finite_scalar(self.entropy_rate_bits, "entropy_rate_bits")
        if h <= 0:
            raise ParameterError("entropy_rate_bits must be positive")
        leak = 0.3 * h if self.leak_rate is None else check_finite_scalar(self.leak_rate, "leak_rate")
        if leak < 0 or leak >= h:
            raise ParameterError("leak_rate must satisfy 0 <= leak_rate < entropy_rate_bits")
        check_finite_scalar(self.delta, "delta")
        check_open_unit(self.eps_s, "eps_s")
        check_open_unit(self.eps_pa, "eps_pa")
        if check_finite_scalar(self.fs_coefficient, "fs_coefficient") <= 0:
            raise ParameterError("fs_coefficient must be positive")
        sizes = np.asarray(self.block_sizes, dtype=float)
        if sizes.ndim != 1 or sizes.size == 0 or np.any(sizes <= 0) or np.any(np.diff(sizes) <= 0):
            raise ParameterError("block_sizes must be strictly increasing positive values")
        sizes = np.round(sizes)
        if np.any(np.diff(sizes) <= 0):
            raise ParameterError("block_sizes collide after rounding to integers")
        object.__setattr__(self, "leak_rate", leak)
        object.__setattr__(self, "block_sizes", sizes)


@dataclass(frozen=True)
class RatePoint:
    n: int
    rate_true: float
    rate_estimated: float


def _rate(n: float, h: float, p: RateCurveParams) -> float:
    # per-symbol form of max(0, N(h - leak) - PA penalty - c sqrt(N) log2(1/eps_s))
    rate = (h - p.leak_rate) - privacy_amplification_penalty(p.eps_pa) / n - p.fs_coefficient * math.log2(1.0 / p.eps_s) / math.sqrt(n)
    return max(0.0, rate)


def finite_key_rate_curve(params: RateCurveParams) -> list[RatePoint]:
    """Secure key rate per symbol versus block size for the true and estimated entropy rate."""
    h = params.entropy_rate_bits
    h_est = h * (1.0 + params.delta)
    return [RatePoint(int(n), _rate(n, h, params), _rate(n, h_est, params)) for n in params.block_sizes]


def rate_threshold(h: float, params: RateCurveParams) -> float:
    """Smallest real ``N`` with a nonnegative key at entropy rate ``h``."""
    a = h - params.leak_rate
    if a <= 0:
        return math.inf
    b = params.fs_coefficient * math.log2(1.0 / params.eps_s)
    c = privacy_amplification_penalty(params.eps_pa)
    # a x^2 - b x - c = 0 with x = sqrt(N)
    x = (b + math.sqrt(b * b + 4.0 * a * c)) / (2.0 * a)
    return x * x
