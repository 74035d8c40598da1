"""
Analytic Gaussian mechanism calibration and the additive Gaussian primitive.

The exact (epsilon, delta) condition for Gaussian noise of scale sigma on a query of
l2 sensitivity Delta is

    Phi(Delta / (2 sigma) - epsilon sigma / Delta)
        - exp(epsilon) Phi(-Delta / (2 sigma) - epsilon sigma / Delta) <= delta.

``sigma_for`` inverts it by bisection, ``translate_vanilla`` inverts the resulting
variance in epsilon, and ``additive_gm`` releases correlated answers to several
analysts from a single draw on the data.
"""

from __future__ import annotations

import math
from collections.abc import Sequence
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
import structlog
from scipy import special

from dp_provenance.errors import (
    CalibrationError,
    DuplicateAnalystError,
    InfeasibleTranslationError,
    ParamValidationError,
    ensure,
)

logger = structlog.get_logger(__name__)

# deltaAt is accurate to about 1e-15 absolute in double precision.
MIN_DELTA = 1e-12
EPSILON_FLOOR = 1e-6
DEFAULT_PRECISION = 1e-3
_MAX_BRACKET_STEPS = 200


def make_rng(seed: int | np.random.SeedSequence | None) -> np.random.Generator:
    """The only way randomness enters the engine: an explicit, seedable generator."""
    return np.random.default_rng(seed)


def _require_finite_positive(**values: float) -> None:
    for name, value in values.items():
        if not math.isfinite(value) or value <= 0:
            raise ParamValidationError(f'{name} must be finite and positive, got {value}')


def delta_at(epsilon: float, sigma: float, sensitivity: float = 1.0) -> float:
    """Smallest delta for which N(0, sigma^2) noise is (epsilon, delta)-DP."""
    _require_finite_positive(epsilon=epsilon, sigma=sigma, sensitivity=sensitivity)
    ratio = epsilon * sigma / sensitivity
    half = sensitivity / (2.0 * sigma)
    # exp(eps) * Phi(b) in log space keeps large epsilons finite.
    second = math.exp(epsilon + float(special.log_ndtr(-half - ratio)))
    value = float(special.ndtr(half - ratio)) - second
    return min(max(value, 0.0), 1.0)


def classical_sigma(epsilon: float, delta: float, sensitivity: float = 1.0) -> float:
    """The textbook bound Delta * sqrt(2 ln(1.25 / delta)) / epsilon."""
    return sensitivity * math.sqrt(2.0 * math.log(1.25 / delta)) / epsilon


def _clamp_delta(delta: float) -> float:
    if not 0 < delta < 1:
        raise ParamValidationError(f'delta must be in (0, 1), got {delta}')
    if delta < MIN_DELTA:
        logger.warning('delta_clamped', requested=delta, used=MIN_DELTA)
        return MIN_DELTA
    return delta


@lru_cache(maxsize=65536)
def _unit_sigma(epsilon: float, delta: float) -> float:
    def valid(sigma: float) -> bool:
        return delta_at(epsilon, sigma) <= delta

    low, high = 0.1, 2.0 * classical_sigma(epsilon, delta)
    steps = 0
    while not valid(high):
        high *= 2.0
        steps += 1
        if steps > _MAX_BRACKET_STEPS:
            raise CalibrationError(f'no upper bracket for epsilon={epsilon}, delta={delta}')
    low = min(low, high / 2.0)
    while valid(low):
        low /= 2.0
        steps += 1
        if steps > _MAX_BRACKET_STEPS:
            raise CalibrationError(f'no lower bracket for epsilon={epsilon}, delta={delta}')

    for _ in range(_MAX_BRACKET_STEPS):
        mid = 0.5 * (low + high)
        if mid in (low, high) or high - low <= 1e-13 * high:
            break
        if valid(mid):
            high = mid
        else:
            low = mid
    return high


def sigma_for(epsilon: float, delta: float, sensitivity: float = 1.0) -> float:
    """
    Smallest noise scale making the Gaussian mechanism (epsilon, delta)-DP.

    The condition depends on sigma only through sigma / Delta, so the search runs
    at unit sensitivity and scales the result.
    """
    _require_finite_positive(epsilon=epsilon, sensitivity=sensitivity)
    delta = _clamp_delta(delta)
    return sensitivity * _unit_sigma(float(epsilon), float(delta))


@dataclass(frozen=True)
class GaussianCalibration:
    epsilon: float
    delta: float
    sensitivity: float
    sigma: float

    @classmethod
    def calibrate(
        cls, epsilon: float, delta: float, sensitivity: float = 1.0
    ) -> GaussianCalibration:
        return cls(epsilon, delta, sensitivity, sigma_for(epsilon, delta, sensitivity))

    @property
    def variance(self) -> float:
        return self.sigma**2

    def holds(self, tolerance: float = 1e-12) -> bool:
        return delta_at(self.epsilon, self.sigma, self.sensitivity) <= self.delta + tolerance


def translate_vanilla(
    sensitivity: float,
    target_variance: float,
    delta: float,
    precision: float = DEFAULT_PRECISION,
    upper_bound: float = 6.4,
) -> float:
    """
    Minimal epsilon, within ``precision``, whose calibrated variance meets the target.

    Bisection keeps an invalid lower end (variance above target) and a valid upper
    end and stops once they are ``precision`` apart; the valid end is returned.
    """
    _require_finite_positive(
        target_variance=target_variance, precision=precision, upper_bound=upper_bound
    )

    def valid(epsilon: float) -> bool:
        return sigma_for(epsilon, delta, sensitivity) ** 2 <= target_variance

    if not valid(upper_bound):
        raise InfeasibleTranslationError(
            f'variance {target_variance:.6g} unreachable within epsilon {upper_bound}'
        )
    low = min(EPSILON_FLOOR, upper_bound)
    if valid(low):
        return low
    high = upper_bound
    while high - low > precision:
        mid = 0.5 * (low + high)
        if valid(mid):
            high = mid
        else:
            low = mid
    return high


def gaussian_increment(
    base: np.ndarray,
    from_variance: float,
    to_variance: float,
    rng: np.random.Generator,
) -> np.ndarray:
    """Add independent noise raising per-coordinate variance from one level to another."""
    extra = to_variance - from_variance
    if extra < 0:
        raise ParamValidationError(
            f'cannot lower variance from {from_variance:.6g} to {to_variance:.6g}'
        )
    if extra == 0:
        return np.array(base, dtype=np.float64, copy=True)
    return base + rng.normal(0.0, math.sqrt(extra), size=np.shape(base))


def variance_increments(variances: Sequence[float]) -> list[float]:
    """Per-step added variance along an ascending chain; telescopes to each entry."""
    increments = []
    previous = 0.0
    for variance in variances:
        ensure(variance >= previous, 'variance chain must be non-decreasing')
        increments.append(variance - previous)
        previous = variance
    return increments


def additive_gm(
    true_answer: np.ndarray,
    budgets: Sequence[tuple[str, float]],
    delta: float,
    sensitivity: float,
    rng: np.random.Generator,
    base_variance: float = 0.0,
) -> dict[str, np.ndarray]:
    """
    Release ``true_answer`` to several analysts with correlated Gaussian noise.

    The data is perturbed once, for the least-noise analyst; every other analyst
    receives the previous release plus the variance difference. Each analyst's
    marginal noise is exactly N(0, sigma_i^2); jointly the releases are
    post-processing of the first one.

    ``true_answer`` may already carry noise of variance ``base_variance``, as a
    global synopsis does. An analyst asking for less variance than that receives
    the base itself.
    """
    ensure(len(budgets) > 0, 'additive_gm needs at least one budget')
    ensure(base_variance >= 0, f'base variance must be non-negative, got {base_variance}')
    seen = set()
    for analyst_id, epsilon in budgets:
        if analyst_id in seen:
            raise DuplicateAnalystError(analyst_id)
        seen.add(analyst_id)
        ensure(epsilon > 0, f'epsilon for {analyst_id!r} must be positive')

    variances = {
        analyst_id: max(sigma_for(epsilon, delta, sensitivity) ** 2, base_variance)
        for analyst_id, epsilon in budgets
    }
    # Ascending sigma rather than descending epsilon stays correct if delta varies.
    order = sorted(variances, key=variances.__getitem__)

    releases: dict[str, np.ndarray] = {}
    previous = np.asarray(true_answer, dtype=np.float64)
    previous_variance = base_variance
    for analyst_id in order:
        previous = gaussian_increment(
            previous, previous_variance, variances[analyst_id], rng
        )
        previous_variance = variances[analyst_id]
        releases[analyst_id] = previous
    logger.debug('additive_gm', analysts=order, sensitivity=sensitivity)
    return releases
