"""
Accuracy to privacy translation.

An analyst states the expected squared error ``v_i`` they accept on a linear query.
Bins are perturbed independently, so a per-bin variance of ``v_i / ||c||^2`` makes
the query answer meet ``v_i`` exactly. Translation finds the smallest epsilon whose
calibrated variance reaches that per-bin target.

When a global synopsis already exists, a fresh release at some epsilon is combined
with it. The fresh release only has to reach the variance ``v_t`` for which the
inverse-variance combination hits the target:

    1 / v_t = 1 / v_i - 1 / v'

which is the maximum over w of ``(v_i - w^2 v') / (1 - w)^2``, attained at
``w = v_i / v'``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import structlog
from scipy import optimize

from dp_provenance.errors import InfeasibleTranslationError, ensure
from dp_provenance.model.query import LinearQuery
from dp_provenance.privacy.gauss import DEFAULT_PRECISION, translate_vanilla
from dp_provenance.synopses.synopsis import Synopsis

logger = structlog.get_logger(__name__)

# Per-bin targets are shaved by this relative margin so that ||c||^2 * v_bin
# never rounds above the demanded variance.
TARGET_MARGIN = 1e-12


def per_bin_target(q: LinearQuery, variance: float) -> float:
    ensure(variance > 0, f'accuracy demand must be positive, got {variance}')
    return variance / q.squared_norm * (1.0 - TARGET_MARGIN)


def friction_objective(w: float, target: float, existing: float) -> float:
    """Variance a fresh release may have when mixed in with weight ``w``."""
    return (target - w * w * existing) / (1.0 - w) ** 2


def friction_weight(target: float, existing: float) -> float:
    ensure(0 < target < existing, 'friction needs 0 < target < existing variance')
    return target / existing


def friction_variance(target: float, existing: float) -> float:
    """Largest fresh variance whose combination with ``existing`` reaches ``target``."""
    ensure(0 < target < existing, 'friction needs 0 < target < existing variance')
    return 1.0 / (1.0 / target - 1.0 / existing)


def friction_variance_numeric(target: float, existing: float) -> tuple[float, float]:
    """Bounded scalar search for the friction maximizer; returns ``(w, v_t)``."""
    ensure(0 < target < existing, 'friction needs 0 < target < existing variance')
    result = optimize.minimize_scalar(
        lambda w: -friction_objective(w, target, existing),
        bounds=(0.0, min(1.0 - 1e-12, 2.0 * target / existing)),
        method='bounded',
        options={'xatol': 1e-12},
    )
    return float(result.x), -float(result.fun)


def translate_accuracy(
    target: float,
    delta: float,
    sensitivity: float,
    precision: float = DEFAULT_PRECISION,
    upper_bound: float = 6.4,
) -> float:
    """Smallest epsilon, within ``precision``, whose per-bin variance meets ``target``."""
    return translate_vanilla(sensitivity, target, delta, precision, upper_bound)


@dataclass(frozen=True)
class AdditivePlan:
    """Epsilon of the local release and the level the global synopsis must reach."""

    epsilon: float
    global_epsilon: float


def plan_additive(
    target: float,
    current_global: Synopsis | None,
    delta: float,
    sensitivity: float = 1.0,
    precision: float = DEFAULT_PRECISION,
    upper_bound: float = 6.4,
) -> AdditivePlan:
    """
    Plan an accuracy-mode local release against the view's global synopsis.

    The local epsilon never exceeds the vanilla translation of ``target``, so an
    analyst is never charged more than an independent synopsis would cost. Without
    a global synopsis both levels equal that translation. When the global is already
    accurate enough it stays put. Otherwise the global grows by the fresh epsilon
    that the friction-optimal combination needs.
    """
    epsilon = translate_accuracy(target, delta, sensitivity, precision, upper_bound)
    if current_global is None:
        return AdditivePlan(epsilon, epsilon)
    existing = current_global.per_bin_variance
    if existing <= target:
        return AdditivePlan(min(epsilon, current_global.epsilon), current_global.epsilon)
    fresh_target = friction_variance(target, existing) * (1.0 - TARGET_MARGIN)
    if not math.isfinite(fresh_target) or fresh_target <= 0:
        raise InfeasibleTranslationError(f'friction target {fresh_target} unusable')
    fresh = translate_accuracy(fresh_target, delta, sensitivity, precision, upper_bound)
    grown = current_global.epsilon + fresh
    logger.debug(
        'plan_additive.friction',
        target=target,
        existing=existing,
        weight=friction_weight(target, existing),
        fresh_variance=fresh_target,
        fresh_epsilon=fresh,
        local_epsilon=min(epsilon, grown),
    )
    return AdditivePlan(min(epsilon, grown), grown)


def translate_additive(
    target: float,
    current_global: Synopsis | None,
    delta: float,
    sensitivity: float = 1.0,
    precision: float = DEFAULT_PRECISION,
    upper_bound: float = 6.4,
) -> float:
    """Epsilon of the local release that meets the per-bin ``target``."""
    return plan_additive(
        target, current_global, delta, sensitivity, precision, upper_bound
    ).epsilon
