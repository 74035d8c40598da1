from __future__ import annotations

import json
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np
import structlog

from dp_provenance.categories import SynopsisKind
from dp_provenance.errors import ParamValidationError, QueryShapeError, SequencingError, ensure
from dp_provenance.model.dataset import HistogramView
from dp_provenance.model.query import LinearQuery, PrivacyBudget
from dp_provenance.privacy.gauss import additive_gm, sigma_for

logger = structlog.get_logger(__name__)

# Budgets are compared with this slack so that epsilon sums round-trip.
EPSILON_SLACK = 1e-12


@dataclass(frozen=True)
class LineageRecord:
    """One independent Gaussian release folded into a global synopsis."""

    weight: float
    source_variance: float
    epsilon: float


@dataclass(frozen=True, eq=False)
class Synopsis:
    """
    A noisy release of a histogram view.

    Global synopses are hidden from analysts and carry their cumulative budget and
    combination lineage. Local synopses are derived from a global one for a single
    analyst and carry the budget released to that analyst.
    """

    view_id: str
    noisy_counts: np.ndarray
    per_bin_variance: float
    budget: PrivacyBudget
    kind: SynopsisKind = SynopsisKind.GLOBAL
    analyst_id: str | None = None
    lineage: tuple[LineageRecord, ...] = ()

    def __post_init__(self) -> None:
        ensure(self.per_bin_variance > 0, 'synopsis variance must be positive')
        ensure(
            (self.kind is SynopsisKind.LOCAL) == (self.analyst_id is not None),
            'local synopses, and only those, belong to an analyst',
        )
        counts = np.array(self.noisy_counts, dtype=np.float64)
        counts.setflags(write=False)
        object.__setattr__(self, 'noisy_counts', counts)

    @property
    def epsilon(self) -> float:
        return self.budget.epsilon

    @property
    def is_global(self) -> bool:
        return self.kind is SynopsisKind.GLOBAL

    def lineage_variance(self) -> float:
        return sum(r.weight**2 * r.source_variance for r in self.lineage)

    def to_snapshot(self) -> dict:
        return {
            'view_id': self.view_id,
            'kind': self.kind.value,
            'analyst_id': self.analyst_id,
            'epsilon': self.budget.epsilon,
            'delta': self.budget.delta,
            'per_bin_variance': self.per_bin_variance,
            'lineage': [
                {'weight': r.weight, 'source_variance': r.source_variance, 'epsilon': r.epsilon}
                for r in self.lineage
            ],
            'counts': self.noisy_counts.tolist(),
        }

    def export_json(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_snapshot(), indent=2))


def build_global(
    view: HistogramView, epsilon: float, delta: float, rng: np.random.Generator
) -> Synopsis:
    ensure(epsilon > 0, f'epsilon must be positive, got {epsilon}')
    sigma = sigma_for(epsilon, delta, view.sensitivity)
    counts = view.true_counts + rng.normal(0.0, sigma, size=view.bin_count)
    variance = sigma**2
    logger.debug('build_global', view=view.id, epsilon=epsilon, variance=variance)
    return Synopsis(
        view_id=view.id,
        noisy_counts=counts,
        per_bin_variance=variance,
        budget=PrivacyBudget(epsilon, delta),
        lineage=(LineageRecord(1.0, variance, epsilon),),
    )


def combination_weight(old_variance: float, fresh_variance: float) -> float:
    """Inverse-variance weight of the fresh release."""
    return old_variance / (fresh_variance + old_variance)


def combine_synopses(old: Synopsis, fresh: Synopsis) -> Synopsis:
    """(1 - w) old + w fresh with the minimum-variance weight."""
    if not (old.is_global and fresh.is_global):
        raise SequencingError('only global synopses are combined')
    ensure(old.view_id == fresh.view_id, 'cannot combine synopses of different views')
    v_old, v_fresh = old.per_bin_variance, fresh.per_bin_variance
    w = combination_weight(v_old, v_fresh)
    lineage = tuple(replace(r, weight=r.weight * (1.0 - w)) for r in old.lineage)
    lineage += tuple(replace(r, weight=r.weight * w) for r in fresh.lineage)
    return Synopsis(
        view_id=old.view_id,
        noisy_counts=(1.0 - w) * old.noisy_counts + w * fresh.noisy_counts,
        per_bin_variance=v_old * v_fresh / (v_old + v_fresh),
        budget=old.budget + fresh.budget,
        lineage=lineage,
    )


def combine_global(
    old: Synopsis,
    view: HistogramView,
    fresh_epsilon: float,
    delta: float,
    rng: np.random.Generator,
) -> Synopsis:
    """Spend ``fresh_epsilon`` on a new release of ``view`` and fold it into ``old``."""
    if not old.is_global:
        raise SequencingError('combine_global needs a global synopsis')
    if fresh_epsilon <= 0:
        raise ParamValidationError(f'fresh epsilon must be positive, got {fresh_epsilon}')
    combined = combine_synopses(old, build_global(view, fresh_epsilon, delta, rng))
    logger.info(
        'combine_global',
        view=view.id,
        epsilon=combined.epsilon,
        variance=combined.per_bin_variance,
        releases=len(combined.lineage),
    )
    return combined


def derive_local(
    global_synopsis: Synopsis,
    analyst_id: str,
    epsilon: float,
    delta: float,
    rng: np.random.Generator,
    sensitivity: float = 1.0,
) -> Synopsis:
    """
    A local synopsis at ``epsilon`` generated from the global one by adding noise.

    This is ``additive_gm`` for a single analyst, run on the global synopsis as its
    base release.

    Combined globals carry more variance than a single release at their cumulative
    epsilon. When the requested level is already covered by the global variance the
    local is the global itself: an exact Gaussian release with at least the
    requested variance.
    """
    if not global_synopsis.is_global:
        raise SequencingError('locals are only derived from a global synopsis')
    ensure(epsilon > 0, f'epsilon must be positive, got {epsilon}')
    if epsilon > global_synopsis.epsilon + EPSILON_SLACK:
        raise SequencingError(
            f'local at epsilon {epsilon} requested from a global at {global_synopsis.epsilon}'
        )
    target = sigma_for(epsilon, delta, sensitivity) ** 2
    base_variance = global_synopsis.per_bin_variance
    if target < base_variance:
        logger.debug(
            'derive_local.friction',
            view=global_synopsis.view_id,
            analyst=analyst_id,
            requested=target,
            global_variance=base_variance,
        )
        target = base_variance
    counts = additive_gm(
        global_synopsis.noisy_counts,
        [(analyst_id, epsilon)],
        delta,
        sensitivity,
        rng,
        base_variance=base_variance,
    )[analyst_id]
    return Synopsis(
        view_id=global_synopsis.view_id,
        noisy_counts=counts,
        per_bin_variance=target,
        budget=PrivacyBudget(epsilon, delta),
        kind=SynopsisKind.LOCAL,
        analyst_id=analyst_id,
        lineage=global_synopsis.lineage,
    )


def answer_coefficients(
    synopsis: Synopsis, coefficients: np.ndarray
) -> tuple[float, float]:
    coefficients = np.asarray(coefficients, dtype=np.float64)
    if coefficients.shape != synopsis.noisy_counts.shape:
        raise QueryShapeError(
            f'{coefficients.size} coefficients for {synopsis.noisy_counts.size} bins'
        )
    value = float(coefficients @ synopsis.noisy_counts)
    variance = float(coefficients @ coefficients) * synopsis.per_bin_variance
    return value, variance


def answer(synopsis: Synopsis, q: LinearQuery) -> tuple[float, float]:
    """Noisy answer of ``q`` and its expected squared error under iid bin noise."""
    if q.view_id != synopsis.view_id:
        raise QueryShapeError(f'query targets {q.view_id!r}, not {synopsis.view_id!r}')
    return answer_coefficients(synopsis, q.coefficients)
