"""
Mechanism strategies plugged into the query engine.

A strategy turns one query and its demand into an epsilon, asks the provenance
table whether that epsilon may be spent, and on success produces the noisy answer.
Rejections never change any state.
"""

from __future__ import annotations

from abc import ABC, abstractmethod
from dataclasses import replace
from typing import TYPE_CHECKING, ClassVar

import structlog

from dp_provenance.categories import (
    AnalystConstraintMode,
    MechanismKind,
    RejectionReason,
    SynopsisKind,
    ViewConstraintMode,
)
from dp_provenance.mechanisms.translation import (
    TARGET_MARGIN,
    AdditivePlan,
    per_bin_target,
    plan_additive,
    translate_accuracy,
)
from dp_provenance.model.dataset import HistogramView
from dp_provenance.model.query import (
    AccuracyDemand,
    Demand,
    LinearQuery,
    evaluate_query_true,
    query_sensitivity,
)
from dp_provenance.privacy.gauss import sigma_for
from dp_provenance.provenance.table import CheckResult, ProvenanceTable
from dp_provenance.synopses.synopsis import (
    EPSILON_SLACK,
    Synopsis,
    answer,
    build_global,
    combine_global,
    derive_local,
)

if TYPE_CHECKING:
    from dp_provenance.mechanisms.engine import QueryEngine, QueryOutcome

logger = structlog.get_logger(__name__)


def demanded_variance(
    q: LinearQuery, view: HistogramView, demand: Demand, delta: float
) -> float:
    """Largest query-level variance the demand accepts."""
    if isinstance(demand, AccuracyDemand):
        return demand.variance
    return q.squared_norm * sigma_for(demand.epsilon, delta, view.sensitivity) ** 2


def satisfies(
    synopsis: Synopsis, q: LinearQuery, demand: Demand, delta: float, view: HistogramView
) -> bool:
    _, variance = answer(synopsis, q)
    return variance <= demanded_variance(q, view, demand, delta)


def run_vanilla_mechanism(
    engine: QueryEngine, view: HistogramView, analyst_id: str, epsilon: float, delta: float
) -> Synopsis:
    """A fresh synopsis, independent of every earlier release, owned by one analyst."""
    fresh = build_global(view, epsilon, delta, engine.rng)
    return replace(fresh, kind=SynopsisKind.LOCAL, analyst_id=analyst_id)


def run_additive_mechanism(
    engine: QueryEngine,
    view: HistogramView,
    analyst_id: str,
    epsilon: float,
    delta: float,
    global_epsilon: float | None = None,
) -> Synopsis:
    """
    Grow the view's global synopsis to ``global_epsilon`` (by default ``epsilon``)
    if needed, then derive the analyst's local at ``epsilon``.
    """
    level = max(epsilon, global_epsilon or 0.0)
    current = engine.global_synopses.get(view.id)
    if current is None:
        current = build_global(view, level, delta, engine.rng)
    elif level > current.epsilon + EPSILON_SLACK:
        current = combine_global(current, view, level - current.epsilon, delta, engine.rng)
        stale = sorted(
            owner
            for (owner, view_id) in engine.local_synopses
            if view_id == view.id and owner != analyst_id
        )
        if stale:
            # Other analysts keep locals of the previous global until they ask again.
            logger.warning('run_additive_mechanism.stale_locals', view=view.id, analysts=stale)
    engine.global_synopses[view.id] = current
    local = derive_local(
        current,
        analyst_id,
        min(epsilon, current.epsilon),
        delta,
        engine.rng,
        sensitivity=view.sensitivity,
    )
    engine.local_synopses[(analyst_id, view.id)] = local
    return local


def run_baseline(
    engine: QueryEngine, q: LinearQuery, view: HistogramView, epsilon: float, delta: float
) -> tuple[float, float]:
    """Perturb the query answer itself, with noise scaled to the query's sensitivity."""
    sigma = sigma_for(epsilon, delta, query_sensitivity(q, view))
    value = evaluate_query_true(view, q) + float(engine.rng.normal(0.0, sigma))
    return value, sigma**2


class MechanismStrategy(ABC):
    kind: ClassVar[MechanismKind]
    # Whether the collusion bound of a column is its maximum entry.
    column_by_max: ClassVar[bool] = False

    def __init__(
        self,
        analyst_constraints: AnalystConstraintMode = AnalystConstraintMode.SUM_NORMALIZED,
        view_constraints: ViewConstraintMode = ViewConstraintMode.WATER_FILLING,
        cache_synopses: bool = True,
    ):
        self.analyst_constraints = AnalystConstraintMode(analyst_constraints)
        self.view_constraints = ViewConstraintMode(view_constraints)
        self.cache_synopses = cache_synopses

    def setup(self, engine: QueryEngine) -> None:
        pass

    @abstractmethod
    def process(
        self, engine: QueryEngine, q: LinearQuery, view: HistogramView, demand: Demand
    ) -> QueryOutcome: ...

    def __repr__(self) -> str:
        return (
            f'{type(self).__name__}({self.analyst_constraints.value}, '
            f'{self.view_constraints.value}, cache={self.cache_synopses})'
        )


class ChorusStrategy(MechanismStrategy):
    """Query-level Gaussian noise against one shared budget."""

    kind = MechanismKind.CHORUS

    def check(
        self, table: ProvenanceTable, q: LinearQuery, epsilon: float, delta: float
    ) -> CheckResult:
        return table.check_table_only(q.analyst_id, q.view_id, epsilon, delta)

    def process(self, engine, q, view, demand):
        delta = engine.delta_for(demand)
        if isinstance(demand, AccuracyDemand):
            epsilon = translate_accuracy(
                demand.variance * (1.0 - TARGET_MARGIN),
                delta,
                query_sensitivity(q, view),
                engine.config.precision,
                engine.config.table_cap,
            )
        else:
            epsilon = demand.epsilon
        check = self.check(engine.table, q, epsilon, delta)
        if not check.passed:
            return engine.reject(q, check.reason, epsilon)
        value, variance = run_baseline(engine, q, view, epsilon, delta)
        return engine.accept(q, check, value, variance, epsilon)


class ChorusPStrategy(ChorusStrategy):
    """Query-level noise with per-analyst provenance tracking."""

    kind = MechanismKind.CHORUS_P

    def check(self, table, q, epsilon, delta):
        return table.check_vanilla(q.analyst_id, q.view_id, epsilon, delta)


class VanillaStrategy(MechanismStrategy):
    """Independent synopses per request, composed by summation."""

    kind = MechanismKind.VANILLA

    def process(self, engine, q, view, demand):
        key = (q.analyst_id, view.id)
        delta = engine.delta_for(demand)
        cached = engine.local_synopses.get(key) if self.cache_synopses else None
        if cached is not None and satisfies(cached, q, demand, delta, view):
            return engine.accept_cached(q, cached)

        if isinstance(demand, AccuracyDemand):
            epsilon = translate_accuracy(
                per_bin_target(q, demand.variance),
                delta,
                view.sensitivity,
                engine.config.precision,
                engine.config.table_cap,
            )
        else:
            epsilon = demand.epsilon
        check = engine.table.check_vanilla(q.analyst_id, view.id, epsilon, delta)
        if not check.passed:
            return engine.reject(q, check.reason, epsilon)
        local = run_vanilla_mechanism(engine, view, q.analyst_id, epsilon, delta)
        if self.cache_synopses and (
            cached is None or local.per_bin_variance < cached.per_bin_variance
        ):
            engine.local_synopses[key] = local
        value, variance = answer(local, q)
        return engine.accept(q, check, value, variance, epsilon)


class AdditiveStrategy(MechanismStrategy):
    """One global synopsis per view; analysts get correlated local releases of it."""

    kind = MechanismKind.DPROVDB
    column_by_max = True

    def process(self, engine, q, view, demand):
        key = (q.analyst_id, view.id)
        delta = engine.delta_for(demand)
        cached = engine.local_synopses.get(key) if self.cache_synopses else None
        if cached is not None and satisfies(cached, q, demand, delta, view):
            return engine.accept_cached(q, cached)

        current = engine.global_synopses.get(view.id)
        current_epsilon = current.epsilon if current else 0.0
        if isinstance(demand, AccuracyDemand):
            plan = plan_additive(
                per_bin_target(q, demand.variance),
                current,
                delta,
                view.sensitivity,
                engine.config.precision,
                engine.config.table_cap,
            )
        else:
            plan = AdditivePlan(demand.epsilon, max(current_epsilon, demand.epsilon))
        epsilon = plan.epsilon
        check = engine.table.check_additive(
            q.analyst_id,
            view.id,
            epsilon,
            current_epsilon,
            delta,
            current.budget.delta if current else 0.0,
            required_global=plan.global_epsilon,
        )
        if not check.passed:
            return engine.reject(q, check.reason, epsilon)
        local = run_additive_mechanism(
            engine, view, q.analyst_id, epsilon, delta, global_epsilon=plan.global_epsilon
        )
        value, variance = answer(local, q)
        return engine.accept(q, check, value, variance, epsilon)


class StaticSynopsisStrategy(MechanismStrategy):
    """Every view is released once at startup; queries never trigger new noise."""

    kind = MechanismKind.S_PRIVATE_SQL
    column_by_max = True

    def setup(self, engine):
        for view_id, view in engine.views.items():
            epsilon = engine.table.column_caps[view_id]
            if epsilon <= 0:
                continue
            engine.global_synopses[view_id] = build_global(
                view, epsilon, engine.config.delta, engine.rng
            )
        logger.info(
            'StaticSynopsisStrategy.setup',
            views=len(engine.global_synopses),
            epsilons={v: s.epsilon for v, s in engine.global_synopses.items()},
        )

    def process(self, engine, q, view, demand):
        static = engine.global_synopses.get(view.id)
        delta = engine.delta_for(demand)
        if static is None or not satisfies(static, q, demand, delta, view):
            return engine.reject(
                q, RejectionReason.STATIC_ACCURACY, static.epsilon if static else 0.0
            )
        check = engine.table.check_additive(
            q.analyst_id,
            view.id,
            static.epsilon,
            static.epsilon,
            static.budget.delta,
            static.budget.delta,
        )
        if not check.passed:
            return engine.reject(q, check.reason, static.epsilon)
        value, variance = answer(static, q)
        return engine.accept(q, check, value, variance, static.epsilon)


STRATEGIES: dict[MechanismKind, type[MechanismStrategy]] = {
    cls.kind: cls
    for cls in (
        ChorusStrategy,
        ChorusPStrategy,
        VanillaStrategy,
        AdditiveStrategy,
        StaticSynopsisStrategy,
    )
}
