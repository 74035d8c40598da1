from __future__ import annotations

from collections.abc import Iterable
from dataclasses import asdict, dataclass

import structlog
from pydantic import BaseModel, ConfigDict, Field

from dp_provenance.categories import (
    AnalystConstraintMode,
    CompositionMode,
    MechanismKind,
    OutcomeStatus,
    RejectionReason,
    ViewConstraintMode,
)
from dp_provenance.errors import (
    InfeasibleTranslationError,
    ParamValidationError,
    QueryShapeError,
    SequencingError,
    UnknownAnalystError,
    UnknownViewError,
)
from dp_provenance.mechanisms.strategies import MechanismStrategy
from dp_provenance.model.dataset import HistogramView
from dp_provenance.model.query import (
    L_MAX,
    AccuracyDemand,
    Analyst,
    BudgetDemand,
    Demand,
    LinearQuery,
    PrivacyBudget,
)
from dp_provenance.privacy.accountant import PrivacyLedger
from dp_provenance.privacy.gauss import DEFAULT_PRECISION, make_rng
from dp_provenance.provenance.constraints import (
    configure_analyst_constraints_max_normalized,
    configure_analyst_constraints_sum_normalized,
    configure_view_constraints_static,
    configure_view_constraints_water_filling,
)
from dp_provenance.provenance.corruption import CorruptionGraph
from dp_provenance.provenance.table import CheckResult, ProvenanceTable
from dp_provenance.synopses.synopsis import Synopsis, answer

logger = structlog.get_logger(__name__)


class EngineConfig(BaseModel):
    model_config = ConfigDict(extra='forbid')

    mechanism: MechanismKind = Field(
        MechanismKind.DPROVDB, description='Mechanism answering every query of the run.'
    )
    table_cap: float = Field(6.4, gt=0, description='Table constraint on total epsilon.')
    delta: float = Field(1e-9, gt=0, lt=1, description='Delta spent per release.')
    delta_cap: float | None = Field(
        None, gt=0, le=1, description='Ceiling on total delta; 1/|dataset| when unset.'
    )
    precision: float = Field(DEFAULT_PRECISION, gt=0, description='Translation precision.')
    analyst_constraints: AnalystConstraintMode | None = Field(
        None, description="Row cap policy; the mechanism's default when unset."
    )
    view_constraints: ViewConstraintMode | None = Field(
        None, description="Column cap policy; the mechanism's default when unset."
    )
    cache_synopses: bool | None = Field(
        None, description='Answer from stored local synopses when accurate enough.'
    )
    tau: float = Field(1.0, ge=1, description='Expansion of max-normalized row caps.')
    l_max: int | None = Field(
        None,
        ge=1,
        le=L_MAX,
        description='Highest privilege in the system; the largest startup privilege if unset.',
    )
    corruption_edges: list[tuple[str, str]] = Field(
        default_factory=list, description='Analyst pairs that may collude.'
    )
    corruption_t: int | None = Field(
        None, ge=2, description='Every collusion component has fewer analysts than this.'
    )
    composition: CompositionMode = Field(
        CompositionMode.BASIC, description='Composition used for ledger reports.'
    )
    seed: int | None = Field(0, description='Seed of the only random generator.')


@dataclass(frozen=True)
class QueryOutcome:
    index: int
    analyst_id: str
    view_id: str
    query_id: str | None
    status: OutcomeStatus
    requested_epsilon: float | None = None
    value: float | None = None
    variance_bound: float | None = None
    charged_epsilon: float = 0.0
    charged_delta: float = 0.0
    reason: RejectionReason | None = None
    cached: bool = False

    @property
    def answered(self) -> bool:
        return self.status is OutcomeStatus.ANSWERED

    def to_record(self) -> dict:
        record = asdict(self)
        record['status'] = self.status.value
        record['reason'] = self.reason.value if self.reason else None
        return record


class QueryEngine:
    """
    The query loop: receive a query, pick its epsilon, check the provenance table,
    answer or reject.

    One mechanism strategy serves the whole run. All randomness comes from one
    generator seeded from the configuration, so a run is reproducible.
    """

    def __init__(
        self,
        views: Iterable[HistogramView],
        analysts: Iterable[Analyst],
        config: EngineConfig | None = None,
        *,
        strategy: MechanismStrategy | None = None,
    ):
        self.config = config or EngineConfig()
        self.strategy = strategy or load_strategy(self.config)
        self.views: dict[str, HistogramView] = {}
        for view in views:
            if view.id in self.views:
                raise ParamValidationError(f'duplicate view {view.id!r}')
            self.views[view.id] = view
        analysts = list(analysts)
        if not analysts:
            raise ParamValidationError('the engine needs at least one analyst')

        self.rng = make_rng(self.config.seed)
        self.table = ProvenanceTable(self.config.table_cap, self._delta_cap())
        self.ledger = PrivacyLedger(self.config.composition)
        self.global_synopses: dict[str, Synopsis] = {}
        self.local_synopses: dict[tuple[str, str], Synopsis] = {}
        self.trace: list[QueryOutcome] = []
        self.submitted: list[LinearQuery] = []
        self._granted: dict[tuple, Demand] = {}
        self.l_max = self.config.l_max or max(a.privilege for a in analysts)

        for analyst in analysts:
            self.table.register_analyst(analyst)
            self.ledger.register(analyst.id)
        self._configure_rows(analysts)
        for view_id in self.views:
            self.table.register_view(view_id)
        self._configure_columns()
        self.strategy.setup(self)
        logger.info(
            'QueryEngine.init',
            mechanism=self.strategy.kind.value,
            strategy=repr(self.strategy),
            analysts=len(analysts),
            views=len(self.views),
            table_cap=self.config.table_cap,
            delta_cap=self.table.delta_cap,
        )

    def _delta_cap(self) -> float:
        if self.config.delta_cap is not None:
            return self.config.delta_cap
        rows = max((int(v.true_counts.sum()) for v in self.views.values()), default=0)
        return min(1.0, 1.0 / rows) if rows else 1.0

    @property
    def analyst_mode(self) -> AnalystConstraintMode:
        if self.config.corruption_edges:
            return AnalystConstraintMode.CORRUPTION_GRAPH
        return self.config.analyst_constraints or self.strategy.analyst_constraints

    @property
    def view_mode(self) -> ViewConstraintMode:
        return self.config.view_constraints or self.strategy.view_constraints

    def _configure_rows(self, analysts: list[Analyst]) -> None:
        psi_p = self.config.table_cap
        mode = self.analyst_mode
        if mode is AnalystConstraintMode.SUM_NORMALIZED:
            caps = configure_analyst_constraints_sum_normalized(analysts, psi_p)
        elif mode is AnalystConstraintMode.MAX_NORMALIZED:
            caps = configure_analyst_constraints_max_normalized(
                analysts, psi_p, self.l_max, self.config.tau
            )
        elif mode is AnalystConstraintMode.CORRUPTION_GRAPH:
            graph = CorruptionGraph.from_pairs(
                [a.id for a in analysts],
                self.config.corruption_edges,
                self.config.corruption_t or len(analysts) + 1,
            )
            caps = graph.assign_row_caps(analysts, psi_p)
            self.table.set_components(graph.components)
        else:
            caps = {a.id: psi_p for a in analysts}
        self.table.set_row_caps(caps)

    def _configure_columns(self) -> None:
        if not self.views:
            return
        if self.view_mode is ViewConstraintMode.STATIC_SPLIT:
            caps = configure_view_constraints_static(
                {view_id: v.sensitivity for view_id, v in self.views.items()},
                self.config.table_cap,
            )
        else:
            caps = configure_view_constraints_water_filling(self.views, self.config.table_cap)
        self.table.set_column_caps(caps)

    def register_analyst(self, analyst: Analyst) -> None:
        """Admit an analyst after startup; only caps computed per analyst allow it."""
        mode = self.analyst_mode
        if mode is AnalystConstraintMode.MAX_NORMALIZED:
            cap = configure_analyst_constraints_max_normalized(
                [analyst], self.config.table_cap, self.l_max, self.config.tau
            )[analyst.id]
        elif mode is AnalystConstraintMode.UNCONSTRAINED:
            cap = self.config.table_cap
        else:
            raise SequencingError(f'{mode.value} row caps need every analyst up front')
        self.table.register_analyst(analyst, cap)
        self.ledger.register(analyst.id)

    def add_view(self, view: HistogramView) -> None:
        if self.view_mode is ViewConstraintMode.STATIC_SPLIT:
            raise SequencingError('static view splits are fixed at startup')
        if view.id in self.views:
            raise ParamValidationError(f'duplicate view {view.id!r}')
        self.views[view.id] = view
        self.table.register_view(view.id, self.config.table_cap)

    # query loop

    def delta_for(self, demand: Demand) -> float:
        if isinstance(demand, BudgetDemand) and demand.delta is not None:
            return demand.delta
        return self.config.delta

    def _clamp_demand(self, q: LinearQuery) -> Demand:
        """Repeat demands never ask for less accuracy than was already granted."""
        demand = q.demand
        previous = self._granted.get(q.signature)
        if previous is None or type(previous) is not type(demand):
            return demand
        looser = (
            demand.variance > previous.variance
            if isinstance(demand, AccuracyDemand)
            else demand.epsilon < previous.epsilon
        )
        if looser:
            logger.warning(
                'QueryEngine.demand_clamped',
                analyst=q.analyst_id,
                view=q.view_id,
                requested=demand,
                granted=previous,
            )
            return previous
        return demand

    def _validate(self, q: LinearQuery) -> HistogramView:
        try:
            view = self.views[q.view_id]
        except KeyError:
            raise UnknownViewError(q.view_id) from None
        if q.analyst_id not in self.table.analysts:
            raise UnknownAnalystError(q.analyst_id)
        if q.coefficients.shape != (view.bin_count,):
            raise QueryShapeError(
                f'query has {q.coefficients.size} coefficients, view {view.id!r} '
                f'has {view.bin_count} bins'
            )
        if not isinstance(q.demand, (AccuracyDemand, BudgetDemand)):
            raise ParamValidationError(f'malformed demand {q.demand!r}')
        return view

    def handle_query(self, q: LinearQuery) -> QueryOutcome:
        view = self._validate(q)
        demand = self._clamp_demand(q)
        try:
            outcome = self.strategy.process(self, q, view, demand)
        except InfeasibleTranslationError as exc:
            logger.info('QueryEngine.infeasible', analyst=q.analyst_id, error=str(exc))
            outcome = self.reject(q, RejectionReason.INFEASIBLE, None)
        if outcome.answered:
            self._granted[q.signature] = demand
        self.submitted.append(q)
        self.trace.append(outcome)
        return outcome

    def run(self, queries: Iterable[LinearQuery]) -> list[QueryOutcome]:
        return [self.handle_query(q) for q in queries]

    # outcomes, used by strategies

    def _outcome(self, q: LinearQuery, status: OutcomeStatus, **fields) -> QueryOutcome:
        return QueryOutcome(
            index=len(self.trace),
            analyst_id=q.analyst_id,
            view_id=q.view_id,
            query_id=q.query_id,
            status=status,
            **fields,
        )

    def accept(
        self,
        q: LinearQuery,
        check: CheckResult,
        value: float,
        variance: float,
        epsilon: float,
    ) -> QueryOutcome:
        """Charge a passed check and report the answer."""
        self.table.charge(
            q.analyst_id,
            q.view_id,
            check.charge,
            check.delta_charge,
            note=self.strategy.kind.value,
            global_epsilon=check.global_epsilon,
            global_delta=check.global_delta,
        )
        if check.charge > 0 or check.delta_charge > 0:
            self.ledger.charge(q.analyst_id, PrivacyBudget(check.charge, check.delta_charge))
        return self._outcome(
            q,
            OutcomeStatus.ANSWERED,
            requested_epsilon=epsilon,
            value=value,
            variance_bound=variance,
            charged_epsilon=check.charge,
            charged_delta=check.delta_charge,
        )

    def accept_cached(self, q: LinearQuery, synopsis: Synopsis) -> QueryOutcome:
        value, variance = answer(synopsis, q)
        self.table.charge(q.analyst_id, q.view_id, 0.0, 0.0, note='cached')
        return self._outcome(
            q,
            OutcomeStatus.ANSWERED,
            requested_epsilon=0.0,
            value=value,
            variance_bound=variance,
            cached=True,
        )

    def reject(
        self, q: LinearQuery, reason: RejectionReason, epsilon: float | None
    ) -> QueryOutcome:
        self.table.reject(q.analyst_id, q.view_id, epsilon or 0.0, reason)
        return self._outcome(
            q, OutcomeStatus.REJECTED, requested_epsilon=epsilon, reason=reason
        )

    # reporting

    def consumed(self) -> dict[str, float]:
        return {analyst_id: self.table.row_total(analyst_id) for analyst_id in self.table.analysts}

    def audit(self) -> list[str]:
        return self.table.audit(column_by_max=self.strategy.column_by_max)


def load_strategy(config: EngineConfig) -> MechanismStrategy:
    """Build the configured mechanism from its entry point, applying config overrides."""
    from dp_provenance import mechanisms
    from dp_provenance.entry_points import MECHANISM_GROUP, resolve

    entry_point = resolve(
        MECHANISM_GROUP, MechanismKind(config.mechanism).value, mechanisms.BUILTIN
    )
    overrides = {
        key: value
        for key, value in {
            'analyst_constraints': config.analyst_constraints,
            'view_constraints': config.view_constraints,
            'cache_synopses': config.cache_synopses,
        }.items()
        if value is not None
    }
    if overrides:
        entry_point = entry_point.model_copy(update=overrides)
    return entry_point.load()
