"""
Analyst workloads.

RRQ draws random range queries: a view is picked with a configurable bias, and
for each of its attributes a range ``[s, s + o]`` is drawn with ``s`` and ``o``
normal, rounded and clamped into the attribute's buckets. BFS walks a
decomposition tree of a region, expanding a node while its noisy count falls
outside a threshold range.
"""

from __future__ import annotations

import math
from collections import deque
from collections.abc import Mapping, Sequence
from dataclasses import dataclass, field

import numpy as np
import structlog
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from dp_provenance.categories import SchedulerKind
from dp_provenance.errors import ParamValidationError, UnknownViewError, ensure
from dp_provenance.mechanisms.engine import QueryEngine, QueryOutcome
from dp_provenance.model.dataset import AttributeSpec, HistogramView
from dp_provenance.model.query import (
    AccuracyDemand,
    Analyst,
    BudgetDemand,
    LinearQuery,
    range_coefficients,
)
from dp_provenance.privacy.gauss import make_rng

logger = structlog.get_logger(__name__)


class RangeDistribution(BaseModel):
    """Normal start and offset of a range, in bucket units; unset fields use defaults."""

    model_config = ConfigDict(extra='forbid')

    start_mean: float | None = None
    start_std: float | None = Field(None, gt=0)
    offset_mean: float | None = None
    offset_std: float | None = Field(None, gt=0)

    def resolved(self, cardinality: int) -> tuple[float, float, float, float]:
        return (
            (cardinality - 1) / 2 if self.start_mean is None else self.start_mean,
            cardinality / 4 if self.start_std is None else self.start_std,
            cardinality / 8 if self.offset_mean is None else self.offset_mean,
            cardinality / 8 if self.offset_std is None else self.offset_std,
        )


class RrqConfig(BaseModel):
    model_config = ConfigDict(extra='forbid')

    queries_per_analyst: int = Field(500, gt=0)
    view_bias: dict[str, float] | None = Field(
        None, description='Probability of each view; uniform when unset.'
    )
    ranges: dict[str, RangeDistribution] = Field(
        default_factory=dict, description='Per-attribute range distributions.'
    )
    accuracy_range: tuple[float, float] = Field(
        (20.0, 200.0), description='Demanded variances are log-uniform in this range.'
    )
    budget: float | None = Field(
        None, gt=0, description='Ask for this epsilon instead of an accuracy.'
    )
    scheduler: SchedulerKind = SchedulerKind.ROUND_ROBIN
    seed: int = 0

    @field_validator('view_bias')
    @classmethod
    def _weights_sum_to_one(cls, value):
        if value is not None:
            if any(w < 0 for w in value.values()):
                raise ValueError('view weights must be non-negative')
            if not math.isclose(sum(value.values()), 1.0, abs_tol=1e-6):
                raise ValueError('view weights must sum to 1')
        return value

    @field_validator('accuracy_range')
    @classmethod
    def _positive_range(cls, value):
        low, high = value
        if not 0 < low <= high:
            raise ValueError('accuracy range must satisfy 0 < low <= high')
        return value


def sample_ranges(
    rng: np.random.Generator,
    attribute: AttributeSpec,
    distribution: RangeDistribution,
    size: int,
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Inclusive ``(low, high)`` bucket ranges and whether the start was clamped."""
    start_mean, start_std, offset_mean, offset_std = distribution.resolved(
        attribute.cardinality
    )
    top = attribute.cardinality - 1
    start = np.rint(rng.normal(start_mean, start_std, size=size))
    offset = np.maximum(np.rint(rng.normal(offset_mean, offset_std, size=size)), 0)
    clamped = (start < 0) | (start > top)
    low = np.clip(start, 0, top).astype(np.int64)
    high = np.clip(start + offset, low, top).astype(np.int64)
    return low, high, clamped


def _view_weights(config: RrqConfig, views: Mapping[str, HistogramView]) -> np.ndarray:
    if config.view_bias is None:
        return np.full(len(views), 1.0 / len(views))
    unknown = set(config.view_bias) - set(views)
    if unknown:
        raise UnknownViewError(sorted(unknown)[0])
    weights = np.asarray([config.view_bias.get(v, 0.0) for v in views])
    return weights / weights.sum()


def generate_rrq(
    config: RrqConfig,
    views: Mapping[str, HistogramView],
    analysts: Sequence[Analyst],
) -> list[LinearQuery]:
    """Every analyst's random range queries, interleaved by the configured scheduler."""
    ensure(len(views) > 0, 'RRQ needs at least one view')
    ensure(len(analysts) > 0, 'RRQ needs at least one analyst')
    attributes = {a.name for v in views.values() for a in v.attributes}
    unknown = set(config.ranges) - attributes
    if unknown:
        raise ParamValidationError(f'range distributions for unknown attributes {sorted(unknown)}')

    rng = make_rng(config.seed)
    view_ids = list(views)
    weights = _view_weights(config, views)
    n = config.queries_per_analyst
    per_analyst: list[list[LinearQuery]] = []
    for analyst in analysts:
        picks = rng.choice(len(view_ids), size=n, p=weights)
        log_low, log_high = np.log(config.accuracy_range)
        variances = np.exp(rng.uniform(log_low, log_high, size=n))
        queries = []
        for k in range(n):
            view = views[view_ids[picks[k]]]
            ranges = {}
            for attribute in view.attributes:
                low, high, _ = sample_ranges(
                    rng, attribute, config.ranges.get(attribute.name, RangeDistribution()), 1
                )
                ranges[attribute.name] = (int(low[0]), int(high[0]))
            demand = (
                BudgetDemand(config.budget)
                if config.budget is not None
                else AccuracyDemand(float(variances[k]))
            )
            queries.append(
                LinearQuery(
                    view.id,
                    range_coefficients(view, ranges),
                    analyst.id,
                    demand,
                    query_id=f'{analyst.id}-{k}',
                )
            )
        per_analyst.append(queries)
    return schedule(per_analyst, config.scheduler, rng)


def schedule(
    per_analyst: Sequence[Sequence[LinearQuery]],
    scheduler: SchedulerKind,
    rng: np.random.Generator,
) -> list[LinearQuery]:
    if SchedulerKind(scheduler) is SchedulerKind.ROUND_ROBIN:
        ordered = []
        longest = max((len(qs) for qs in per_analyst), default=0)
        for k in range(longest):
            ordered.extend(qs[k] for qs in per_analyst if k < len(qs))
        return ordered
    # Random interleaving keeps each analyst's own order.
    owners = np.concatenate(
        [np.full(len(qs), i, dtype=np.int64) for i, qs in enumerate(per_analyst)]
    )
    rng.shuffle(owners)
    cursors = [0] * len(per_analyst)
    ordered = []
    for owner in owners:
        ordered.append(per_analyst[owner][cursors[owner]])
        cursors[owner] += 1
    return ordered


class BfsConfig(BaseModel):
    model_config = ConfigDict(extra='forbid')

    view_id: str
    root_attributes: list[str] | None = Field(
        None, description="Attributes split by the tree; all of the view's when unset."
    )
    branching_factor: int = Field(2, ge=2)
    threshold_range: tuple[float, float] = Field(
        description='A node stops expanding once its noisy count lies in this range.'
    )
    accuracy: float = Field(gt=0, description='Demanded variance of every node query.')
    max_nodes: int = Field(10_000, gt=0)

    @model_validator(mode='after')
    def _ordered_threshold(self):
        low, high = self.threshold_range
        if low > high:
            raise ValueError('threshold range must satisfy low <= high')
        return self


Region = dict[str, tuple[int, int]]


@dataclass(frozen=True)
class BfsVisit:
    index: int
    depth: int
    region: Region
    outcome: QueryOutcome
    cumulative_budget: float
    expanded: bool


@dataclass
class BfsTrace:
    analyst_id: str
    visits: list[BfsVisit] = field(default_factory=list)
    partial: bool = False

    @property
    def budget_curve(self) -> list[float]:
        return [v.cumulative_budget for v in self.visits]


def split_region(
    region: Region, attributes: Sequence[str], branching_factor: int
) -> list[Region]:
    """Split the widest divisible attribute into near-equal, non-empty parts."""
    widths = {name: region[name][1] - region[name][0] + 1 for name in attributes}
    name = max(attributes, key=lambda a: widths[a])
    width = widths[name]
    if width <= 1:
        return []
    parts = min(branching_factor, width)
    low = region[name][0]
    bounds = np.linspace(0, width, parts + 1).round().astype(int)
    return [
        {**region, name: (low + int(bounds[i]), low + int(bounds[i + 1]) - 1)}
        for i in range(parts)
    ]


def run_bfs_task(engine: QueryEngine, config: BfsConfig, analyst_id: str) -> BfsTrace:
    try:
        view = engine.views[config.view_id]
    except KeyError:
        raise UnknownViewError(config.view_id) from None
    attributes = config.root_attributes or list(view.attribute_names)
    unknown = set(attributes) - set(view.attribute_names)
    ensure(not unknown, f'BFS attributes {sorted(unknown)} not in view {view.id!r}')

    root: Region = {a.name: (0, a.cardinality - 1) for a in view.attributes}
    low, high = config.threshold_range
    trace = BfsTrace(analyst_id)
    frontier: deque[tuple[Region, int]] = deque([(root, 0)])
    while frontier and len(trace.visits) < config.max_nodes:
        region, depth = frontier.popleft()
        q = LinearQuery(
            view.id,
            range_coefficients(view, region),
            analyst_id,
            AccuracyDemand(config.accuracy),
            query_id=f'{analyst_id}-bfs-{len(trace.visits)}',
        )
        outcome = engine.handle_query(q)
        if not outcome.answered:
            trace.partial = True
            trace.visits.append(
                BfsVisit(
                    len(trace.visits),
                    depth,
                    region,
                    outcome,
                    engine.table.row_total(analyst_id),
                    False,
                )
            )
            logger.info('run_bfs_task.rejected', analyst=analyst_id, visits=len(trace.visits))
            break
        children = [] if low <= outcome.value <= high else split_region(
            region, attributes, config.branching_factor
        )
        frontier.extend((child, depth + 1) for child in children)
        trace.visits.append(
            BfsVisit(
                len(trace.visits),
                depth,
                region,
                outcome,
                engine.table.row_total(analyst_id),
                bool(children),
            )
        )
    return trace
