from __future__ import annotations

from collections.abc import Mapping
from dataclasses import dataclass
from typing import Union

import numpy as np

from dp_provenance.errors import ParamValidationError, QueryShapeError, ensure
from dp_provenance.model.dataset import HistogramView

L_MAX = 10


@dataclass(frozen=True)
class Analyst:
    id: str
    privilege: int = 1

    def __post_init__(self) -> None:
        if not 1 <= self.privilege <= L_MAX:
            raise ParamValidationError(
                f'privilege of {self.id!r} must be in [1, {L_MAX}], got {self.privilege}'
            )


@dataclass(frozen=True)
class PrivacyBudget:
    epsilon: float = 0.0
    delta: float = 0.0

    def __post_init__(self) -> None:
        ensure(self.epsilon >= 0, f'epsilon must be non-negative, got {self.epsilon}')
        ensure(0 <= self.delta < 1, f'delta must be in [0, 1), got {self.delta}')

    def __add__(self, other: PrivacyBudget) -> PrivacyBudget:
        return PrivacyBudget(self.epsilon + other.epsilon, self.delta + other.delta)

    def to_dict(self) -> dict[str, float]:
        return {'epsilon': self.epsilon, 'delta': self.delta}


@dataclass(frozen=True)
class AccuracyDemand:
    """Expected squared error the analyst accepts on the query answer."""

    variance: float

    def __post_init__(self) -> None:
        ensure(self.variance > 0, f'accuracy demand must be positive, got {self.variance}')


@dataclass(frozen=True)
class BudgetDemand:
    epsilon: float
    delta: float | None = None

    def __post_init__(self) -> None:
        ensure(self.epsilon > 0, f'budget demand must be positive, got {self.epsilon}')


Demand = Union[AccuracyDemand, BudgetDemand]


@dataclass(frozen=True, eq=False)
class LinearQuery:
    """A linear combination of the bins of one view, asked by one analyst."""

    view_id: str
    coefficients: np.ndarray
    analyst_id: str
    demand: Demand
    query_id: str | None = None

    def __post_init__(self) -> None:
        coefficients = np.array(self.coefficients, dtype=np.float64).ravel()
        if not np.all(np.isfinite(coefficients)):
            raise QueryShapeError('coefficients must be finite')
        if not np.any(coefficients):
            raise QueryShapeError('a query needs at least one nonzero coefficient')
        coefficients.setflags(write=False)
        object.__setattr__(self, 'coefficients', coefficients)

    @property
    def squared_norm(self) -> float:
        return float(self.coefficients @ self.coefficients)

    @property
    def signature(self) -> tuple[str, str, bytes]:
        """Identity of the query as asked by its analyst, used to track repeat demands."""
        return self.analyst_id, self.view_id, self.coefficients.tobytes()

    def with_demand(self, demand: Demand) -> LinearQuery:
        return LinearQuery(
            self.view_id, self.coefficients, self.analyst_id, demand, self.query_id
        )


def _check_shape(view: HistogramView, coefficients: np.ndarray) -> None:
    if coefficients.shape != (view.bin_count,):
        raise QueryShapeError(
            f'query has {coefficients.size} coefficients, view {view.id!r} '
            f'has {view.bin_count} bins'
        )


def evaluate_coefficients(view: HistogramView, coefficients: np.ndarray) -> float:
    coefficients = np.asarray(coefficients, dtype=np.float64)
    _check_shape(view, coefficients)
    return float(coefficients @ view.true_counts)


def evaluate_query_true(view: HistogramView, q: LinearQuery) -> float:
    """Exact answer of ``q`` on the view, ground truth for harness metrics."""
    if q.view_id != view.id:
        raise QueryShapeError(f'query targets {q.view_id!r}, not {view.id!r}')
    return evaluate_coefficients(view, q.coefficients)


def query_sensitivity(q: LinearQuery, view: HistogramView) -> float:
    """
    l2 sensitivity of ``q`` under add/remove-one-tuple neighbors.

    One tuple moves exactly one bin by one, so the answer moves by at most the
    largest absolute coefficient times the view sensitivity.
    """
    _check_shape(view, q.coefficients)
    return float(np.max(np.abs(q.coefficients))) * view.sensitivity


def range_coefficients(
    view: HistogramView, ranges: Mapping[str, tuple[int, int]]
) -> np.ndarray:
    """
    0/1 coefficients selecting a hyper-rectangle of bins.

    ``ranges`` maps attribute names to inclusive ``(low, high)`` bucket indices;
    attributes not named span their whole domain.
    """
    masks = []
    for attribute in view.attributes:
        mask = np.zeros(attribute.cardinality, dtype=np.float64)
        low, high = ranges.get(attribute.name, (0, attribute.cardinality - 1))
        ensure(
            0 <= low <= high < attribute.cardinality,
            f'range ({low}, {high}) invalid for {attribute.name!r}',
        )
        mask[low : high + 1] = 1.0
        masks.append(mask)
    unknown = set(ranges) - set(view.attribute_names)
    ensure(not unknown, f'unknown range attributes {sorted(unknown)}')
    coefficients = masks[0]
    for mask in masks[1:]:
        coefficients = np.multiply.outer(coefficients, mask)
    return np.ravel(coefficients)
