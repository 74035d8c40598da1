from __future__ import annotations

import math
from collections.abc import Mapping, Sequence
from dataclasses import asdict, dataclass, field

import numpy as np
import pandas as pd

from dp_provenance.errors import ParamValidationError, ensure
from dp_provenance.mechanisms.engine import QueryEngine, QueryOutcome

DEFAULT_ERROR_FLOOR = 10.0


def compute_ndcfg(
    answered: Mapping[str, int], privileges: Mapping[str, int]
) -> tuple[float, float]:
    """
    Discounted cumulative fairness gain and its normalization.

    Each analyst's answered count is discounted by ``log2(1 / privilege + 1)``, so
    queries answered for higher privileges weigh more. The normalized score divides
    by the total number of answered queries and is 0 when nothing was answered.
    """
    dcfg = 0.0
    for analyst_id, count in answered.items():
        ensure(count >= 0, f'negative answered count for {analyst_id!r}')
        try:
            privilege = privileges[analyst_id]
        except KeyError:
            raise ParamValidationError(f'no privilege for analyst {analyst_id!r}') from None
        dcfg += count / math.log2(1.0 / privilege + 1.0)
    total = sum(answered.values())
    return dcfg, (dcfg / total if total else 0.0)


def compute_relative_error(true: float, noisy: float, c: float = DEFAULT_ERROR_FLOOR) -> float:
    ensure(c > 0, 'relative error floor must be positive')
    return abs(true - noisy) / max(true, c)


def trace_frame(outcomes: Sequence[QueryOutcome]) -> pd.DataFrame:
    columns = list(QueryOutcome.__dataclass_fields__)
    return pd.DataFrame([o.to_record() for o in outcomes], columns=columns)


@dataclass
class RunReport:
    mechanism: str
    submitted: dict[str, int]
    answered: dict[str, int]
    rejected: dict[str, int]
    cumulative_budget: dict[str, float]
    dcfg: float
    ndcfg: float
    rejection_reasons: dict[str, int] = field(default_factory=dict)
    relative_errors: list[float] = field(default_factory=list)
    accuracy_violations: int = 0
    setup_ms: float = 0.0
    query_ms: float = 0.0
    parameters: dict[str, object] = field(default_factory=dict)

    @property
    def total_answered(self) -> int:
        return sum(self.answered.values())

    @property
    def mean_query_ms(self) -> float:
        submitted = sum(self.submitted.values())
        return self.query_ms / submitted if submitted else 0.0

    def summary(self) -> dict[str, object]:
        """One flat row for the experiment table."""
        errors = np.asarray(self.relative_errors, dtype=np.float64)
        return {
            **self.parameters,
            'mechanism': self.mechanism,
            'submitted': sum(self.submitted.values()),
            'answered': self.total_answered,
            'rejected': sum(self.rejected.values()),
            'dcfg': self.dcfg,
            'ndcfg': self.ndcfg,
            'max_budget': max(self.cumulative_budget.values(), default=0.0),
            'total_budget': sum(self.cumulative_budget.values()),
            'mean_relative_error': float(errors.mean()) if errors.size else math.nan,
            'accuracy_violations': self.accuracy_violations,
            'setup_ms': self.setup_ms,
            'query_ms': self.query_ms,
            'mean_query_ms': self.mean_query_ms,
        }

    def to_dict(self) -> dict:
        return asdict(self)


def summarize_run(
    engine: QueryEngine,
    truths: Sequence[float] | None = None,
    demands: Sequence[float | None] | None = None,
    *,
    error_floor: float = DEFAULT_ERROR_FLOOR,
    setup_ms: float = 0.0,
    query_ms: float = 0.0,
    parameters: Mapping[str, object] | None = None,
) -> RunReport:
    """
    Metrics of one engine run.

    ``truths`` and ``demands`` align with the engine trace: the exact answer of each
    query, and its demanded variance (None for budget-mode queries).
    """
    frame = trace_frame(engine.trace)
    analysts = list(engine.table.analysts)
    submitted = frame.groupby('analyst_id').size().reindex(analysts, fill_value=0)
    answered_mask = frame['status'] == 'answered'
    answered = (
        frame[answered_mask].groupby('analyst_id').size().reindex(analysts, fill_value=0)
    )
    reasons = frame.loc[~answered_mask, 'reason'].value_counts()
    privileges = {a.id: a.privilege for a in engine.table.analysts.values()}
    answered_counts = {k: int(v) for k, v in answered.items()}
    dcfg, ndcfg = compute_ndcfg(answered_counts, privileges)

    relative_errors = []
    violations = 0
    for i, outcome in enumerate(engine.trace):
        if not outcome.answered:
            continue
        if truths is not None:
            relative_errors.append(
                compute_relative_error(truths[i], outcome.value, error_floor)
            )
        if demands is not None and demands[i] is not None:
            violations += outcome.variance_bound > demands[i]

    return RunReport(
        mechanism=engine.strategy.kind.value,
        submitted={k: int(v) for k, v in submitted.items()},
        answered=answered_counts,
        rejected={k: int(submitted[k] - answered[k]) for k in analysts},
        cumulative_budget=engine.consumed(),
        dcfg=dcfg,
        ndcfg=ndcfg,
        rejection_reasons={str(k): int(v) for k, v in reasons.items()},
        relative_errors=relative_errors,
        accuracy_violations=int(violations),
        setup_ms=setup_ms,
        query_ms=query_ms,
        parameters=dict(parameters or {}),
    )
