"""
The privacy provenance table.

Rows are analysts, columns are views, entries are cumulative epsilon (with a
companion delta tally). Row, column and table caps bound what may be charged.
The vanilla check composes entries by summation everywhere; the additive check
composes a column by its maximum, because locals derived from one global synopsis
cost at most that global's budget even if every analyst colludes.

Analysts may be partitioned into collusion components. Column and table
constraints then hold within each component separately.

A local release may cost an analyst less than the growth it caused in the global
synopsis. The table therefore also remembers, per cell, the global level an
analyst's request grew the view to, and a column's maximum covers those levels.
"""

from __future__ import annotations

import json
from collections.abc import Iterable, Mapping
from dataclasses import asdict, dataclass
from pathlib import Path

import structlog

from dp_provenance.categories import RejectionReason
from dp_provenance.errors import (
    DuplicateAnalystError,
    ParamValidationError,
    UnknownAnalystError,
    UnknownViewError,
    ensure,
)
from dp_provenance.model.query import Analyst

logger = structlog.get_logger(__name__)

# Charges landing exactly on a cap pass; this absorbs float summation error.
CAP_TOLERANCE = 1e-9

Cells = Mapping[tuple[str, str], float]


@dataclass(frozen=True)
class CheckResult:
    passed: bool
    charge: float = 0.0
    delta_charge: float = 0.0
    global_growth: float = 0.0
    reason: RejectionReason | None = None
    # Global level reached when the release grows the global synopsis, else 0.
    global_epsilon: float = 0.0
    global_delta: float = 0.0

    @classmethod
    def fail(cls, reason: RejectionReason, charge: float = 0.0) -> CheckResult:
        return cls(False, charge=charge, reason=reason)


@dataclass(frozen=True)
class AuditRecord:
    index: int
    analyst_id: str
    view_id: str
    epsilon: float
    delta: float
    accepted: bool
    reason: str | None = None
    note: str = ''
    global_epsilon: float = 0.0
    global_delta: float = 0.0


def _within(value: float, cap: float) -> bool:
    return value <= cap + CAP_TOLERANCE


# Deltas live near 1e-9, so their slack is relative.
def _within_delta(value: float, cap: float) -> bool:
    return value <= cap * (1 + CAP_TOLERANCE)


def _column(cells: Cells, view_id: str, peers: frozenset[str] | None) -> list[float]:
    return [
        value
        for (a, v), value in cells.items()
        if v == view_id and (peers is None or a in peers)
    ]


def _column_bound(
    cells: Cells, levels: Cells, view_id: str, peers: frozenset[str] | None
) -> float:
    return max(_column(cells, view_id, peers) + _column(levels, view_id, peers), default=0.0)


class ProvenanceTable:
    def __init__(self, table_cap: float, delta_cap: float = 1.0):
        ensure(table_cap > 0, 'table constraint must be positive')
        ensure(0 < delta_cap <= 1, 'delta cap must be in (0, 1]')
        self.table_cap = float(table_cap)
        self.delta_cap = float(delta_cap)
        self.analysts: dict[str, Analyst] = {}
        self.row_caps: dict[str, float] = {}
        self.column_caps: dict[str, float] = {}
        self.components: dict[str, frozenset[str]] = {}
        self._epsilon: dict[tuple[str, str], float] = {}
        self._delta: dict[tuple[str, str], float] = {}
        self._global_epsilon: dict[tuple[str, str], float] = {}
        self._global_delta: dict[tuple[str, str], float] = {}
        self.audit_log: list[AuditRecord] = []

    # registration

    def register_analyst(self, analyst: Analyst, cap: float | None = None) -> None:
        if analyst.id in self.analysts:
            raise DuplicateAnalystError(analyst.id)
        self.analysts[analyst.id] = analyst
        self.row_caps[analyst.id] = self._bounded(self.table_cap if cap is None else cap)

    def register_view(self, view_id: str, cap: float | None = None) -> None:
        ensure(view_id not in self.column_caps, f'view {view_id!r} already registered')
        self.column_caps[view_id] = self._bounded(self.table_cap if cap is None else cap)

    def set_row_caps(self, caps: Mapping[str, float]) -> None:
        for analyst_id, cap in caps.items():
            self._require_analyst(analyst_id)
            self.row_caps[analyst_id] = self._bounded(cap)

    def set_column_caps(self, caps: Mapping[str, float]) -> None:
        for view_id, cap in caps.items():
            self._require_view(view_id)
            self.column_caps[view_id] = self._bounded(cap)

    def set_components(self, components: Iterable[Iterable[str]]) -> None:
        """Partition analysts into groups that can never pool their answers."""
        assigned: dict[str, frozenset[str]] = {}
        for members in components:
            group = frozenset(members)
            for analyst_id in group:
                self._require_analyst(analyst_id)
                ensure(analyst_id not in assigned, f'{analyst_id!r} in two components')
                assigned[analyst_id] = group
        self.components = assigned

    def _bounded(self, cap: float) -> float:
        ensure(cap >= 0, f'constraint must be non-negative, got {cap}')
        return min(float(cap), self.table_cap)

    def _require_analyst(self, analyst_id: str) -> None:
        if analyst_id not in self.analysts:
            raise UnknownAnalystError(analyst_id)

    def _require_view(self, view_id: str) -> None:
        if view_id not in self.column_caps:
            raise UnknownViewError(view_id)

    def peers(self, analyst_id: str) -> frozenset[str] | None:
        """Analysts whose answers may be pooled with ``analyst_id``'s; None for everyone."""
        return self.components.get(analyst_id)

    @property
    def view_ids(self) -> list[str]:
        return list(self.column_caps)

    # reads

    def entry(self, analyst_id: str, view_id: str) -> float:
        return self._epsilon.get((analyst_id, view_id), 0.0)

    def delta_entry(self, analyst_id: str, view_id: str) -> float:
        return self._delta.get((analyst_id, view_id), 0.0)

    def row_total(self, analyst_id: str) -> float:
        self._require_analyst(analyst_id)
        return sum(e for (a, _), e in self._epsilon.items() if a == analyst_id)

    def column_total(self, view_id: str, peers: frozenset[str] | None = None) -> float:
        self._require_view(view_id)
        return sum(_column(self._epsilon, view_id, peers))

    def column_max(self, view_id: str, peers: frozenset[str] | None = None) -> float:
        """Largest entry or recorded global level in the column."""
        self._require_view(view_id)
        return _column_bound(self._epsilon, self._global_epsilon, view_id, peers)

    def table_total(self, peers: frozenset[str] | None = None) -> float:
        return sum(
            e for (a, _), e in self._epsilon.items() if peers is None or a in peers
        )

    def collusion_total(self, peers: frozenset[str] | None = None) -> float:
        """Sum over views of each column's maximum, the bound when analysts pool answers."""
        return sum(self.column_max(v, peers) for v in self.column_caps)

    def delta_total(self, peers: frozenset[str] | None = None) -> float:
        return sum(d for (a, _), d in self._delta.items() if peers is None or a in peers)

    def delta_column_max(self, view_id: str, peers: frozenset[str] | None = None) -> float:
        return _column_bound(self._delta, self._global_delta, view_id, peers)

    def delta_collusion_total(self, peers: frozenset[str] | None = None) -> float:
        return sum(self.delta_column_max(v, peers) for v in self.column_caps)

    # checks

    def _require_charge(self, analyst_id: str, view_id: str, epsilon: float) -> None:
        self._require_analyst(analyst_id)
        self._require_view(view_id)
        ensure(epsilon >= 0, 'charge must be non-negative')

    def check_vanilla(
        self, analyst_id: str, view_id: str, epsilon: float, delta: float = 0.0
    ) -> CheckResult:
        """Admit ``epsilon`` iff every constraint holds with entries composed by sum."""
        self._require_charge(analyst_id, view_id, epsilon)
        peers = self.peers(analyst_id)
        if not _within(self.row_total(analyst_id) + epsilon, self.row_caps[analyst_id]):
            return CheckResult.fail(RejectionReason.ROW, epsilon)
        if not _within(self.column_total(view_id, peers) + epsilon, self.column_caps[view_id]):
            return CheckResult.fail(RejectionReason.COLUMN, epsilon)
        if not _within(self.table_total(peers) + epsilon, self.table_cap):
            return CheckResult.fail(RejectionReason.TABLE, epsilon)
        if delta and not _within_delta(self.delta_total(peers) + delta, self.delta_cap):
            return CheckResult.fail(RejectionReason.DELTA_CAP, epsilon)
        return CheckResult(True, charge=epsilon, delta_charge=delta)

    def check_table_only(
        self, analyst_id: str, view_id: str, epsilon: float, delta: float = 0.0
    ) -> CheckResult:
        """A single system-wide budget with no per-analyst or per-view caps."""
        self._require_charge(analyst_id, view_id, epsilon)
        if not _within(self.table_total() + epsilon, self.table_cap):
            return CheckResult.fail(RejectionReason.TABLE, epsilon)
        if delta and not _within_delta(self.delta_total() + delta, self.delta_cap):
            return CheckResult.fail(RejectionReason.DELTA_CAP, epsilon)
        return CheckResult(True, charge=epsilon, delta_charge=delta)

    def check_additive(
        self,
        analyst_id: str,
        view_id: str,
        epsilon: float,
        global_epsilon: float,
        delta: float = 0.0,
        global_delta: float | None = None,
        required_global: float | None = None,
    ) -> CheckResult:
        """
        Admit a local release at ``epsilon`` from a global synopsis at ``global_epsilon``.

        The global grows to ``required_global``, by default ``max(global_epsilon,
        epsilon)``; the analyst is charged ``min(required_global, P[A, V] + epsilon)
        - P[A, V]``, never more than ``epsilon``. The column is bounded by the grown
        global. Delta follows the same rule against the global's cumulative delta.
        """
        self._require_charge(analyst_id, view_id, epsilon)
        if required_global is None:
            required_global = max(global_epsilon, epsilon)
        ensure(
            required_global >= global_epsilon and epsilon <= required_global + CAP_TOLERANCE,
            f'global at {required_global} cannot serve epsilon {epsilon} '
            f'from a global at {global_epsilon}',
        )
        peers = self.peers(analyst_id)
        current = self.entry(analyst_id, view_id)
        growth = required_global - global_epsilon
        charge = max(min(required_global, current + epsilon) - current, 0.0)

        column_max = self.column_max(view_id, peers)
        new_column_max = max(
            column_max, required_global if growth > 0 else 0.0, current + charge
        )
        if not _within(self.row_total(analyst_id) + charge, self.row_caps[analyst_id]):
            return CheckResult.fail(RejectionReason.ROW, charge)
        if not _within(new_column_max, self.column_caps[view_id]):
            return CheckResult.fail(RejectionReason.COLUMN, charge)
        table_after = self.collusion_total(peers) - column_max + new_column_max
        if not _within(table_after, self.table_cap):
            return CheckResult.fail(RejectionReason.TABLE, charge)

        delta_column = self.delta_column_max(view_id, peers)
        if global_delta is None:
            global_delta = delta_column
        required_global_delta = global_delta + (delta if growth > 0 else 0.0)
        current_delta = self.delta_entry(analyst_id, view_id)
        delta_charge = max(
            min(required_global_delta, current_delta + delta) - current_delta, 0.0
        )
        if delta_charge or growth > 0:
            new_delta_column = max(
                delta_column,
                required_global_delta if growth > 0 else 0.0,
                current_delta + delta_charge,
            )
            delta_after = self.delta_collusion_total(peers) - delta_column + new_delta_column
            if not _within_delta(delta_after, self.delta_cap):
                return CheckResult.fail(RejectionReason.DELTA_CAP, charge)
        grown = growth > 0
        return CheckResult(
            True,
            charge=charge,
            delta_charge=delta_charge,
            global_growth=growth,
            global_epsilon=required_global if grown else 0.0,
            global_delta=required_global_delta if grown else 0.0,
        )

    # writes

    def charge(
        self,
        analyst_id: str,
        view_id: str,
        epsilon: float,
        delta: float = 0.0,
        note: str = '',
        *,
        global_epsilon: float = 0.0,
        global_delta: float = 0.0,
    ) -> None:
        """
        Add a charge to one cell. ``global_epsilon`` and ``global_delta`` record the
        level the view's global synopsis was grown to by this request, if any.
        """
        self._require_analyst(analyst_id)
        self._require_view(view_id)
        if epsilon < 0 or delta < 0:
            raise ParamValidationError('charges must be non-negative')
        key = (analyst_id, view_id)
        self._epsilon[key] = self._epsilon.get(key, 0.0) + epsilon
        self._delta[key] = self._delta.get(key, 0.0) + delta
        if global_epsilon > 0:
            self._global_epsilon[key] = max(self._global_epsilon.get(key, 0.0), global_epsilon)
        if global_delta > 0:
            self._global_delta[key] = max(self._global_delta.get(key, 0.0), global_delta)
        self._record(
            analyst_id, view_id, epsilon, delta, True, None, note, global_epsilon, global_delta
        )
        logger.info(
            'ProvenanceTable.charge',
            analyst=analyst_id,
            view=view_id,
            epsilon=epsilon,
            entry=self._epsilon[key],
            global_epsilon=global_epsilon or None,
        )

    def reject(
        self,
        analyst_id: str,
        view_id: str,
        epsilon: float,
        reason: RejectionReason,
        note: str = '',
    ) -> None:
        """Record a refused request; the table itself is left untouched."""
        self._record(analyst_id, view_id, epsilon, 0.0, False, reason.value, note)
        logger.info(
            'ProvenanceTable.reject',
            analyst=analyst_id,
            view=view_id,
            epsilon=epsilon,
            reason=reason.value,
        )

    def _record(
        self,
        analyst_id,
        view_id,
        epsilon,
        delta,
        accepted,
        reason,
        note,
        global_epsilon=0.0,
        global_delta=0.0,
    ) -> None:
        self.audit_log.append(
            AuditRecord(
                index=len(self.audit_log),
                analyst_id=analyst_id,
                view_id=view_id,
                epsilon=epsilon,
                delta=delta,
                accepted=accepted,
                reason=reason,
                note=note,
                global_epsilon=global_epsilon,
                global_delta=global_delta,
            )
        )

    # audit and persistence

    def audit(self, column_by_max: bool = False) -> list[str]:
        """
        Replay the accepted charges and list every constraint they ever violated.

        ``column_by_max`` audits columns and the table by per-column maxima, the
        composition used by additive mechanisms.
        """
        violations = []
        epsilon: dict[tuple[str, str], float] = {}
        delta: dict[tuple[str, str], float] = {}
        levels: dict[tuple[str, str], float] = {}
        delta_levels: dict[tuple[str, str], float] = {}
        for record in self.audit_log:
            if not record.accepted:
                continue
            key = (record.analyst_id, record.view_id)
            epsilon[key] = epsilon.get(key, 0.0) + record.epsilon
            delta[key] = delta.get(key, 0.0) + record.delta
            if record.global_epsilon > 0:
                levels[key] = max(levels.get(key, 0.0), record.global_epsilon)
            if record.global_delta > 0:
                delta_levels[key] = max(delta_levels.get(key, 0.0), record.global_delta)
            violations.extend(
                f'#{record.index}: {message}'
                for message in self._violations(
                    epsilon, delta, levels, delta_levels, column_by_max
                )
            )
        return violations

    def _groups(self) -> list[frozenset[str] | None]:
        if not self.components:
            return [None]
        return list(set(self.components.values()))

    def _violations(
        self,
        epsilon: Cells,
        delta: Cells,
        levels: Cells,
        delta_levels: Cells,
        column_by_max: bool,
    ) -> Iterable[str]:
        for analyst_id, cap in self.row_caps.items():
            total = sum(e for (a, _), e in epsilon.items() if a == analyst_id)
            if not _within(total, cap):
                yield f'row {analyst_id} at {total:.6g} > {cap:.6g}'

        def compose(cells: Cells, grown: Cells, view_id: str, peers) -> float:
            if column_by_max:
                return _column_bound(cells, grown, view_id, peers)
            return sum(_column(cells, view_id, peers))

        for peers in self._groups():
            label = '' if peers is None else f' in {sorted(peers)}'
            table = 0.0
            for view_id, cap in self.column_caps.items():
                total = compose(epsilon, levels, view_id, peers)
                table += total
                if not _within(total, cap):
                    yield f'column {view_id}{label} at {total:.6g} > {cap:.6g}'
            if not _within(table, self.table_cap):
                yield f'table{label} at {table:.6g} > {self.table_cap:.6g}'
            delta_total = sum(
                compose(delta, delta_levels, v, peers) for v in self.column_caps
            )
            if not _within_delta(delta_total, self.delta_cap):
                yield f'delta{label} at {delta_total:.3g} > {self.delta_cap:.3g}'

    def snapshot(self) -> dict:
        return {
            'table_cap': self.table_cap,
            'delta_cap': self.delta_cap,
            'analysts': [asdict(a) for a in self.analysts.values()],
            'row_caps': dict(self.row_caps),
            'column_caps': dict(self.column_caps),
            'components': sorted(sorted(g) for g in set(self.components.values())),
            'entries': [
                {
                    'analyst_id': a,
                    'view_id': v,
                    'epsilon': e,
                    'delta': self._delta.get((a, v), 0.0),
                }
                for (a, v), e in self._epsilon.items()
            ],
            'global_levels': [
                {
                    'analyst_id': a,
                    'view_id': v,
                    'epsilon': e,
                    'delta': self._global_delta.get((a, v), 0.0),
                }
                for (a, v), e in self._global_epsilon.items()
            ],
            'audit_log': [asdict(r) for r in self.audit_log],
        }

    @classmethod
    def from_snapshot(cls, data: Mapping) -> ProvenanceTable:
        table = cls(data['table_cap'], data['delta_cap'])
        for raw in data['analysts']:
            analyst = Analyst(**raw)
            table.register_analyst(analyst, data['row_caps'][analyst.id])
        for view_id, cap in data['column_caps'].items():
            table.register_view(view_id, cap)
        table.set_components(data.get('components', []))
        for raw in data['entries']:
            key = (raw['analyst_id'], raw['view_id'])
            table._epsilon[key] = raw['epsilon']
            table._delta[key] = raw['delta']
        for raw in data.get('global_levels', []):
            key = (raw['analyst_id'], raw['view_id'])
            table._global_epsilon[key] = raw['epsilon']
            if raw['delta']:
                table._global_delta[key] = raw['delta']
        table.audit_log = [AuditRecord(**raw) for raw in data.get('audit_log', [])]
        return table

    def export_json(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.snapshot(), indent=2))

    @classmethod
    def import_json(cls, path: str | Path) -> ProvenanceTable:
        return cls.from_snapshot(json.loads(Path(path).read_text()))
