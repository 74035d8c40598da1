"""
Corruption graphs bound which analysts may collude.

Analysts in different connected components are assumed never to share answers,
so each component may spend the full table budget on its own.
"""

from __future__ import annotations

from collections.abc import Iterable, Mapping
from dataclasses import dataclass, field
from functools import cached_property

import structlog

from dp_provenance.errors import ParamValidationError, ensure
from dp_provenance.model.query import Analyst
from dp_provenance.provenance.constraints import (
    configure_analyst_constraints_sum_normalized,
)

logger = structlog.get_logger(__name__)


@dataclass(frozen=True)
class CorruptionGraph:
    nodes: tuple[str, ...]
    edges: frozenset[frozenset[str]] = field(default_factory=frozenset)
    t: int = 2

    def __post_init__(self) -> None:
        ensure(self.t >= 2, f'corruption bound must be at least 2, got {self.t}')
        ensure(len(set(self.nodes)) == len(self.nodes), 'duplicate analysts in graph')
        known = set(self.nodes)
        for edge in self.edges:
            ensure(len(edge) == 2, f'edge {sorted(edge)} is not an analyst pair')
            ensure(edge <= known, f'edge {sorted(edge)} references unknown analysts')
        for component in self.components:
            if len(component) >= self.t:
                raise ParamValidationError(
                    f'component {sorted(component)} has {len(component)} analysts, '
                    f'bound is fewer than {self.t}'
                )

    @classmethod
    def from_pairs(
        cls, nodes: Iterable[str], pairs: Iterable[tuple[str, str]], t: int
    ) -> CorruptionGraph:
        return cls(tuple(nodes), frozenset(frozenset(p) for p in pairs), t)

    @cached_property
    def components(self) -> list[frozenset[str]]:
        neighbours: dict[str, set[str]] = {n: set() for n in self.nodes}
        for edge in self.edges:
            a, b = tuple(edge)
            neighbours[a].add(b)
            neighbours[b].add(a)
        seen: set[str] = set()
        components = []
        for node in self.nodes:
            if node in seen:
                continue
            stack, members = [node], set()
            while stack:
                current = stack.pop()
                if current in members:
                    continue
                members.add(current)
                stack.extend(neighbours[current] - members)
            seen |= members
            components.append(frozenset(members))
        return components

    def component_of(self, analyst_id: str) -> frozenset[str]:
        for component in self.components:
            if analyst_id in component:
                return component
        raise ParamValidationError(f'analyst {analyst_id!r} not in corruption graph')

    def assignable_budget(self, psi_p: float) -> float:
        return len(self.components) * psi_p

    def assign_row_caps(
        self, analysts: Mapping[str, Analyst] | Iterable[Analyst], psi_p: float
    ) -> dict[str, float]:
        """Sum-normalized caps computed within each component against the full ``psi_p``."""
        if isinstance(analysts, Mapping):
            analysts = analysts.values()
        by_id = {a.id: a for a in analysts}
        ensure(set(by_id) == set(self.nodes), 'analysts and graph nodes differ')
        caps = {}
        for component in self.components:
            members = [by_id[n] for n in self.nodes if n in component]
            caps.update(configure_analyst_constraints_sum_normalized(members, psi_p))
        logger.info(
            'CorruptionGraph.assign_row_caps',
            components=len(self.components),
            assignable=self.assignable_budget(psi_p),
        )
        return caps
