"""
Experiment orchestration.

An experiment spec names a dataset, its views, the analysts, one workload and a
base engine configuration. ``grid`` sweeps engine fields (mechanism, table cap,
delta, tau, ...) plus ``n_analysts`` and ``scheduler``; every grid cell runs once
per seed. Results land in ``cells.csv``, ``reports.json`` and one trace CSV per run.
"""

from __future__ import annotations

import itertools
import json
import time
from collections.abc import Mapping
from pathlib import Path
from typing import Literal

import pandas as pd
import structlog
import yaml
from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from dp_provenance.categories import SchedulerKind
from dp_provenance.errors import SpecError
from dp_provenance.harness.metrics import (
    DEFAULT_ERROR_FLOOR,
    RunReport,
    summarize_run,
    trace_frame,
)
from dp_provenance.harness.synthetic import SyntheticDataConfig, generate_adult_like
from dp_provenance.harness.workloads import (
    BfsConfig,
    RrqConfig,
    generate_rrq,
    run_bfs_task,
)
from dp_provenance.mechanisms.engine import EngineConfig, QueryEngine
from dp_provenance.model.dataset import Dataset, HistogramView
from dp_provenance.model.query import AccuracyDemand, Analyst, evaluate_query_true
from dp_provenance.parsers import dataset_parser_entry_point
from dp_provenance.parsers.parser import (
    ViewDeclaration,
    build_views,
    default_view_declarations,
    load_dataset,
    load_schema,
)

logger = structlog.get_logger(__name__)

GRID_EXTRAS = ('n_analysts', 'scheduler')
# Columns of cells.csv that vary per run rather than per grid cell.
_RUN_ONLY = {
    'seed',
    'submitted',
    'dcfg',
    'accuracy_violations',
    'setup_ms',
    'query_ms',
}


class DatasetSource(BaseModel):
    """Exactly one of a synthetic generator, a CSV with schema, or an ingested archive."""

    model_config = ConfigDict(extra='forbid')

    synthetic: SyntheticDataConfig | None = None
    csv: Path | None = None
    schema_file: Path | None = Field(None, alias='schema')
    archive: Path | None = None

    @model_validator(mode='after')
    def _one_source(self):
        sources = [self.synthetic is not None, self.csv is not None, self.archive is not None]
        if sum(sources) != 1:
            raise ValueError('dataset needs exactly one of synthetic, csv, archive')
        if self.csv is not None and self.schema_file is None:
            raise ValueError('a csv dataset needs a schema file')
        return self

    def load(self, base: Path) -> Dataset:
        if self.synthetic is not None:
            return generate_adult_like(self.synthetic)
        if self.archive is not None:
            return load_dataset(base / self.archive)
        parser = dataset_parser_entry_point.load()
        return parser.parse(base / self.csv, load_schema(base / self.schema_file))


class WorkloadSpec(BaseModel):
    model_config = ConfigDict(extra='forbid')

    kind: Literal['rrq', 'bfs'] = 'rrq'
    rrq: RrqConfig = Field(default_factory=RrqConfig)
    bfs: BfsConfig | None = None

    @model_validator(mode='after')
    def _bfs_configured(self):
        if self.kind == 'bfs' and self.bfs is None:
            raise ValueError('a bfs workload needs a bfs section')
        return self


class ExperimentSpec(BaseModel):
    model_config = ConfigDict(extra='forbid')

    name: str = 'experiment'
    dataset: DatasetSource
    views: list[ViewDeclaration] | None = Field(
        None, description='One view per attribute when unset.'
    )
    analysts: list[Analyst] = Field(
        default_factory=lambda: [Analyst('analyst_1', 1), Analyst('analyst_2', 4)]
    )
    workload: WorkloadSpec = Field(default_factory=WorkloadSpec)
    engine: EngineConfig = Field(default_factory=EngineConfig)
    grid: dict[str, list] = Field(default_factory=dict)
    seeds: list[int] = Field(default_factory=lambda: [0])
    relative_error_floor: float = Field(DEFAULT_ERROR_FLOOR, gt=0)

    @model_validator(mode='after')
    def _known_grid_keys(self):
        allowed = set(EngineConfig.model_fields) | set(GRID_EXTRAS)
        unknown = set(self.grid) - allowed
        if unknown:
            raise ValueError(f'unknown grid keys {sorted(unknown)}')
        return self

    @classmethod
    def from_yaml(cls, path: str | Path) -> ExperimentSpec:
        try:
            with open(path) as f:
                return cls.model_validate(yaml.safe_load(f))
        except (yaml.YAMLError, ValidationError) as exc:
            raise SpecError(f'{path}: {exc}') from exc

    def cells(self) -> list[dict[str, object]]:
        keys = list(self.grid)
        return [dict(zip(keys, values)) for values in itertools.product(*self.grid.values())]


def analysts_for(base: list[Analyst], n: int | None) -> list[Analyst]:
    """The first ``n`` analysts, cycling privileges of ``base`` when more are needed."""
    if n is None:
        return list(base)
    return [
        Analyst(f'analyst_{i + 1}', base[i % len(base)].privilege) for i in range(n)
    ]


def _run_cell(
    spec: ExperimentSpec,
    views: Mapping[str, HistogramView],
    cell: Mapping[str, object],
    seed: int,
) -> tuple[RunReport, QueryEngine]:
    engine_fields = {k: v for k, v in cell.items() if k not in GRID_EXTRAS}
    config = EngineConfig.model_validate(
        {**spec.engine.model_dump(), **engine_fields, 'seed': seed}
    )
    analysts = analysts_for(spec.analysts, cell.get('n_analysts'))

    start = time.perf_counter()
    engine = QueryEngine(views.values(), analysts, config)
    setup_ms = (time.perf_counter() - start) * 1000

    start = time.perf_counter()
    if spec.workload.kind == 'rrq':
        scheduler = SchedulerKind(cell.get('scheduler', spec.workload.rrq.scheduler))
        rrq = spec.workload.rrq.model_copy(update={'seed': seed, 'scheduler': scheduler})
        engine.run(generate_rrq(rrq, views, analysts))
    else:
        for analyst in analysts:
            run_bfs_task(engine, spec.workload.bfs, analyst.id)
    query_ms = (time.perf_counter() - start) * 1000

    truths = [evaluate_query_true(views[q.view_id], q) for q in engine.submitted]
    demands = [
        q.demand.variance if isinstance(q.demand, AccuracyDemand) else None
        for q in engine.submitted
    ]
    report = summarize_run(
        engine,
        truths,
        demands,
        error_floor=spec.relative_error_floor,
        setup_ms=setup_ms,
        query_ms=query_ms,
        parameters={**cell, 'seed': seed},
    )
    return report, engine


def _cell_label(cell: Mapping[str, object], seed: int) -> str:
    parts = [f'{k}={v.value if hasattr(v, "value") else v}' for k, v in cell.items()]
    return '_'.join([*parts, f'seed={seed}']).replace('/', '-')


def run_experiment(
    spec: ExperimentSpec,
    output_dir: str | Path | None = None,
    base_dir: str | Path = '.',
) -> list[RunReport]:
    """
    Run every grid cell for every seed.

    With ``output_dir`` set, writes ``cells.csv`` (one row per run), ``reports.json``
    and ``traces/<cell>.csv``. Relative dataset paths resolve against ``base_dir``.
    """
    dataset = spec.dataset.load(Path(base_dir))
    declarations = spec.views or default_view_declarations(dataset.schema)
    views = build_views(dataset, declarations)
    logger.info(
        'run_experiment',
        name=spec.name,
        rows=len(dataset),
        views=len(views),
        cells=len(spec.cells()),
        seeds=len(spec.seeds),
    )

    out = Path(output_dir) if output_dir is not None else None
    if out is not None:
        (out / 'traces').mkdir(parents=True, exist_ok=True)

    reports = []
    for cell in spec.cells():
        for seed in spec.seeds:
            report, engine = _run_cell(spec, views, cell, seed)
            violations = engine.audit()
            if violations:
                logger.error('run_experiment.audit', cell=dict(cell), violations=violations[:5])
            logger.info('run_experiment.cell', **report.summary())
            reports.append(report)
            if out is not None:
                frame = trace_frame(engine.trace)
                frame['cumulative_budget'] = (
                    frame.groupby('analyst_id')['charged_epsilon'].cumsum()
                )
                frame.to_csv(out / 'traces' / f'{_cell_label(cell, seed)}.csv', index=False)

    if out is not None:
        cells = pd.DataFrame([r.summary() for r in reports])
        cells.to_csv(out / 'cells.csv', index=False)
        (out / 'reports.json').write_text(
            json.dumps([r.to_dict() for r in reports], indent=2, default=str)
        )
    return reports


def summarize_cells(cells: pd.DataFrame) -> pd.DataFrame:
    """Mean and standard deviation over seeds of every metric, per grid cell."""
    metrics = [
        'answered',
        'rejected',
        'ndcfg',
        'max_budget',
        'total_budget',
        'mean_relative_error',
        'mean_query_ms',
    ]
    keys = [c for c in cells.columns if c not in metrics and c not in _RUN_ONLY]
    present = [m for m in metrics if m in cells.columns]
    grouped = cells.groupby(keys, dropna=False)[present].agg(['mean', 'std'])
    grouped.columns = [f'{metric}_{stat}' for metric, stat in grouped.columns]
    return grouped.reset_index()
