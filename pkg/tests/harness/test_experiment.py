import json
from pathlib import Path

import pandas as pd
import pytest
from pydantic import ValidationError

from dp_provenance.errors import SpecError
from dp_provenance.example_uploads import example_upload_entry_point
from dp_provenance.harness.experiment import (
    ExperimentSpec,
    analysts_for,
    run_experiment,
    summarize_cells,
)
from dp_provenance.model.query import Analyst

DATA = Path(__file__).parent.parent / 'data'


@pytest.fixture
def spec():
    return ExperimentSpec.from_yaml(DATA / 'experiment.yaml')


def test_spec_cells(spec):
    assert spec.cells() == [
        {'mechanism': 'chorus', 'table_cap': 1.6},
        {'mechanism': 'dprovdb', 'table_cap': 1.6},
    ]
    assert [a.id for a in spec.analysts] == ['alice', 'bob']


def test_run_experiment_writes_artifacts(spec, tmp_path):
    reports = run_experiment(spec, tmp_path)

    assert len(reports) == 4
    assert all(sum(r.submitted.values()) == 20 for r in reports)
    cells = pd.read_csv(tmp_path / 'cells.csv')
    assert len(cells) == 4
    assert set(cells['mechanism']) == {'chorus', 'dprovdb'}
    assert (cells['accuracy_violations'] == 0).all()
    assert len(json.loads((tmp_path / 'reports.json').read_text())) == 4
    traces = sorted(p.name for p in (tmp_path / 'traces').iterdir())
    assert traces[0] == 'mechanism=chorus_table_cap=1.6_seed=0.csv'
    assert len(traces) == 4
    trace = pd.read_csv(tmp_path / 'traces' / traces[0])
    assert 'cumulative_budget' in trace.columns

    summary = summarize_cells(cells)
    assert len(summary) == 2
    assert {'answered_mean', 'answered_std', 'ndcfg_mean'} <= set(summary.columns)


def test_runs_are_reproducible(spec):
    first = [r.summary()['answered'] for r in run_experiment(spec)]
    second = [r.summary()['answered'] for r in run_experiment(spec)]
    assert first == second


def test_bad_spec_is_a_spec_error(tmp_path):
    path = tmp_path / 'bad.yaml'
    path.write_text('dataset: {synthetic: {rows: 10}}\ngrid: {bogus: [1]}\n')
    with pytest.raises(SpecError, match='bogus'):
        ExperimentSpec.from_yaml(path)

    path.write_text('dataset: {synthetic: {}, csv: x.csv}\n')
    with pytest.raises(SpecError):
        ExperimentSpec.from_yaml(path)

    path.write_text('dataset: [unclosed\n')
    with pytest.raises(SpecError):
        ExperimentSpec.from_yaml(path)


def test_analysts_for():
    base = [Analyst('alice', 1), Analyst('bob', 4)]
    assert analysts_for(base, None) == base
    grown = analysts_for(base, 5)
    assert [a.id for a in grown] == [f'analyst_{i}' for i in range(1, 6)]
    assert [a.privilege for a in grown] == [1, 4, 1, 4, 1]


def test_csv_dataset(tmp_path):
    spec = ExperimentSpec.model_validate(
        {
            'dataset': {'csv': 'census.csv', 'schema': 'schema.yaml'},
            'workload': {'rrq': {'queries_per_analyst': 5}},
            'grid': {'n_analysts': [3]},
        }
    )
    reports = run_experiment(spec, base_dir=DATA)
    assert len(reports) == 1
    assert set(reports[0].submitted) == {'analyst_1', 'analyst_2', 'analyst_3'}


def test_bfs_workload():
    spec = ExperimentSpec.model_validate(
        {
            'dataset': {'synthetic': {'rows': 500}},
            'views': [{'attributes': ['age'], 'bucket_widths': {'age': 10}}],
            'workload': {
                'kind': 'bfs',
                'bfs': {'view_id': 'age', 'threshold_range': [0, 50], 'accuracy': 100.0},
            },
            'engine': {'analyst_constraints': 'unconstrained'},
        }
    )
    (report,) = run_experiment(spec)
    assert all(count > 0 for count in report.submitted.values())
    assert report.accuracy_violations == 0


def test_bfs_workload_needs_its_section():
    with pytest.raises(ValidationError):
        ExperimentSpec.model_validate(
            {'dataset': {'synthetic': {}}, 'workload': {'kind': 'bfs'}}
        )


def test_example_upload_spec_validates():
    directory = example_upload_entry_point.load()
    spec = ExperimentSpec.from_yaml(directory / 'experiment.yaml')
    assert len(spec.cells()) == 15
    assert spec.seeds == [0, 1, 2]


@pytest.mark.slow
def test_example_upload_orders_the_mechanisms():
    directory = example_upload_entry_point.load()
    spec = ExperimentSpec.from_yaml(directory / 'experiment.yaml')
    spec.grid['table_cap'] = [0.4, 6.4]

    reports = run_experiment(spec, base_dir=directory)

    cells = pd.DataFrame([r.summary() for r in reports])
    assert (cells['accuracy_violations'] == 0).all()
    answered = cells.groupby(['table_cap', 'mechanism'])['answered'].mean()
    loose = answered.loc[6.4]
    assert loose['dprovdb'] > loose['vanilla'] >= loose['sPrivateSql'] > loose['chorusP']
    assert loose['chorus'] / 2 <= loose['chorusP'] <= 2 * loose['chorus']
    assert answered.loc[(0.4, 'sPrivateSql')] == 0


def _desk_sweep(grid, seeds, **engine):
    spec = ExperimentSpec.model_validate(
        {
            'dataset': {'synthetic': {'rows': 20000, 'seed': 7}},
            'views': [{'attributes': ['age']}, {'attributes': ['hours_per_week']}],
            'analysts': [{'id': 'alice', 'privilege': 1}, {'id': 'bob', 'privilege': 4}],
            'workload': {'kind': 'rrq', 'rrq': {'queries_per_analyst': 100}},
            'engine': {'mechanism': 'dprovdb', **engine},
            'grid': grid,
            'seeds': list(seeds),
        }
    )
    cells = pd.DataFrame([r.summary() for r in run_experiment(spec)])
    assert (cells['accuracy_violations'] == 0).all()
    return cells


@pytest.mark.slow
def test_tau_sweep_trades_fairness_for_answers():
    cells = _desk_sweep(
        {'tau': [1.0, 1.3, 1.6, 1.9], 'n_analysts': [3]}, range(5), table_cap=1.6
    )
    means = cells.groupby('tau')[['answered', 'ndcfg']].mean().sort_index()
    answered = means['answered'].tolist()
    ndcfg = means['ndcfg'].tolist()
    assert all(b >= a - 1 for a, b in zip(answered, answered[1:]))
    assert answered[-1] > answered[0]
    assert all(b <= a + 0.01 for a, b in zip(ndcfg, ndcfg[1:]))
    assert ndcfg[-1] < ndcfg[0]


@pytest.mark.slow
def test_delta_sweep_answers_more_with_larger_delta():
    cells = _desk_sweep(
        {'delta': [1e-12, 1e-9, 1e-6]}, range(3), table_cap=6.4, delta_cap=1e-3
    )
    answered = cells.groupby('delta')['answered'].mean().sort_index().tolist()
    assert all(b >= a - 1 for a, b in zip(answered, answered[1:]))
    assert answered[-1] > answered[0]
