import numpy as np
import pytest
from pydantic import ValidationError
from scipy import stats

from dp_provenance.categories import SchedulerKind
from dp_provenance.errors import ParamValidationError, UnknownViewError
from dp_provenance.harness.workloads import (
    BfsConfig,
    RangeDistribution,
    RrqConfig,
    generate_rrq,
    run_bfs_task,
    sample_ranges,
    split_region,
)
from dp_provenance.model.dataset import AttributeSpec
from dp_provenance.model.query import AccuracyDemand, BudgetDemand
from dp_provenance.privacy.gauss import make_rng


def _shape(queries):
    return [(q.analyst_id, q.view_id, q.coefficients.tolist(), q.demand) for q in queries]


def test_rrq_is_deterministic(toy_views, analysts):
    config = RrqConfig(queries_per_analyst=30, seed=4)
    assert _shape(generate_rrq(config, toy_views, analysts)) == _shape(
        generate_rrq(config, toy_views, analysts)
    )


def test_round_robin_alternates(toy_views, analysts):
    queries = generate_rrq(RrqConfig(queries_per_analyst=5), toy_views, analysts)
    assert [q.analyst_id for q in queries] == ['alice', 'bob'] * 5


def test_random_scheduler_keeps_each_analysts_order(toy_views, analysts):
    config = RrqConfig(queries_per_analyst=40, scheduler=SchedulerKind.RANDOM, seed=9)
    queries = generate_rrq(config, toy_views, analysts)

    assert len(queries) == 80
    assert [q.analyst_id for q in queries] != ['alice', 'bob'] * 40
    for analyst in analysts:
        ids = [q.query_id for q in queries if q.analyst_id == analyst.id]
        assert ids == [f'{analyst.id}-{k}' for k in range(40)]


def test_demands_are_drawn_from_the_accuracy_range(toy_views, analysts):
    config = RrqConfig(queries_per_analyst=100, accuracy_range=(50.0, 500.0))
    variances = [q.demand.variance for q in generate_rrq(config, toy_views, analysts)]
    assert min(variances) >= 50.0
    assert max(variances) <= 500.0


def test_budget_mode(toy_views, analysts):
    queries = generate_rrq(RrqConfig(queries_per_analyst=3, budget=0.2), toy_views, analysts)
    assert {q.demand for q in queries} == {BudgetDemand(0.2)}


def test_clamp_rate_matches_the_start_distribution():
    attribute = AttributeSpec.integer_range('x', 0, 9)
    low, high, clamped = sample_ranges(
        make_rng(0), attribute, RangeDistribution(start_mean=0.0, start_std=3.0), 100_000
    )
    expected = stats.norm.cdf(-0.5 / 3) + stats.norm.sf(9.5 / 3)

    assert clamped.mean() == pytest.approx(expected, abs=0.01)
    assert np.all((0 <= low) & (low <= high) & (high <= 9))


def test_view_bias(toy_views, analysts):
    config = RrqConfig(queries_per_analyst=20, view_bias={'color': 1.0})
    assert {q.view_id for q in generate_rrq(config, toy_views, analysts)} == {'color'}

    with pytest.raises(UnknownViewError):
        generate_rrq(RrqConfig(view_bias={'zip': 1.0}), toy_views, analysts)
    with pytest.raises(ValidationError):
        RrqConfig(view_bias={'color': 0.5})


def test_ranges_for_unknown_attributes_are_refused(toy_views, analysts):
    config = RrqConfig(ranges={'zip': RangeDistribution()})
    with pytest.raises(ParamValidationError):
        generate_rrq(config, toy_views, analysts)


def test_rrq_config_validation():
    with pytest.raises(ValidationError):
        RrqConfig(accuracy_range=(10.0, 1.0))
    with pytest.raises(ValidationError):
        RrqConfig(queries_per_analyst=0)


@pytest.mark.parametrize(
    'region, branching, expected',
    [
        ({'a': (0, 6)}, 2, [{'a': (0, 3)}, {'a': (4, 6)}]),
        ({'a': (0, 1)}, 3, [{'a': (0, 0)}, {'a': (1, 1)}]),
        ({'a': (3, 3)}, 2, []),
        (
            {'a': (0, 1), 'b': (2, 5)},
            2,
            [{'a': (0, 1), 'b': (2, 3)}, {'a': (0, 1), 'b': (4, 5)}],
        ),
    ],
)
def test_split_region(region, branching, expected):
    assert split_region(region, list(region), branching) == expected


def _bfs(view_id, threshold, accuracy, **fields):
    return BfsConfig(
        view_id=view_id, threshold_range=threshold, accuracy=accuracy, **fields
    )


def test_bfs_stops_at_the_root_when_it_is_in_range(make_engine):
    engine = make_engine(analyst_constraints='unconstrained')
    trace = run_bfs_task(engine, _bfs('age', (-np.inf, np.inf), 100.0), 'bob')
    assert len(trace.visits) == 1
    assert not trace.visits[0].expanded
    assert not trace.partial


def test_bfs_expands_the_whole_tree(make_engine):
    engine = make_engine(analyst_constraints='unconstrained')
    trace = run_bfs_task(engine, _bfs('age', (-1e9, -1e8), 100.0), 'bob')

    assert len(trace.visits) == 15
    assert not trace.partial
    assert [v.depth for v in trace.visits] == [0] + [1] * 2 + [2] * 4 + [3] * 8
    assert all(v.outcome.answered for v in trace.visits)


def test_bfs_is_partial_after_a_rejection(make_engine):
    engine = make_engine('chorus', table_cap=1.0)
    trace = run_bfs_task(engine, _bfs('age', (-1e9, -1e8), 100.0), 'alice')

    assert trace.partial
    assert not trace.visits[-1].outcome.answered
    assert len(trace.visits) < 15


def test_bfs_budget_curves(make_engine):
    config = _bfs('age', (-1e9, -1e8), 1000.0)
    chorus = run_bfs_task(make_engine('chorus'), config, 'alice').budget_curve
    additive = run_bfs_task(
        make_engine('dprovdb', analyst_constraints='unconstrained'), config, 'alice'
    ).budget_curve

    assert len(chorus) == len(additive) == 15
    assert all(b > a for a, b in zip(chorus, chorus[1:]))
    assert len(set(additive)) == 1


@pytest.mark.slow
@pytest.mark.parametrize('seed', range(10))
def test_bfs_additive_budget_never_exceeds_vanilla(make_engine, seed):
    config = _bfs('age', (0.0, 100.0), 100.0)
    curves = {}
    for mechanism in ('chorus', 'vanilla', 'dprovdb'):
        engine = make_engine(
            mechanism, analyst_constraints='unconstrained', table_cap=6.4, seed=seed
        )
        trace = run_bfs_task(engine, config, 'bob')
        curves[mechanism] = [v.cumulative_budget for v in trace.visits if v.outcome.answered]
        assert engine.audit() == []

    chorus = curves['chorus']
    assert all(b > a for a, b in zip(chorus, chorus[1:]))
    for mechanism in ('vanilla', 'dprovdb'):
        assert len(set(curves[mechanism])) == 1
    assert curves['dprovdb'][-1] <= curves['vanilla'][-1] + 1e-9


def test_bfs_config_validation(make_engine):
    with pytest.raises(ValidationError):
        _bfs('age', (1.0, 0.0), 100.0)
    with pytest.raises(ValidationError):
        _bfs('age', (0.0, 1.0), 100.0, branching_factor=1)
    with pytest.raises(UnknownViewError):
        run_bfs_task(make_engine(), _bfs('zip', (0.0, 1.0), 100.0), 'alice')
    with pytest.raises(ParamValidationError):
        run_bfs_task(
            make_engine(), _bfs('age', (0.0, 1.0), 100.0, root_attributes=['color']), 'alice'
        )
