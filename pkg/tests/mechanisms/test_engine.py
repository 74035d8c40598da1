import numpy as np
import pytest
from pydantic import ValidationError
from structlog.testing import capture_logs

from dp_provenance.categories import (
    AnalystConstraintMode,
    MechanismKind,
    OutcomeStatus,
    RejectionReason,
)
from dp_provenance.errors import (
    ParamValidationError,
    QueryShapeError,
    SequencingError,
    UnknownAnalystError,
    UnknownViewError,
)
from dp_provenance.harness.metrics import compute_ndcfg
from dp_provenance.harness.synthetic import SyntheticDataConfig, generate_adult_like
from dp_provenance.harness.workloads import RrqConfig, generate_rrq
from dp_provenance.mechanisms.engine import EngineConfig, QueryEngine
from dp_provenance.model.dataset import build_view
from dp_provenance.model.query import AccuracyDemand, Analyst, BudgetDemand, LinearQuery
from dp_provenance.privacy.gauss import sigma_for

DELTA = 1e-9


def _answered(outcomes):
    counts = {}
    for outcome in outcomes:
        counts.setdefault(outcome.analyst_id, 0)
        counts[outcome.analyst_id] += outcome.answered
    return counts


def test_cold_start(make_engine, make_query):
    engine = make_engine()
    outcome = engine.handle_query(make_query('age', 'alice', BudgetDemand(0.5)))

    assert outcome.status is OutcomeStatus.ANSWERED
    assert outcome.charged_epsilon == pytest.approx(0.5)
    assert engine.global_synopses['age'].epsilon == pytest.approx(0.5)
    assert engine.local_synopses[('alice', 'age')].epsilon == pytest.approx(0.5)
    assert engine.table.entry('alice', 'age') == pytest.approx(0.5)


@pytest.fixture
def walkthrough(make_engine, make_query):
    engine = make_engine(analyst_constraints='unconstrained', table_cap=6.4)
    outcomes = engine.run(
        [
            make_query('age', 'alice', BudgetDemand(0.5)),
            make_query('age', 'bob', BudgetDemand(0.3)),
            make_query('age', 'bob', BudgetDemand(0.7)),
            make_query('age', 'alice', BudgetDemand(0.6)),
        ]
    )
    return engine, outcomes


def test_walkthrough_charges(walkthrough):
    engine, outcomes = walkthrough

    assert all(o.answered for o in outcomes)
    assert [o.charged_epsilon for o in outcomes] == pytest.approx([0.5, 0.3, 0.4, 0.2])
    assert engine.table.entry('alice', 'age') == pytest.approx(0.7)
    assert engine.table.entry('bob', 'age') == pytest.approx(0.7)
    assert engine.table.collusion_total() == pytest.approx(0.7)
    assert engine.audit() == []


def test_walkthrough_synopses(walkthrough):
    engine, _ = walkthrough
    current = engine.global_synopses['age']

    assert current.epsilon == pytest.approx(0.7)
    assert len(current.lineage) == 2
    assert engine.local_synopses[('bob', 'age')].epsilon == pytest.approx(0.7)
    assert engine.local_synopses[('alice', 'age')].epsilon == pytest.approx(0.6)
    assert (
        engine.local_synopses[('alice', 'age')].per_bin_variance
        >= current.per_bin_variance
    )


def test_walkthrough_ledger(walkthrough):
    engine, _ = walkthrough
    assert [c.epsilon for c in engine.ledger.charges('bob')] == pytest.approx([0.3, 0.4])
    assert engine.ledger.total('alice').epsilon == pytest.approx(0.7)


def test_repeat_query_is_answered_from_cache(make_engine, make_query):
    engine = make_engine()
    engine.handle_query(make_query('age', 'alice', BudgetDemand(0.5)))

    outcome = engine.handle_query(make_query('age', 'alice', BudgetDemand(0.5)))

    assert outcome.answered
    assert outcome.cached
    assert outcome.charged_epsilon == 0.0
    assert engine.table.table_total() == pytest.approx(0.5)


def test_looser_repeat_demand_is_clamped(make_engine, make_query):
    engine = make_engine()
    engine.handle_query(make_query('age', 'alice', BudgetDemand(0.5)))
    with capture_logs() as logs:
        outcome = engine.handle_query(make_query('age', 'alice', BudgetDemand(0.3)))

    assert outcome.cached
    clamped = [e for e in logs if e['event'] == 'QueryEngine.demand_clamped']
    assert len(clamped) == 1
    assert clamped[0]['granted'] == BudgetDemand(0.5)
    assert clamped[0]['log_level'] == 'warning'


def test_repeat_after_friction_costs_nothing(walkthrough, make_query):
    engine, _ = walkthrough
    before = engine.table.table_total()

    outcome = engine.handle_query(make_query('age', 'bob', BudgetDemand(0.7)))

    assert outcome.answered
    assert outcome.charged_epsilon == pytest.approx(0.0, abs=1e-12)
    assert engine.table.table_total() == pytest.approx(before)


def test_query_validation(make_engine, make_query):
    engine = make_engine()
    with pytest.raises(UnknownViewError):
        engine.handle_query(LinearQuery('nope', [1.0], 'alice', BudgetDemand(0.1)))
    with pytest.raises(UnknownAnalystError):
        engine.handle_query(make_query('age', 'mallory', BudgetDemand(0.1)))
    with pytest.raises(QueryShapeError):
        engine.handle_query(LinearQuery('age', [1.0, 1.0], 'alice', BudgetDemand(0.1)))
    with pytest.raises(ParamValidationError):
        engine.handle_query(make_query('age', 'alice', 0.1))
    assert engine.trace == []


def test_engine_validation(toy_views, analysts):
    with pytest.raises(ParamValidationError):
        QueryEngine(toy_views.values(), [])
    with pytest.raises(ParamValidationError):
        QueryEngine([toy_views['age'], toy_views['age']], analysts)
    with pytest.raises(ValidationError):
        EngineConfig(table_cap=0.0)
    with pytest.raises(ValidationError):
        EngineConfig(unknown=1)


def test_chorus_runs_out_of_the_shared_budget(make_engine, make_query):
    engine = make_engine('chorus', table_cap=1.0)
    queries = [
        make_query('color', analyst_id, BudgetDemand(0.3))
        for analyst_id in ['alice', 'bob'] * 3
    ]

    outcomes = engine.run(queries)

    assert [o.answered for o in outcomes] == [True] * 3 + [False] * 3
    assert {o.reason for o in outcomes[3:]} == {RejectionReason.TABLE}
    assert engine.table.table_total() == pytest.approx(0.9)


def test_chorus_p_is_fairer_than_chorus(make_engine, make_query, analysts):
    privileges = {a.id: a.privilege for a in analysts}
    queries = [
        make_query('color', analyst_id, BudgetDemand(0.1))
        for _ in range(10)
        for analyst_id in ('alice', 'bob')
    ]

    chorus = make_engine('chorus', table_cap=1.0).run(queries)
    chorus_p = make_engine('chorusP', table_cap=1.0).run(queries)

    assert _answered(chorus) == {'alice': 5, 'bob': 5}
    assert _answered(chorus_p) == {'alice': 2, 'bob': 8}
    _, fair = compute_ndcfg(_answered(chorus_p), privileges)
    _, unfair = compute_ndcfg(_answered(chorus), privileges)
    assert fair > unfair


@pytest.mark.parametrize('factor, answered', [(1.01, True), (0.99, False)])
def test_static_synopses_answer_only_what_they_already_meet(
    make_engine, make_query, factor, answered
):
    engine = make_engine('sPrivateSql', table_cap=6.4)
    static_variance = sigma_for(6.4 / 3, DELTA) ** 2
    assert engine.global_synopses['color'].epsilon == pytest.approx(6.4 / 3)

    outcome = engine.handle_query(
        make_query('color', 'alice', AccuracyDemand(3 * static_variance * factor))
    )

    assert outcome.answered is answered
    if not answered:
        assert outcome.reason is RejectionReason.STATIC_ACCURACY
        assert engine.table.table_total() == 0.0


def test_static_synopses_charge_each_analyst_once(make_engine, make_query):
    engine = make_engine('sPrivateSql')
    demand = AccuracyDemand(1e6)
    first = engine.handle_query(make_query('color', 'alice', demand))
    second = engine.handle_query(make_query('color', 'alice', demand, query_id='again'))
    assert first.charged_epsilon == pytest.approx(engine.global_synopses['color'].epsilon)
    assert second.answered
    assert second.charged_epsilon == 0.0


@pytest.mark.parametrize('cache, total', [(True, 0.5), (False, 1.0)])
def test_vanilla_cache(make_engine, make_query, cache, total):
    engine = make_engine('vanilla', cache_synopses=cache)
    engine.handle_query(make_query('age', 'alice', BudgetDemand(0.5)))
    outcome = engine.handle_query(make_query('age', 'alice', BudgetDemand(0.5)))

    assert outcome.answered
    assert outcome.cached is cache
    assert engine.table.row_total('alice') == pytest.approx(total)


@pytest.mark.parametrize('mechanism', [kind.value for kind in MechanismKind])
def test_answers_honour_the_demanded_accuracy(make_engine, toy_views, analysts, mechanism):
    engine = make_engine(mechanism, table_cap=3.2)
    queries = generate_rrq(RrqConfig(queries_per_analyst=40, seed=5), toy_views, analysts)

    outcomes = engine.run(queries)

    assert any(o.answered for o in outcomes)
    for q, outcome in zip(queries, outcomes):
        if outcome.answered:
            assert outcome.variance_bound <= q.demand.variance
        else:
            assert outcome.reason is not None
    assert engine.audit() == []


def test_runs_are_reproducible(make_engine, toy_views, analysts):
    queries = generate_rrq(RrqConfig(queries_per_analyst=20, seed=1), toy_views, analysts)
    first = [o.value for o in make_engine(seed=11).run(queries)]
    second = [o.value for o in make_engine(seed=11).run(queries)]
    other = [o.value for o in make_engine(seed=12).run(queries)]
    assert first == second
    assert first != other


def test_late_registration(make_engine):
    engine = make_engine('dprovdb', table_cap=1.0)
    engine.register_analyst(Analyst('carol', 2))
    assert engine.table.row_caps['carol'] == pytest.approx(0.5)
    with pytest.raises(ParamValidationError):
        engine.register_analyst(Analyst('dave', 5))

    normalized = make_engine('vanilla')
    with pytest.raises(SequencingError):
        normalized.register_analyst(Analyst('carol', 5))


def test_default_l_max_is_the_highest_privilege(make_engine):
    engine = make_engine('dprovdb', table_cap=1.0)
    assert engine.l_max == 4
    assert engine.table.row_caps == pytest.approx({'alice': 0.25, 'bob': 1.0})

    pinned = make_engine('dprovdb', table_cap=1.0, l_max=10)
    assert pinned.table.row_caps == pytest.approx({'alice': 0.1, 'bob': 0.4})


def test_friction_charge_never_exceeds_the_vanilla_charge(make_engine, make_query):
    coarse = 8 * sigma_for(0.5, DELTA) ** 2
    demands = [('alice', AccuracyDemand(coarse)), ('bob', AccuracyDemand(coarse / 4))]
    charges = {}
    engines = {}
    for mechanism in ('vanilla', 'dprovdb'):
        engine = make_engine(mechanism, analyst_constraints='unconstrained', table_cap=6.4)
        outcomes = engine.run([make_query('age', a, demand) for a, demand in demands])
        assert all(o.answered for o in outcomes)
        assert outcomes[1].variance_bound <= demands[1][1].variance
        charges[mechanism] = outcomes[1].charged_epsilon
        engines[mechanism] = engine

    additive = engines['dprovdb']
    assert charges['dprovdb'] <= charges['vanilla'] + 1e-12
    assert additive.global_synopses['age'].epsilon >= charges['dprovdb']
    assert additive.table.column_max('age') == pytest.approx(
        additive.global_synopses['age'].epsilon
    )
    assert additive.audit() == []


def test_add_view(make_engine, toy_dataset, toy_views):
    engine = make_engine(views={'age': toy_views['age']})
    engine.add_view(toy_views['color'])
    assert engine.table.column_caps['color'] == engine.config.table_cap
    with pytest.raises(ParamValidationError):
        engine.add_view(toy_views['color'])

    static = make_engine('sPrivateSql')
    with pytest.raises(SequencingError):
        static.add_view(build_view(toy_dataset, ['age'], view_id='age2'))


def test_corruption_edges_split_row_caps(make_engine):
    members = [Analyst('alice', 1), Analyst('bob', 4), Analyst('carol', 2)]
    engine = make_engine(members=members, table_cap=1.0, corruption_edges=[('alice', 'bob')])

    assert engine.analyst_mode is AnalystConstraintMode.CORRUPTION_GRAPH
    assert engine.table.row_caps == pytest.approx({'alice': 0.2, 'bob': 0.8, 'carol': 1.0})
    assert engine.table.peers('carol') == frozenset({'carol'})


def test_delta_cap_defaults_to_inverse_row_count(toy_views, analysts):
    engine = QueryEngine(toy_views.values(), analysts, EngineConfig())
    assert engine.table.delta_cap == pytest.approx(1 / 500)


def test_unreachable_accuracy_is_rejected(make_engine, make_query):
    engine = make_engine()
    outcome = engine.handle_query(make_query('age', 'alice', AccuracyDemand(1e-6)))

    assert outcome.reason is RejectionReason.INFEASIBLE
    assert engine.table.table_total() == 0.0
    assert engine.table.audit_log[-1].reason == 'infeasible'


def test_config_overrides_mechanism_defaults(make_engine):
    engine = make_engine('vanilla', cache_synopses=False, analyst_constraints='max_normalized')
    assert engine.strategy.cache_synopses is False
    assert engine.analyst_mode is AnalystConstraintMode.MAX_NORMALIZED

    default = make_engine('dprovdb')
    assert default.analyst_mode is AnalystConstraintMode.MAX_NORMALIZED
    assert default.strategy.cache_synopses is True


@pytest.fixture(scope='module')
def census():
    return generate_adult_like(SyntheticDataConfig(rows=20000, seed=7))


@pytest.fixture(scope='module')
def census_views(census):
    views = (build_view(census, ['age']), build_view(census, ['hours_per_week']))
    return {view.id: view for view in views}


def _answered_by(mechanism, views, members, table_cap, seed):
    queries = generate_rrq(RrqConfig(queries_per_analyst=100, seed=seed), views, members)
    config = EngineConfig(mechanism=mechanism, table_cap=table_cap, seed=seed)
    engine = QueryEngine(views.values(), members, config)
    answered = sum(o.answered for o in engine.run(queries))
    assert engine.audit() == []
    return answered


@pytest.mark.slow
def test_additive_answers_at_least_as_many_as_vanilla(census_views):
    doubled = []
    for seed in range(20):
        n = 2 + seed % 5
        members = [Analyst(f'analyst_{i + 1}', (1, 4)[i % 2]) for i in range(n)]
        for table_cap in (0.4, 1.6, 6.4):
            vanilla = _answered_by('vanilla', census_views, members, table_cap, seed)
            additive = _answered_by('dprovdb', census_views, members, table_cap, seed)
            assert additive >= vanilla, (seed, n, table_cap)
            if n == 6:
                doubled.append(additive >= 2 * vanilla)
    assert sum(doubled) >= len(doubled) / 2


@pytest.mark.slow
@pytest.mark.parametrize('mechanism', [kind.value for kind in MechanismKind])
def test_fuzzed_workloads_respect_every_constraint(census, census_views, mechanism):
    views = {
        **census_views,
        **{v.id: v for v in (build_view(census, ['race', 'sex']), build_view(census, ['sex']))},
    }
    members = [Analyst('a', 1), Analyst('b', 4), Analyst('c', 2), Analyst('d', 8)]
    for seed, budget in ((0, None), (1, 0.1)):
        config = RrqConfig(queries_per_analyst=250, budget=budget, seed=seed)
        queries = generate_rrq(config, views, members)
        engine = QueryEngine(
            views.values(), members, EngineConfig(mechanism=mechanism, table_cap=3.2, seed=seed)
        )
        for q in queries:
            outcome = engine.handle_query(q)
            if outcome.answered and isinstance(q.demand, AccuracyDemand):
                assert outcome.variance_bound <= q.demand.variance
            if mechanism == 'dprovdb':
                assert engine.table.collusion_total() <= 3.2 + 1e-9
        assert len(engine.trace) == 1000
        assert engine.audit() == []
