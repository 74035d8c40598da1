import pytest

from dp_provenance.errors import ParamValidationError
from dp_provenance.model.query import Analyst
from dp_provenance.provenance.corruption import CorruptionGraph

PSI = 1.6


@pytest.fixture
def graph():
    return CorruptionGraph.from_pairs('abcd', [('a', 'b')], t=3)


def test_components(graph):
    assert sorted(sorted(c) for c in graph.components) == [['a', 'b'], ['c'], ['d']]
    assert graph.assignable_budget(PSI) == pytest.approx(3 * PSI)
    assert graph.component_of('b') == frozenset({'a', 'b'})
    with pytest.raises(ParamValidationError):
        graph.component_of('z')


def test_component_larger_than_bound_is_refused():
    with pytest.raises(ParamValidationError):
        CorruptionGraph.from_pairs('abcd', [('a', 'b')], t=2)
    with pytest.raises(ParamValidationError):
        CorruptionGraph.from_pairs('abc', [('a', 'b'), ('b', 'c')], t=3)


def test_unknown_edge_is_refused():
    with pytest.raises(ParamValidationError):
        CorruptionGraph.from_pairs('ab', [('a', 'z')], t=3)


def test_row_caps_are_split_within_components(graph):
    analysts = [Analyst('a', 1), Analyst('b', 3), Analyst('c', 2), Analyst('d', 9)]
    caps = graph.assign_row_caps(analysts, PSI)
    assert caps == pytest.approx({'a': 0.25 * PSI, 'b': 0.75 * PSI, 'c': PSI, 'd': PSI})


def test_row_caps_need_every_node(graph):
    with pytest.raises(ParamValidationError):
        graph.assign_row_caps([Analyst('a'), Analyst('b')], PSI)
