import numpy as np
import pytest

from dp_provenance.mechanisms.engine import EngineConfig, QueryEngine
from dp_provenance.model.dataset import AttributeSpec, Dataset, build_view
from dp_provenance.model.query import Analyst, LinearQuery


@pytest.fixture
def toy_dataset():
    schema = (
        AttributeSpec('color', ('red', 'green', 'blue')),
        AttributeSpec.integer_range('age', 0, 7),
    )
    rng = np.random.default_rng(3)
    codes = np.column_stack([rng.integers(0, 3, size=500), rng.integers(0, 8, size=500)])
    return Dataset(schema, codes)


@pytest.fixture
def toy_views(toy_dataset):
    views = (
        build_view(toy_dataset, ['color']),
        build_view(toy_dataset, ['age']),
        build_view(toy_dataset, ['color', 'age']),
    )
    return {view.id: view for view in views}


@pytest.fixture
def analysts():
    return [Analyst('alice', 1), Analyst('bob', 4)]


@pytest.fixture
def make_engine(toy_views, analysts):
    def factory(mechanism='dprovdb', members=None, views=None, **config):
        config.setdefault('delta_cap', 1.0)
        return QueryEngine(
            (views or toy_views).values(),
            members or analysts,
            EngineConfig(mechanism=mechanism, **config),
        )

    return factory


@pytest.fixture
def make_query(toy_views):
    def factory(view_id, analyst_id, demand, coefficients=None, query_id=None):
        if coefficients is None:
            coefficients = np.ones(toy_views[view_id].bin_count)
        return LinearQuery(view_id, coefficients, analyst_id, demand, query_id)

    return factory
