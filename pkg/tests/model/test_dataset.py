import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dp_provenance.errors import (
    BinCapExceededError,
    ParamValidationError,
    UnknownAttributeError,
)
from dp_provenance.model.dataset import AttributeSpec, BinIndexer, Dataset, build_view


def test_empty_dataset_builds_zero_view():
    schema = (AttributeSpec('kind', ('a', 'b', 'c')),)
    view = build_view(Dataset(schema, np.empty((0, 1))), ['kind'])
    assert view.true_counts.tolist() == [0, 0, 0]


def test_counts_rows_per_bin():
    schema = (AttributeSpec('kind', ('a', 'b')),)
    dataset = Dataset.from_rows(schema, [('a',), ('a',)])
    assert build_view(dataset, ['kind']).true_counts.tolist() == [2, 0]


def test_two_attribute_view_matches_row_scan():
    schema = (
        AttributeSpec.integer_range('x', 0, 3),
        AttributeSpec('y', ('p', 'q', 'r', 's', 't')),
    )
    rng = np.random.default_rng(11)
    codes = np.column_stack([rng.integers(0, 4, 100), rng.integers(0, 5, 100)])
    dataset = Dataset(schema, codes)

    view = build_view(dataset, ['x', 'y'])

    assert view.bin_count == 20
    assert view.true_counts.sum() == 100
    expected = np.zeros(20, dtype=int)
    for row in dataset.rows:
        expected[view.indexer.index_of(row)] += 1
    assert view.true_counts.tolist() == expected.tolist()


def test_view_attribute_order_follows_declaration(toy_dataset):
    view = build_view(toy_dataset, ['age', 'color'])
    assert view.attribute_names == ('age', 'color')
    assert view.id == 'age_color'


def test_unknown_attribute():
    schema = (AttributeSpec('kind', ('a',)),)
    with pytest.raises(UnknownAttributeError):
        build_view(Dataset(schema, np.zeros((1, 1))), ['other'])


def test_bin_cap():
    schema = (
        AttributeSpec.integer_range('x', 0, 3),
        AttributeSpec.integer_range('y', 0, 4),
    )
    with pytest.raises(BinCapExceededError):
        build_view(Dataset(schema, np.zeros((1, 2))), ['x', 'y'], bin_cap=10)


def test_bucket_width_coarsens_bins():
    schema = (AttributeSpec.integer_range('age', 0, 9),)
    dataset = Dataset.from_rows(schema, [(0,), (2,), (3,), (9,)])
    view = build_view(dataset, ['age'], bucket_widths={'age': 3})
    assert view.bin_count == 4
    assert view.true_counts.tolist() == [2, 1, 0, 1]
    assert view.sensitivity == 1.0


def test_schema_bucket_width_is_the_default():
    schema = (AttributeSpec.integer_range('age', 0, 9, bucket_width=5),)
    dataset = Dataset.from_rows(schema, [(0,), (4,), (7,)])
    assert build_view(dataset, ['age']).true_counts.tolist() == [2, 1]
    assert build_view(dataset, ['age'], bucket_widths={'age': 1}).bin_count == 10


def test_invalid_domains():
    with pytest.raises(ParamValidationError):
        AttributeSpec('kind', ('a', 'a'))
    with pytest.raises(ParamValidationError):
        AttributeSpec('kind', ())
    with pytest.raises(ParamValidationError):
        AttributeSpec.integer_range('x', 3, 1)


def test_codes_outside_domain():
    schema = (AttributeSpec('kind', ('a', 'b')),)
    with pytest.raises(ParamValidationError):
        Dataset(schema, np.array([[2]]))
    with pytest.raises(ParamValidationError):
        Dataset.from_rows(schema, [('c',)])


@given(
    sizes=st.lists(st.integers(1, 6), min_size=1, max_size=3),
    width=st.integers(1, 3),
)
def test_indexer_round_trip(sizes, width):
    attributes = tuple(
        AttributeSpec.integer_range(f'a{i}', 0, size - 1, bucket_width=width)
        for i, size in enumerate(sizes)
    )
    indexer = BinIndexer(attributes)
    for k in range(indexer.bin_count):
        assert indexer.index_of(indexer.value_of(k)) == k


@settings(max_examples=25)
@given(rows=st.integers(0, 300), seed=st.integers(0, 2**16))
def test_view_conserves_rows(rows, seed):
    schema = (
        AttributeSpec('kind', ('a', 'b', 'c')),
        AttributeSpec.integer_range('n', 1, 6),
    )
    rng = np.random.default_rng(seed)
    codes = np.column_stack([rng.integers(0, 3, rows), rng.integers(0, 6, rows)])
    view = build_view(Dataset(schema, codes), ['kind', 'n'])
    assert view.true_counts.sum() == rows
