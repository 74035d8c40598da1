from __future__ import annotations

import math
from collections.abc import Hashable, Iterable, Mapping, Sequence
from dataclasses import dataclass, field, replace
from functools import cached_property

import numpy as np
import structlog

from dp_provenance.errors import (
    BinCapExceededError,
    ParamValidationError,
    UnknownAttributeError,
    ensure,
)

logger = structlog.get_logger(__name__)

DEFAULT_BIN_CAP = 10**6


@dataclass(frozen=True, eq=False)
class AttributeSpec:
    """
    An attribute and its full, publicly declared domain.

    Integer ranges are materialized as explicit values. ``bucket_width`` groups
    consecutive domain values into one histogram bin; counting views keep an
    l2 sensitivity of 1 under any width.
    """

    name: str
    domain: tuple[Hashable, ...]
    bucket_width: int = 1

    def __post_init__(self) -> None:
        object.__setattr__(self, 'domain', tuple(self.domain))
        ensure(bool(self.name), 'attribute name must be non-empty')
        ensure(len(self.domain) > 0, f'attribute {self.name!r} has an empty domain')
        ensure(
            len(set(self.domain)) == len(self.domain),
            f'attribute {self.name!r} has duplicate domain values',
        )
        ensure(self.bucket_width >= 1, 'bucket_width must be >= 1')

    @classmethod
    def integer_range(
        cls, name: str, low: int, high: int, bucket_width: int = 1
    ) -> AttributeSpec:
        ensure(low <= high, f'empty integer range [{low}, {high}] for {name!r}')
        return cls(name, tuple(range(low, high + 1)), bucket_width)

    @cached_property
    def _codes(self) -> dict[Hashable, int]:
        return {value: code for code, value in enumerate(self.domain)}

    @property
    def size(self) -> int:
        return len(self.domain)

    @property
    def cardinality(self) -> int:
        """Number of histogram bins this attribute contributes."""
        return math.ceil(self.size / self.bucket_width)

    def code_of(self, value: Hashable) -> int:
        try:
            return self._codes[value]
        except KeyError:
            raise ParamValidationError(
                f'value {value!r} is outside the domain of {self.name!r}'
            ) from None

    def codes_of(self, values: Iterable[Hashable]) -> np.ndarray:
        return np.fromiter((self.code_of(v) for v in values), dtype=np.int64)

    def coarsened(self, bucket_width: int) -> AttributeSpec:
        return replace(self, bucket_width=bucket_width)

    def to_dict(self) -> dict:
        return {
            'name': self.name,
            'domain': list(self.domain),
            'bucket_width': self.bucket_width,
        }


@dataclass(frozen=True, eq=False)
class Dataset:
    """A single relation. Rows are stored as domain codes, one column per attribute."""

    schema: tuple[AttributeSpec, ...]
    codes: np.ndarray

    def __post_init__(self) -> None:
        object.__setattr__(self, 'schema', tuple(self.schema))
        codes = np.asarray(self.codes, dtype=np.int64).reshape(-1, len(self.schema))
        for j, attribute in enumerate(self.schema):
            column = codes[:, j]
            if column.size and (column.min() < 0 or column.max() >= attribute.size):
                raise ParamValidationError(
                    f'column {attribute.name!r} holds codes outside its domain'
                )
        codes.setflags(write=False)
        object.__setattr__(self, 'codes', codes)

    @classmethod
    def from_rows(
        cls, schema: Sequence[AttributeSpec], rows: Iterable[Sequence[Hashable]]
    ) -> Dataset:
        schema = tuple(schema)
        encoded = [
            [attribute.code_of(value) for attribute, value in zip(schema, row)]
            for row in rows
        ]
        return cls(schema, np.asarray(encoded, dtype=np.int64).reshape(-1, len(schema)))

    def __len__(self) -> int:
        return self.codes.shape[0]

    @property
    def rows(self) -> list[tuple]:
        return [
            tuple(attribute.domain[c] for attribute, c in zip(self.schema, row))
            for row in self.codes.tolist()
        ]

    @cached_property
    def _positions(self) -> dict[str, int]:
        return {attribute.name: j for j, attribute in enumerate(self.schema)}

    def position(self, name: str) -> int:
        try:
            return self._positions[name]
        except KeyError:
            raise UnknownAttributeError(name) from None

    def attribute(self, name: str) -> AttributeSpec:
        return self.schema[self.position(name)]


@dataclass(frozen=True, eq=False)
class BinIndexer:
    """Mixed-radix bijection between attribute value tuples and ``[0, bin_count)``."""

    attributes: tuple[AttributeSpec, ...]

    @cached_property
    def dims(self) -> tuple[int, ...]:
        return tuple(a.cardinality for a in self.attributes)

    @cached_property
    def strides(self) -> tuple[int, ...]:
        strides = []
        step = 1
        for dim in reversed(self.dims):
            strides.append(step)
            step *= dim
        return tuple(reversed(strides))

    @property
    def bin_count(self) -> int:
        return math.prod(self.dims)

    def index_of(self, values: Sequence[Hashable]) -> int:
        ensure(
            len(values) == len(self.attributes),
            f'expected {len(self.attributes)} values, got {len(values)}',
        )
        return sum(
            (attribute.code_of(value) // attribute.bucket_width) * stride
            for attribute, value, stride in zip(self.attributes, values, self.strides)
        )

    def value_of(self, index: int) -> tuple:
        """The representative (first) domain value of every attribute in bin ``index``."""
        ensure(0 <= index < self.bin_count, f'bin {index} out of range')
        values = []
        for attribute, stride, dim in zip(self.attributes, self.strides, self.dims):
            bucket = (index // stride) % dim
            values.append(attribute.domain[bucket * attribute.bucket_width])
        return tuple(values)

    def index_codes(self, codes: np.ndarray) -> np.ndarray:
        """Vectorized bin lookup for an ``(n_rows, n_attributes)`` code matrix."""
        widths = np.asarray([a.bucket_width for a in self.attributes], dtype=np.int64)
        buckets = codes // widths
        return buckets @ np.asarray(self.strides, dtype=np.int64)


@dataclass(frozen=True, eq=False)
class HistogramView:
    """Full-domain counts over a set of attributes, the unit of privacy accounting."""

    id: str
    indexer: BinIndexer
    true_counts: np.ndarray
    sensitivity: float = 1.0
    metadata: Mapping[str, object] = field(default_factory=dict)

    def __post_init__(self) -> None:
        counts = np.asarray(self.true_counts, dtype=np.int64)
        ensure(
            counts.shape == (self.indexer.bin_count,),
            'true_counts length must equal the bin count',
        )
        ensure(self.sensitivity > 0, 'view sensitivity must be positive')
        counts.setflags(write=False)
        object.__setattr__(self, 'true_counts', counts)

    @property
    def attributes(self) -> tuple[AttributeSpec, ...]:
        return self.indexer.attributes

    @property
    def attribute_names(self) -> tuple[str, ...]:
        return tuple(a.name for a in self.attributes)

    @property
    def bin_count(self) -> int:
        return self.indexer.bin_count


def default_view_id(attribute_names: Sequence[str]) -> str:
    return '_'.join(attribute_names)


def build_view(
    dataset: Dataset,
    attributes: Sequence[str],
    *,
    view_id: str | None = None,
    bucket_widths: Mapping[str, int] | None = None,
    bin_cap: int = DEFAULT_BIN_CAP,
) -> HistogramView:
    """
    Materialize the full-domain histogram of ``dataset`` projected on ``attributes``.

    Bins for domain values absent from the data are present with a zero count.
    """
    ensure(len(attributes) > 0, 'a view needs at least one attribute')
    ensure(len(set(attributes)) == len(attributes), 'view attributes must be unique')
    bucket_widths = bucket_widths or {}
    positions = [dataset.position(name) for name in attributes]
    for name in bucket_widths:
        if name not in attributes:
            raise UnknownAttributeError(name)

    # Widths declared by the view override the schema's own.
    specs = tuple(
        dataset.schema[p].coarsened(
            bucket_widths.get(dataset.schema[p].name, dataset.schema[p].bucket_width)
        )
        for p in positions
    )
    indexer = BinIndexer(specs)
    bin_count = indexer.bin_count
    if bin_count > bin_cap:
        raise BinCapExceededError(
            f'view over {list(attributes)} needs {bin_count} bins, cap is {bin_cap}'
        )

    bins = indexer.index_codes(dataset.codes[:, positions])
    counts = np.bincount(bins, minlength=bin_count)
    view = HistogramView(
        id=view_id or default_view_id(attributes),
        indexer=indexer,
        true_counts=counts,
    )
    logger.debug('build_view', view=view.id, bins=bin_count, rows=len(dataset))
    return view
