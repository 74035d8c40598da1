from __future__ import annotations

import json
from collections.abc import Iterable, Sequence
from pathlib import Path
from typing import Literal

import numpy as np
import pandas as pd
import structlog
import yaml
from pydantic import BaseModel, ConfigDict, Field, model_validator

from dp_provenance.errors import ParamValidationError, SpecError
from dp_provenance.model.dataset import (
    DEFAULT_BIN_CAP,
    AttributeSpec,
    Dataset,
    HistogramView,
    build_view,
    default_view_id,
)

logger = structlog.get_logger(__name__)


class AttributeDeclaration(BaseModel):
    """One attribute of a schema file: an explicit domain or an integer range."""

    model_config = ConfigDict(extra='forbid', populate_by_name=True)

    name: str
    domain: list[str | int] | None = None
    integer_range: tuple[int, int] | None = Field(None, alias='range')
    bucket_width: int = Field(1, ge=1)

    @model_validator(mode='after')
    def _one_domain(self):
        if (self.domain is None) == (self.integer_range is None):
            raise ValueError(f'attribute {self.name!r} needs exactly one of domain, range')
        return self

    def to_spec(self) -> AttributeSpec:
        if self.integer_range is not None:
            low, high = self.integer_range
            return AttributeSpec.integer_range(self.name, low, high, self.bucket_width)
        return AttributeSpec(self.name, tuple(self.domain), self.bucket_width)


class SchemaFile(BaseModel):
    model_config = ConfigDict(extra='forbid')

    attributes: list[AttributeDeclaration] = Field(min_length=1)


class ViewDeclaration(BaseModel):
    model_config = ConfigDict(extra='forbid')

    attributes: list[str] = Field(min_length=1)
    id: str | None = None
    bucket_widths: dict[str, int] = Field(default_factory=dict)

    @property
    def view_id(self) -> str:
        return self.id or default_view_id(self.attributes)


def _read_yaml(path: str | Path) -> object:
    try:
        with open(path) as f:
            return yaml.safe_load(f)
    except yaml.YAMLError as exc:
        raise SpecError(f'{path}: {exc}') from exc


def load_schema(path: str | Path) -> tuple[AttributeSpec, ...]:
    schema = SchemaFile.model_validate(_read_yaml(path))
    return tuple(a.to_spec() for a in schema.attributes)


def dump_schema(schema: Sequence[AttributeSpec], path: str | Path) -> None:
    data = {'attributes': [a.to_dict() for a in schema]}
    Path(path).write_text(yaml.safe_dump(data, sort_keys=False))


def default_view_declarations(schema: Iterable[AttributeSpec]) -> list[ViewDeclaration]:
    """One single-attribute view per attribute."""
    return [ViewDeclaration(attributes=[a.name]) for a in schema]


def load_view_declarations(path: str | Path) -> list[ViewDeclaration]:
    data = _read_yaml(path) or {}
    return [ViewDeclaration.model_validate(v) for v in data.get('views', [])]


def dump_view_declarations(views: Iterable[ViewDeclaration], path: str | Path) -> None:
    data = {'views': [v.model_dump(exclude_none=True) for v in views]}
    Path(path).write_text(yaml.safe_dump(data, sort_keys=False))


def build_views(
    dataset: Dataset,
    declarations: Iterable[ViewDeclaration],
    bin_cap: int = DEFAULT_BIN_CAP,
) -> dict[str, HistogramView]:
    views = {}
    for declaration in declarations:
        view = build_view(
            dataset,
            declaration.attributes,
            view_id=declaration.view_id,
            bucket_widths=declaration.bucket_widths,
            bin_cap=bin_cap,
        )
        if view.id in views:
            raise SpecError(f'duplicate view id {view.id!r}')
        views[view.id] = view
    return views


class DatasetParser:
    """Reads a delimited text file into a :class:`Dataset` over a declared schema."""

    def __init__(self, delimiter: str = ',', on_invalid: Literal['drop', 'raise'] = 'drop'):
        self.delimiter = delimiter
        self.on_invalid = on_invalid

    def parse(self, csv_path: str | Path, schema: Sequence[AttributeSpec]) -> Dataset:
        frame = pd.read_csv(
            csv_path, sep=self.delimiter, dtype=str, skipinitialspace=True
        )
        missing = [a.name for a in schema if a.name not in frame.columns]
        if missing:
            raise ParamValidationError(f'{csv_path}: missing columns {missing}')

        codes = pd.DataFrame(index=frame.index)
        for attribute in schema:
            column = frame[attribute.name].str.strip()
            if all(isinstance(v, int) for v in attribute.domain):
                column = pd.to_numeric(column, errors='coerce')
                mapping = {v: code for code, v in enumerate(attribute.domain)}
            else:
                mapping = {str(v): code for code, v in enumerate(attribute.domain)}
            codes[attribute.name] = column.map(mapping.get)

        invalid = codes.isna().any(axis=1)
        if invalid.any():
            if self.on_invalid == 'raise':
                first = int(np.flatnonzero(invalid.to_numpy())[0])
                raise ParamValidationError(
                    f'{csv_path}: row {first} has values outside the schema domains'
                )
            logger.warning(
                'DatasetParser.parse.dropped', path=str(csv_path), rows=int(invalid.sum())
            )
        dataset = Dataset(tuple(schema), codes[~invalid].to_numpy(dtype=np.int64))
        logger.info('DatasetParser.parse', path=str(csv_path), rows=len(dataset))
        return dataset


def save_dataset(dataset: Dataset, path: str | Path) -> None:
    np.savez_compressed(
        path,
        codes=dataset.codes,
        schema=np.array(json.dumps([a.to_dict() for a in dataset.schema])),
    )


def load_dataset(path: str | Path) -> Dataset:
    with np.load(path, allow_pickle=False) as archive:
        schema = tuple(
            AttributeSpec(raw['name'], tuple(raw['domain']), raw['bucket_width'])
            for raw in json.loads(str(archive['schema']))
        )
        return Dataset(schema, archive['codes'])
