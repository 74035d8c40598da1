"""
A synthetic census-like relation for desk-scale runs.

Categorical attributes follow shuffled Zipf-like frequencies; age and weekly hours
are clipped normals over integer domains. No download is needed.
"""

from __future__ import annotations

import numpy as np
import structlog
from pydantic import BaseModel, ConfigDict, Field

from dp_provenance.model.dataset import AttributeSpec, Dataset
from dp_provenance.privacy.gauss import make_rng

logger = structlog.get_logger(__name__)

WORKCLASS = (
    'Private', 'Self-emp-not-inc', 'Self-emp-inc', 'Federal-gov',
    'Local-gov', 'State-gov', 'Without-pay', 'Never-worked',
)  # fmt: skip
EDUCATION = (
    'Bachelors', 'Some-college', '11th', 'HS-grad', 'Prof-school', 'Assoc-acdm',
    'Assoc-voc', '9th', '7th-8th', '12th', 'Masters', '1st-4th', '10th',
    'Doctorate', '5th-6th', 'Preschool',
)  # fmt: skip
MARITAL_STATUS = (
    'Married-civ-spouse', 'Divorced', 'Never-married', 'Separated', 'Widowed',
    'Married-spouse-absent', 'Married-AF-spouse',
)  # fmt: skip
OCCUPATION = (
    'Tech-support', 'Craft-repair', 'Other-service', 'Sales', 'Exec-managerial',
    'Prof-specialty', 'Handlers-cleaners', 'Machine-op-inspct', 'Adm-clerical',
    'Farming-fishing', 'Transport-moving', 'Priv-house-serv', 'Protective-serv',
    'Armed-Forces',
)  # fmt: skip
RELATIONSHIP = (
    'Wife', 'Own-child', 'Husband', 'Not-in-family', 'Other-relative', 'Unmarried',
)  # fmt: skip
RACE = ('White', 'Asian-Pac-Islander', 'Amer-Indian-Eskimo', 'Other', 'Black')
SEX = ('Female', 'Male')
INCOME = ('<=50K', '>50K')


def adult_schema() -> tuple[AttributeSpec, ...]:
    return (
        AttributeSpec.integer_range('age', 17, 90),
        AttributeSpec('workclass', WORKCLASS),
        AttributeSpec('education', EDUCATION),
        AttributeSpec.integer_range('education_num', 1, 16),
        AttributeSpec('marital_status', MARITAL_STATUS),
        AttributeSpec('occupation', OCCUPATION),
        AttributeSpec('relationship', RELATIONSHIP),
        AttributeSpec('race', RACE),
        AttributeSpec('sex', SEX),
        AttributeSpec.integer_range('hours_per_week', 1, 99),
        AttributeSpec('income', INCOME),
    )


class SyntheticDataConfig(BaseModel):
    model_config = ConfigDict(extra='forbid')

    rows: int = Field(10_000, ge=0)
    skew: float = Field(1.2, ge=0, description='Zipf exponent of categorical attributes.')
    seed: int = 0


def _zipf_weights(rng: np.random.Generator, size: int, skew: float) -> np.ndarray:
    weights = 1.0 / np.arange(1, size + 1) ** skew
    rng.shuffle(weights)
    return weights / weights.sum()


def _clipped_normal_codes(
    rng: np.random.Generator, attribute: AttributeSpec, mean: float, std: float, rows: int
) -> np.ndarray:
    low = attribute.domain[0]
    values = np.rint(rng.normal(mean, std, size=rows))
    return np.clip(values - low, 0, attribute.size - 1).astype(np.int64)


def generate_adult_like(config: SyntheticDataConfig | None = None) -> Dataset:
    config = config or SyntheticDataConfig()
    rng = make_rng(config.seed)
    schema = adult_schema()
    columns = []
    for attribute in schema:
        if attribute.name == 'age':
            columns.append(_clipped_normal_codes(rng, attribute, 38.0, 13.0, config.rows))
        elif attribute.name == 'hours_per_week':
            columns.append(_clipped_normal_codes(rng, attribute, 40.0, 12.0, config.rows))
        else:
            weights = _zipf_weights(rng, attribute.size, config.skew)
            columns.append(rng.choice(attribute.size, size=config.rows, p=weights))
    codes = np.column_stack(columns) if config.rows else np.empty((0, len(schema)))
    dataset = Dataset(schema, codes)
    logger.info('generate_adult_like', rows=len(dataset), seed=config.seed)
    return dataset
