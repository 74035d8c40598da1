from dp_provenance.model.dataset import (
    DEFAULT_BIN_CAP,
    AttributeSpec,
    BinIndexer,
    Dataset,
    HistogramView,
    build_view,
)
from dp_provenance.model.query import (
    L_MAX,
    AccuracyDemand,
    Analyst,
    BudgetDemand,
    Demand,
    LinearQuery,
    PrivacyBudget,
    evaluate_coefficients,
    evaluate_query_true,
    query_sensitivity,
    range_coefficients,
)

__all__ = [
    'DEFAULT_BIN_CAP',
    'L_MAX',
    'AccuracyDemand',
    'Analyst',
    'AttributeSpec',
    'BinIndexer',
    'BudgetDemand',
    'Dataset',
    'Demand',
    'HistogramView',
    'LinearQuery',
    'PrivacyBudget',
    'build_view',
    'evaluate_coefficients',
    'evaluate_query_true',
    'query_sensitivity',
    'range_coefficients',
]
