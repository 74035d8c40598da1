from dp_provenance.synopses.synopsis import (
    LineageRecord,
    Synopsis,
    answer,
    answer_coefficients,
    build_global,
    combination_weight,
    combine_global,
    combine_synopses,
    derive_local,
)

__all__ = [
    'LineageRecord',
    'Synopsis',
    'answer',
    'answer_coefficients',
    'build_global',
    'combination_weight',
    'combine_global',
    'combine_synopses',
    'derive_local',
]
