from dp_provenance.provenance.constraints import (
    configure_analyst_constraints_max_normalized,
    configure_analyst_constraints_sum_normalized,
    configure_view_constraints_static,
    configure_view_constraints_water_filling,
)
from dp_provenance.provenance.corruption import CorruptionGraph
from dp_provenance.provenance.table import (
    CAP_TOLERANCE,
    AuditRecord,
    CheckResult,
    ProvenanceTable,
)

__all__ = [
    'CAP_TOLERANCE',
    'AuditRecord',
    'CheckResult',
    'CorruptionGraph',
    'ProvenanceTable',
    'configure_analyst_constraints_max_normalized',
    'configure_analyst_constraints_sum_normalized',
    'configure_view_constraints_static',
    'configure_view_constraints_water_filling',
]
