from enum import Enum


class MechanismKind(str, Enum):
    CHORUS = 'chorus'
    CHORUS_P = 'chorusP'
    VANILLA = 'vanilla'
    DPROVDB = 'dprovdb'
    S_PRIVATE_SQL = 'sPrivateSql'


class CompositionMode(str, Enum):
    BASIC = 'basic'
    ADVANCED = 'advanced'
    RDP = 'rdp'


class SchedulerKind(str, Enum):
    ROUND_ROBIN = 'roundRobin'
    RANDOM = 'random'


class SynopsisKind(str, Enum):
    GLOBAL = 'global'
    LOCAL = 'local'


class AnalystConstraintMode(str, Enum):
    """How row caps are derived from privileges."""

    UNCONSTRAINED = 'unconstrained'
    SUM_NORMALIZED = 'sum_normalized'
    MAX_NORMALIZED = 'max_normalized'
    CORRUPTION_GRAPH = 'corruption_graph'


class ViewConstraintMode(str, Enum):
    WATER_FILLING = 'water_filling'
    STATIC_SPLIT = 'static_split'


class RejectionReason(str, Enum):
    ROW = 'row'
    COLUMN = 'column'
    TABLE = 'table'
    DELTA_CAP = 'delta_cap'
    INFEASIBLE = 'infeasible'
    STATIC_ACCURACY = 'static_accuracy'


class OutcomeStatus(str, Enum):
    ANSWERED = 'answered'
    REJECTED = 'rejected'
