from pydantic import Field

from dp_provenance.categories import (
    AnalystConstraintMode,
    MechanismKind,
    ViewConstraintMode,
)
from dp_provenance.entry_points import EntryPoint


class MechanismEntryPoint(EntryPoint):
    kind: MechanismKind = Field(description='Strategy implementing the mechanism.')
    analyst_constraints: AnalystConstraintMode = Field(
        AnalystConstraintMode.SUM_NORMALIZED, description='Row cap policy.'
    )
    view_constraints: ViewConstraintMode = Field(
        ViewConstraintMode.WATER_FILLING, description='Column cap policy.'
    )
    cache_synopses: bool = Field(
        True, description='Reuse stored local synopses that already meet a demand.'
    )

    def load(self):
        from dp_provenance.mechanisms.strategies import STRATEGIES

        options = self.options()
        kind = options.pop('kind')
        return STRATEGIES[kind](**options)


chorus = MechanismEntryPoint(
    name=MechanismKind.CHORUS.value,
    description='Query-level Gaussian noise against a single system budget.',
    kind=MechanismKind.CHORUS,
    analyst_constraints=AnalystConstraintMode.UNCONSTRAINED,
    cache_synopses=False,
)

chorus_p = MechanismEntryPoint(
    name=MechanismKind.CHORUS_P.value,
    description='Query-level noise with per-analyst provenance constraints.',
    kind=MechanismKind.CHORUS_P,
    cache_synopses=False,
)

vanilla = MechanismEntryPoint(
    name=MechanismKind.VANILLA.value,
    description='Independent cached synopses per analyst, composed by summation.',
    kind=MechanismKind.VANILLA,
)

dprovdb = MechanismEntryPoint(
    name=MechanismKind.DPROVDB.value,
    description='Global synopses with additive Gaussian local releases.',
    kind=MechanismKind.DPROVDB,
    analyst_constraints=AnalystConstraintMode.MAX_NORMALIZED,
)

s_private_sql = MechanismEntryPoint(
    name=MechanismKind.S_PRIVATE_SQL.value,
    description='Static synopses released once from a fixed split of the budget.',
    kind=MechanismKind.S_PRIVATE_SQL,
    analyst_constraints=AnalystConstraintMode.UNCONSTRAINED,
    view_constraints=ViewConstraintMode.STATIC_SPLIT,
)

BUILTIN: dict[str, MechanismEntryPoint] = {
    ep.name: ep for ep in (chorus, chorus_p, vanilla, dprovdb, s_private_sql)
}
