"""Row and column constraint policies for the provenance table."""

from __future__ import annotations

from collections.abc import Iterable, Mapping, Sequence

from dp_provenance.errors import ParamValidationError, ensure
from dp_provenance.model.query import L_MAX, Analyst


def configure_analyst_constraints_sum_normalized(
    analysts: Sequence[Analyst], psi_p: float
) -> dict[str, float]:
    """
    Split the table budget in proportion to privilege.

    Needs the full analyst set up front: a late registration would change every
    existing cap.
    """
    if not analysts:
        raise ParamValidationError('no analysts to constrain')
    ensure(psi_p > 0, 'table constraint must be positive')
    total = sum(a.privilege for a in analysts)
    return {a.id: a.privilege / total * psi_p for a in analysts}


def configure_analyst_constraints_max_normalized(
    analysts: Iterable[Analyst],
    psi_p: float,
    l_max: int = L_MAX,
    tau: float = 1.0,
) -> dict[str, float]:
    """
    Caps relative to the highest privilege, expanded by ``tau`` and clamped to ``psi_p``.

    Each cap depends only on its own analyst, so analysts may join late.
    """
    ensure(psi_p > 0, 'table constraint must be positive')
    ensure(tau >= 1, f'expansion tau must be at least 1, got {tau}')
    caps = {}
    for analyst in analysts:
        if not 1 <= analyst.privilege <= l_max:
            raise ParamValidationError(
                f'privilege {analyst.privilege} of {analyst.id!r} outside [1, {l_max}]'
            )
        caps[analyst.id] = min(psi_p, tau * analyst.privilege / l_max * psi_p)
    return caps


def configure_view_constraints_water_filling(
    view_ids: Iterable[str], psi_p: float
) -> dict[str, float]:
    # Views added later get the same cap.
    return {view_id: psi_p for view_id in view_ids}


def configure_view_constraints_static(
    sensitivities: Mapping[str, float], psi_p: float
) -> dict[str, float]:
    """Fixed split of the table budget across views, proportional to view sensitivity."""
    ensure(len(sensitivities) > 0, 'no views to constrain')
    total = sum(sensitivities.values())
    ensure(total > 0, 'view sensitivities must be positive')
    return {view_id: s / total * psi_p for view_id, s in sensitivities.items()}
