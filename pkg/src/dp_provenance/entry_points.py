"""
Plugin entry points.

Each sub-package exposes a pydantic configuration object whose ``load()`` imports
and builds the implementation lazily. The objects are registered under the
``dp_provenance.*`` entry-point groups in ``pyproject.toml`` so other packages can
contribute mechanisms or dataset parsers.
"""

from __future__ import annotations

from importlib.metadata import entry_points

import structlog
from pydantic import BaseModel, ConfigDict, Field

from dp_provenance.errors import SpecError

logger = structlog.get_logger(__name__)

MECHANISM_GROUP = 'dp_provenance.mechanisms'
PARSER_GROUP = 'dp_provenance.parsers'
EXAMPLE_UPLOAD_GROUP = 'dp_provenance.example_uploads'


class EntryPoint(BaseModel):
    model_config = ConfigDict(use_enum_values=False, extra='forbid')

    name: str = Field(description='Name under which the entry point is registered.')
    description: str = Field('', description='Short human readable summary.')

    def options(self) -> dict:
        """Keyword arguments for the implementation, without the registry fields."""
        return self.model_dump(exclude={'name', 'description'})

    def load(self):
        raise NotImplementedError


def discover(group: str) -> dict[str, EntryPoint]:
    """Installed entry points of ``group``, keyed by registered name."""
    found = {}
    for ep in entry_points(group=group):
        obj = ep.load()
        if not isinstance(obj, EntryPoint):
            logger.warning('discover.skipped', group=group, entry_point=ep.name)
            continue
        found[obj.name] = obj
    return found


def resolve(group: str, name: str, builtin: dict[str, EntryPoint]) -> EntryPoint:
    if name in builtin:
        return builtin[name]
    installed = discover(group)
    try:
        return installed[name]
    except KeyError:
        known = sorted(set(builtin) | set(installed))
        raise SpecError(f'no {group} entry point named {name!r}; known: {known}') from None
