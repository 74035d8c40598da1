from pathlib import Path

from pydantic import Field

from dp_provenance.entry_points import EntryPoint


class ExampleUploadEntryPoint(EntryPoint):
    title: str = Field(description='Title shown when listing examples.')
    category: str = Field('Examples')
    path: str = Field(description='Directory of the example, relative to this package.')

    def load(self) -> Path:
        return Path(__file__).parent.joinpath(*Path(self.path).parts[1:])


example_upload_entry_point = ExampleUploadEntryPoint(
    name='getting_started',
    title='Getting started',
    description='Synthetic census data, one view per attribute, all five mechanisms.',
    path='example_uploads/getting_started',
)
