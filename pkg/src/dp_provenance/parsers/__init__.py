from typing import Literal

from pydantic import Field

from dp_provenance.entry_points import EntryPoint


class DatasetParserEntryPoint(EntryPoint):
    delimiter: str = Field(',', description='Field separator of the input file.')
    on_invalid: Literal['drop', 'raise'] = Field(
        'drop', description='What to do with rows holding values outside the schema.'
    )

    def load(self):
        from dp_provenance.parsers.parser import DatasetParser

        return DatasetParser(**self.options())


dataset_parser_entry_point = DatasetParserEntryPoint(
    name='csv',
    description='Delimited text with a header row, validated against a YAML schema.',
)
