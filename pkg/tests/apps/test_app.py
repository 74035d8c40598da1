from pathlib import Path

import pandas as pd
import pytest
import structlog
import yaml

from dp_provenance import __version__
from dp_provenance.apps.cli import main
from dp_provenance.example_uploads import example_upload_entry_point
from dp_provenance.parsers.parser import load_dataset

DATA = Path(__file__).parent.parent / 'data'
SCHEMA = str(DATA / 'schema.yaml')


@pytest.fixture(autouse=True)
def reset_logging():
    yield
    structlog.reset_defaults()


def test_version(capsys):
    with pytest.raises(SystemExit):
        main(['--version'])
    assert __version__ in capsys.readouterr().out


def test_build_views(tmp_path):
    out = tmp_path / 'views.yaml'
    code = main(
        ['build-views', '--schema', SCHEMA, '--view', 'age,sex', '--out', str(out)]
    )
    assert code == 0
    assert yaml.safe_load(out.read_text())['views'][0]['attributes'] == ['age', 'sex']


def test_build_views_defaults_to_one_view_per_attribute(tmp_path):
    out = tmp_path / 'views.yaml'
    assert main(['build-views', '--schema', SCHEMA, '--out', str(out)]) == 0
    assert len(yaml.safe_load(out.read_text())['views']) == 3


def test_build_views_unknown_attribute(tmp_path, capsys):
    out = tmp_path / 'views.yaml'
    code = main(
        ['build-views', '--schema', SCHEMA, '--view', 'zip', '--out', str(out)]
    )
    assert code == 1
    assert not out.exists()
    assert 'zip' in capsys.readouterr().err


def test_ingest(tmp_path):
    out = tmp_path / 'census.npz'
    code = main(
        ['ingest', str(DATA / 'census.csv'), '--schema', SCHEMA, '--out', str(out)]
    )
    assert code == 0
    assert len(load_dataset(out)) == 10


def test_ingest_raise_mode_fails(tmp_path):
    code = main(
        [
            'ingest',
            str(DATA / 'census.csv'),
            '--schema',
            SCHEMA,
            '--out',
            str(tmp_path / 'census.npz'),
            '--on-invalid',
            'raise',
        ]
    )
    assert code == 1


def test_run_and_report(tmp_path, capsys):
    out = tmp_path / 'results'
    assert main(['--log-json', 'run', str(DATA / 'experiment.yaml'), '--out', str(out)]) == 0
    assert (out / 'cells.csv').exists()

    assert main(['report', str(out / 'cells.csv')]) == 0
    assert 'answered_mean' in capsys.readouterr().out

    summary = tmp_path / 'summary.csv'
    assert main(['report', str(out / 'cells.csv'), '--out', str(summary)]) == 0
    assert len(pd.read_csv(summary)) == 2


def test_run_bad_spec(tmp_path):
    spec = tmp_path / 'bad.yaml'
    spec.write_text('dataset: {synthetic: {}}\ngrid: {bogus: [1]}\n')
    assert main(['run', str(spec), '--out', str(tmp_path / 'out')]) == 1


def test_example_upload_directory():
    directory = example_upload_entry_point.load()
    assert (directory / 'experiment.yaml').is_file()
    assert (directory / 'schema.yaml').is_file()
    assert (directory / 'census.csv').is_file()
