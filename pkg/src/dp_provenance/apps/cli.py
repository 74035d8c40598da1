"""The ``dp-provenance`` command line."""

from __future__ import annotations

import argparse
import logging
import sys
from collections.abc import Sequence
from pathlib import Path

import pandas as pd
import structlog

from dp_provenance import __version__
from dp_provenance.errors import DProvError, UnknownAttributeError
from dp_provenance.harness.experiment import ExperimentSpec, run_experiment, summarize_cells
from dp_provenance.parsers import dataset_parser_entry_point
from dp_provenance.parsers.parser import (
    ViewDeclaration,
    default_view_declarations,
    dump_view_declarations,
    load_schema,
    save_dataset,
)

logger = structlog.get_logger(__name__)


def configure_logging(level: str = 'info', json_lines: bool = False) -> None:
    renderer = (
        structlog.processors.JSONRenderer()
        if json_lines
        else structlog.dev.ConsoleRenderer(colors=False)
    )
    structlog.configure(
        processors=[
            structlog.processors.add_log_level,
            structlog.processors.TimeStamper(fmt='iso'),
            renderer,
        ],
        wrapper_class=structlog.make_filtering_bound_logger(
            logging.getLevelName(level.upper())
        ),
        logger_factory=structlog.PrintLoggerFactory(file=sys.stderr),
    )


def _ingest(args: argparse.Namespace) -> None:
    parser = dataset_parser_entry_point.model_copy(
        update={'delimiter': args.delimiter, 'on_invalid': args.on_invalid}
    ).load()
    dataset = parser.parse(args.csv, load_schema(args.schema))
    save_dataset(dataset, args.out)
    logger.info('ingest', rows=len(dataset), out=str(args.out))


def _build_views(args: argparse.Namespace) -> None:
    schema = load_schema(args.schema)
    if args.view:
        declarations = [ViewDeclaration(attributes=v.split(',')) for v in args.view]
    else:
        declarations = default_view_declarations(schema)
    names = {a.name for a in schema}
    for declaration in declarations:
        unknown = set(declaration.attributes) - names
        if unknown:
            raise UnknownAttributeError(sorted(unknown)[0])
    dump_view_declarations(declarations, args.out)
    logger.info('build_views', views=len(declarations), out=str(args.out))


def _run(args: argparse.Namespace) -> None:
    spec = ExperimentSpec.from_yaml(args.spec)
    reports = run_experiment(spec, args.out, base_dir=Path(args.spec).parent)
    logger.info('run', runs=len(reports), out=str(args.out))


def _report(args: argparse.Namespace) -> None:
    cells = pd.read_csv(args.cells)
    summary = summarize_cells(cells)
    if args.out:
        summary.to_csv(args.out, index=False)
    else:
        print(summary.to_string(index=False))


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog='dp-provenance',
        description='Multi-analyst differentially private query processing.',
    )
    parser.add_argument('--version', action='version', version=__version__)
    parser.add_argument(
        '--log-level', default='info', choices=['debug', 'info', 'warning', 'error']
    )
    parser.add_argument('--log-json', action='store_true', help='log JSON lines')
    sub = parser.add_subparsers(dest='command', required=True)

    ingest = sub.add_parser('ingest', help='csv + schema to a binary dataset')
    ingest.add_argument('csv', type=Path)
    ingest.add_argument('--schema', type=Path, required=True)
    ingest.add_argument('--out', type=Path, required=True)
    ingest.add_argument('--delimiter', default=',')
    ingest.add_argument('--on-invalid', choices=['drop', 'raise'], default='drop')
    ingest.set_defaults(handler=_ingest)

    views = sub.add_parser('build-views', help='schema to view declarations')
    views.add_argument('--schema', type=Path, required=True)
    views.add_argument(
        '--view',
        action='append',
        help='comma separated attributes of one view; repeatable',
    )
    views.add_argument('--out', type=Path, required=True)
    views.set_defaults(handler=_build_views)

    run = sub.add_parser('run', help='run an experiment spec')
    run.add_argument('spec', type=Path)
    run.add_argument('--out', type=Path, required=True)
    run.set_defaults(handler=_run)

    report = sub.add_parser('report', help='aggregate cells.csv over seeds')
    report.add_argument('cells', type=Path)
    report.add_argument('--out', type=Path)
    report.set_defaults(handler=_report)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    configure_logging(args.log_level, args.log_json)
    try:
        args.handler(args)
    except DProvError as exc:
        logger.error('dp-provenance.failed', command=args.command, error=str(exc))
        return 1
    return 0


if __name__ == '__main__':
    sys.exit(main())
