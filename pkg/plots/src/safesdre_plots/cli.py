"""Command line for rendering figures from trajectory CSVs.

    safesdre-plot --kind phase --csv out/*.csv --out fig.png \
                  [--scenario scenario.yaml] [--title TEXT]

Exit codes: 0 success, 64 usage error, 65 schema mismatch or missing
columns, 74 I/O error.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .figures import KINDS, render
from .schema import MissingColumns, PlotSpec, SchemaMismatch, obstacles_from_scenario

EX_OK = 0
EX_USAGE = 64
EX_DATAERR = 65
EX_IOERR = 74


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(EX_USAGE)


def _build_parser() -> _Parser:
    parser = _Parser(prog="safesdre-plot", description=__doc__.splitlines()[0])
    parser.add_argument("--kind", required=True, choices=sorted(KINDS))
    parser.add_argument("--csv", required=True, nargs="+",
                        help="trajectory CSV files (schema v1)")
    parser.add_argument("--out", required=True, help="output image (.png or .svg)")
    parser.add_argument("--scenario", default=None,
                        help="scenario YAML supplying the obstacle overlay")
    parser.add_argument("--title", default="")
    return parser


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    for path in args.csv:
        if not Path(path).exists():
            print(f"safesdre-plot: no such file: {path}", file=sys.stderr)
            return EX_USAGE
    obstacles = []
    if args.scenario:
        if not Path(args.scenario).exists():
            print(f"safesdre-plot: no such scenario: {args.scenario}", file=sys.stderr)
            return EX_USAGE
        obstacles = obstacles_from_scenario(args.scenario)

    spec = PlotSpec(
        csv_paths=list(args.csv),
        kind=args.kind,
        out_path=Path(args.out),
        obstacles=obstacles,
        title=args.title,
    )
    try:
        out = render(spec)
    except (SchemaMismatch, MissingColumns) as exc:
        print(f"safesdre-plot: {exc}", file=sys.stderr)
        return EX_DATAERR
    except OSError as exc:
        print(f"safesdre-plot: I/O error: {exc}", file=sys.stderr)
        return EX_IOERR
    print(out)
    return EX_OK


if __name__ == "__main__":
    sys.exit(main())
