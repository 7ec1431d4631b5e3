"""Command-line entry point.

Subcommands::

    safesdre run --config FILE [--output-dir DIR] [--seed N] [--jobs N]
                 [--override key=value ...] [--json]
    safesdre certify --config FILE [--csv-dir DIR] [--json]
    safesdre roa --config FILE [--samples N] [--c-grid a,b,c] [--json]
    safesdre validate --benchmark ID [--samples N] [--seed N]
    safesdre list-benchmarks

Exit codes are stable for CI use: 0 success, 1 failed validation checks,
2 at least one rollout unsafe or failed, 64 usage error, 65 data format
error, 74 I/O error. The default output directory can be set with the
``SAFESDRE_OUTPUT_DIR`` environment variable.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

import numpy as np

EX_OK = 0
EX_CHECK_FAILED = 1
EX_ROLLOUT_FAILED = 2
EX_USAGE = 64
EX_DATAERR = 65
EX_IOERR = 74


class _Parser(argparse.ArgumentParser):
    # argparse exits 2 on usage errors; CI expects 64.
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(EX_USAGE)


def _build_parser() -> _Parser:
    parser = _Parser(prog="safesdre", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p):
        p.add_argument("--config", required=True, help="scenario YAML path or builtin name")
        p.add_argument("--seed", type=int, default=None, help="override the scenario seed")
        p.add_argument(
            "--override",
            action="append",
            default=[],
            metavar="KEY=VALUE",
            help="dotted-key config override, e.g. integrator.dt=1e-4 (repeatable)",
        )
        p.add_argument("--json", action="store_true", help="print machine-readable summary")

    p_run = sub.add_parser("run", help="run every (controller, initial condition) pair")
    add_common(p_run)
    p_run.add_argument("--output-dir", default=None, help="output directory")
    p_run.add_argument("--jobs", type=int, default=os.cpu_count() or 1,
                       help="parallel rollouts (default: logical cores)")

    p_cert = sub.add_parser("certify", help="evaluate the decrease certificate along logged runs")
    add_common(p_cert)
    p_cert.add_argument("--csv-dir", default=None,
                        help="directory of trajectory CSVs (default: scenario outputs)")
    p_cert.add_argument("--output-dir", default=None)

    p_roa = sub.add_parser("roa", help="sample-based region-of-attraction certification")
    add_common(p_roa)
    p_roa.add_argument("--samples", type=int, default=None)
    p_roa.add_argument("--c-grid", default=None, help="comma-separated level values")

    p_val = sub.add_parser("validate", help="factorization and consistency checks")
    p_val.add_argument("--benchmark", required=True)
    p_val.add_argument("--samples", type=int, default=200)
    p_val.add_argument("--seed", type=int, default=0)
    p_val.add_argument("--json", action="store_true")

    sub.add_parser("list-benchmarks", help="print available benchmark systems")
    return parser


def _resolve_config(args):
    from .config import builtin_scenario_path, load_config
    from .exceptions import ConfigError

    path = Path(args.config)
    if not path.exists():
        try:
            path = builtin_scenario_path(args.config)
        except ConfigError:
            print(f"safesdre: config not found: {args.config}", file=sys.stderr)
            raise SystemExit(EX_USAGE)
    return load_config(path, overrides=args.override, seed=args.seed)


def _out_dir(args, config):
    base = os.environ.get("SAFESDRE_OUTPUT_DIR", "")
    explicit = getattr(args, "output_dir", None)
    if explicit:
        return explicit
    if base:
        return str(Path(base) / config.outputs)
    return config.outputs


def cmd_run(args) -> int:
    from .simulation import run_scenario

    config = _resolve_config(args)
    out_dir = _out_dir(args, config)
    try:
        summary = run_scenario(config, out_dir=out_dir, jobs=args.jobs)
    except OSError as exc:
        print(f"safesdre: I/O error: {exc}", file=sys.stderr)
        return EX_IOERR
    payload = {
        "scenario": summary.scenario,
        "out_dir": str(summary.out_dir),
        "rollouts": [r.as_dict() for r in summary.rows],
        "all_converged_safe": summary.all_converged_safe,
    }
    if args.json:
        print(json.dumps(payload, default=_json_default, indent=2))
    else:
        for r in summary.rows:
            print(f"{r.controller:>13} ic{r.ic_index:02d}: {r.status:<17}"
                  f" min_h={r.min_h:.4g} final={r.final_norm:.3g}")
        print(f"summary: {summary.summary_csv}")
    return EX_OK if summary.all_converged_safe else EX_ROLLOUT_FAILED


def cmd_certify(args) -> int:
    from .certificates import check_condition
    from .exceptions import EmptyTrajectory, SafeSdreError
    from .simulation import read_trajectory_csv

    config = _resolve_config(args)
    csv_dir = Path(args.csv_dir or _out_dir(args, config))
    files = sorted(csv_dir.glob(f"{config.name}__*.csv"))
    if not files:
        print(f"safesdre: no trajectory CSVs under {csv_dir}", file=sys.stderr)
        return EX_DATAERR

    aug = config.build_augmented()
    cost, _ = config.build_costs(aug)
    results = []
    for path in files:
        try:
            traj = read_trajectory_csv(path)
        except EmptyTrajectory as exc:
            print(f"safesdre: {exc}", file=sys.stderr)
            return EX_DATAERR
        holds = 0
        total = 0
        for row in traj.x_bar:
            if not np.all(np.isfinite(row)):
                continue
            total += 1
            try:
                rep = check_condition(aug, cost, row, check_care=False)
            except SafeSdreError:
                continue
            holds += int(rep.condition_holds)
        fraction = holds / total if total else 0.0
        results.append({"csv": str(path), "steps": total, "certified_fraction": fraction})

    if args.json:
        print(json.dumps(results, indent=2))
    else:
        for r in results:
            print(f"{Path(r['csv']).name}: {r['certified_fraction']:.1%} "
                  f"of {r['steps']} steps certified")
    return EX_OK


def cmd_roa(args) -> int:
    from .certificates import estimate_roa

    config = _resolve_config(args)
    aug = config.build_augmented()
    cost, _ = config.build_costs(aug)
    roa_conf = config.raw.get("roa") or {}
    samples = args.samples if args.samples is not None else int(roa_conf.get("samples", 200))
    if args.c_grid:
        c_grid = [float(v) for v in args.c_grid.split(",")]
    else:
        c_grid = [float(v) for v in roa_conf.get("c_grid", [0.25, 0.5, 1, 2, 4, 8])]
    box = None
    if "box_low" in roa_conf:
        box = (np.asarray(roa_conf["box_low"], dtype=float),
               np.asarray(roa_conf["box_high"], dtype=float))
    seed = args.seed if args.seed is not None else int(roa_conf.get("seed", config.seed))
    est = estimate_roa(aug, cost, c_grid, samples, box=box, seed=seed)
    payload = {
        "c_certified": est.c_certified,
        "status": est.status,
        "samples_drawn": est.samples_drawn,
        "samples_evaluated": est.samples_evaluated,
        "levels": [{"c": c, "samples": k, "passed": p} for c, k, p in est.levels],
    }
    if args.json:
        print(json.dumps(payload, indent=2))
    else:
        print(f"certified level: c = {est.c_certified:g} ({est.status}; "
              f"{est.samples_evaluated}/{est.samples_drawn} samples evaluated)")
        for c, k, p in est.levels:
            print(f"  c={c:<8g} samples={k:<5d} {'pass' if p else 'FAIL'}")
    return EX_OK


def cmd_validate(args) -> int:
    from .validation import validate_benchmark

    try:
        report = validate_benchmark(args.benchmark, samples=args.samples, seed=args.seed)
    except Exception as exc:  # unknown benchmark etc.
        print(f"safesdre: {exc}", file=sys.stderr)
        return EX_USAGE
    if args.json:
        print(json.dumps(report, indent=2))
    else:
        for name, entry in report["checks"].items():
            flag = "ok " if entry["passed"] else "FAIL"
            print(f"[{flag}] {name}: max error {entry['max_error']:.3e} "
                  f"(tol {entry['tolerance']:g})")
    return EX_OK if report["passed"] else EX_CHECK_FAILED


def cmd_list_benchmarks() -> int:
    from .systems import BENCHMARKS, make_benchmark

    for name in sorted(BENCHMARKS):
        sys_ = make_benchmark(name)
        print(f"{name}: n={sys_.n}, m={sys_.m}")
    return EX_OK


def _json_default(obj):
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, Path):
        return str(obj)
    raise TypeError(f"not JSON serializable: {type(obj).__name__}")


def main(argv=None) -> int:
    from .exceptions import ConfigError, OriginUnsafe

    args = _build_parser().parse_args(argv)
    try:
        if args.command == "run":
            return cmd_run(args)
        if args.command == "certify":
            return cmd_certify(args)
        if args.command == "roa":
            return cmd_roa(args)
        if args.command == "validate":
            return cmd_validate(args)
        if args.command == "list-benchmarks":
            return cmd_list_benchmarks()
    except (ConfigError, OriginUnsafe) as exc:
        print(f"safesdre: config error: {exc}", file=sys.stderr)
        return EX_USAGE
    except OSError as exc:
        print(f"safesdre: I/O error: {exc}", file=sys.stderr)
        return EX_IOERR
    raise AssertionError("unreachable")


if __name__ == "__main__":
    sys.exit(main())
