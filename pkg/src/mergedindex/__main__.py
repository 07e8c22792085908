"""Command line: ``python -m mergedindex {run,grid,space,verify}``."""
from __future__ import annotations

import argparse
import json
import sys
import time
from dataclasses import replace

from . import bench
from .errors import ConfigError
from .verify import run_verify
from .workload import WorkloadConfig


def _add_workload_flags(p: argparse.ArgumentParser) -> None:
    d = WorkloadConfig()
    p.add_argument("--warehouses", type=int, default=d.warehouses)
    p.add_argument("--items-per-warehouse", type=int, default=d.items_per_warehouse)
    p.add_argument("--orderlines-per-warehouse", type=int, default=d.orderlines_per_warehouse)
    p.add_argument("--seed", type=int, default=d.seed, help="workload seed (data and operation streams)")


def _workload(args) -> WorkloadConfig:
    return WorkloadConfig(args.warehouses, args.items_per_warehouse, args.orderlines_per_warehouse,
                          seed=args.seed)


def cmd_run(args) -> int:
    cfg = bench.ExperimentConfig(
        backend=args.backend, buffer=args.buffer, so=args.so, jt=args.jt, policy=args.policy,
        structure=args.structure, phase=args.phase, workload=_workload(args), ops=args.ops,
        warmup=args.warmup, view_jt=args.view_jt,
    )
    report = bench.run_experiment(cfg)
    print(json.dumps(report.to_json(), indent=1))
    return 0


def cmd_grid(args) -> int:
    if args.dump_default:
        sys.stdout.write(bench.DEFAULT_GRID)
        return 0
    configs = bench.load_grid(args.file) if args.file else bench.parse_grid(bench.DEFAULT_GRID, "<default grid>")
    if args.seed is not None:
        configs = [replace(c, workload=replace(c.workload, seed=args.seed)) for c in configs]
    start = time.perf_counter()

    def progress(n, report):
        if not args.quiet and (n + 1) % 50 == 0:
            print(f"{n + 1}/{len(configs)} experiments, {time.perf_counter() - start:.0f}s", file=sys.stderr)

    result = bench.run_grid(configs, progress)
    paths = bench.write_outputs(result, args.out)
    for kind, path in paths.items():
        print(f"{kind}: {path}")
    return 0


def cmd_space(args) -> int:
    workload = replace(_workload(args), so=args.so, policy=bench.Policy(args.policy))
    structures = bench.space_structures(workload, args.backend, bench.JoinType.parse(args.view_jt))
    sys.stdout.write(bench.to_csv(bench.report_space(structures), bench.SPACE_COLUMNS))
    return 0


def cmd_verify(args) -> int:
    result = run_verify(args.seeds, args.deltas)
    for check in result.failures:
        print(f"FAIL {check.name} {check.detail}")
    print(f"{len(result.checks) - len(result.failures)}/{len(result.checks)} checks passed")
    return 0 if result.passed else 1


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="mergedindex", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run one experiment and print its report as JSON")
    run.add_argument("--backend", choices=bench.BACKENDS, default="btree")
    run.add_argument("--buffer", choices=bench.BUFFERS, default="small")
    run.add_argument("--so", type=float, default=1.0)
    run.add_argument("--jt", default="inner")
    run.add_argument("--view-jt", default=None, help="join type the view stores (matview only)")
    run.add_argument("--policy", default="all")
    run.add_argument("--structure", choices=bench.STRUCTURES, default="merged")
    run.add_argument("--phase", choices=bench.PHASES, default="point")
    run.add_argument("--ops", type=int, default=None)
    run.add_argument("--warmup", type=int, default=None)
    _add_workload_flags(run)
    run.set_defaults(func=cmd_run)

    grid = sub.add_parser("grid", help="run every config of a grid file; writes CSV and JSON")
    grid.add_argument("file", nargs="?", help="grid file (default: the built-in grid)")
    grid.add_argument("--out", default="results")
    grid.add_argument("--seed", type=int, default=None, help="override the workload seed of every config")
    grid.add_argument("--dump-default", action="store_true", help="print the built-in grid and exit")
    grid.add_argument("--quiet", action="store_true")
    grid.set_defaults(func=cmd_grid)

    space = sub.add_parser("space", help="space table for the three structures on one database")
    space.add_argument("--backend", choices=bench.BACKENDS, default="btree")
    space.add_argument("--so", type=float, default=1.0)
    space.add_argument("--policy", default="all")
    space.add_argument("--view-jt", default="inner")
    _add_workload_flags(space)
    space.set_defaults(func=cmd_space)

    verify = sub.add_parser("verify", help="oracle equivalence suite; exit 0 only if every check passes")
    verify.add_argument("--seeds", type=int, default=100)
    verify.add_argument("--deltas", type=int, default=24)
    verify.set_defaults(func=cmd_verify)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as e:
        print(f"error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
