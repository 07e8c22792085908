"""Sweep semi-join selectivity and print view vs merged allocated space per policy.

Shows where the materialized view stops being smaller than the merged index
for this schema. Usage: python scripts/space_sweep.py [--backend btree] [--steps 11]
"""
from __future__ import annotations

import argparse
import sys

from mergedindex import bench
from mergedindex.encoding import Policy
from mergedindex.workload import WorkloadConfig


def sweep(backend: str, steps: int, workload: WorkloadConfig) -> list[dict]:
    rows = []
    for policy in Policy:
        for n in range(steps):
            so = round(n / (steps - 1), 4)
            wl = WorkloadConfig(workload.warehouses, workload.items_per_warehouse,
                                workload.orderlines_per_warehouse, so, policy, workload.seed)
            space = {r["structure"]: r for r in bench.report_space(bench.space_structures(wl, backend))}
            merged, view = space["merged"]["allocated_bytes"], space["matview"]["allocated_bytes"]
            rows.append({"policy": policy.value, "so": so, "merged_bytes": merged, "matview_bytes": view,
                         "matview_net_addition_bytes": space["matview"]["net_addition_bytes"],
                         "matview_vs_merged": f"{view / merged:.4f}" if merged else ""})
    return rows


def main(argv=None) -> int:
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("--backend", choices=bench.BACKENDS, default="btree")
    p.add_argument("--steps", type=int, default=11)
    p.add_argument("--warehouses", type=int, default=2)
    p.add_argument("--items-per-warehouse", type=int, default=500)
    p.add_argument("--orderlines-per-warehouse", type=int, default=5000)
    args = p.parse_args(argv)
    wl = WorkloadConfig(args.warehouses, args.items_per_warehouse, args.orderlines_per_warehouse)
    rows = sweep(args.backend, max(args.steps, 2), wl)
    sys.stdout.write(bench.to_csv(rows, rows[0].keys()))
    return 0


if __name__ == "__main__":
    sys.exit(main())
