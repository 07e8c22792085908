"""Acceptance criteria 1 to 11. Each test prints one PASS/FAIL line, then asserts.

Run alone with ``pytest tests/test_acceptance.py -v -s``; the lines also show
without ``-s`` because they are written with capture disabled.
"""
import random
import time
from collections import Counter
from dataclasses import replace

import pytest

from mergedindex import bench
from mergedindex.baselines import MaterializedJoinView, TraditionalIndexes
from mergedindex.deltas import Delta
from mergedindex.encoding import Policy, SourceTag
from mergedindex.joins import JoinType
from mergedindex.merged_index import MergedIndex
from mergedindex.store import BufferPool
from mergedindex.verify import run_verify, verify_golden
from mergedindex.workload import WorkloadConfig, example_database, generate

GRID_WORKLOAD = WorkloadConfig(2, 500, 5000, seed=42)
_timings: dict[str, float] = {}


@pytest.fixture
def report(capsys):
    def emit(number: int, ok: bool, detail: str) -> None:
        with capsys.disabled():
            print(f"\nACCEPTANCE {number:>2}: {'PASS' if ok else 'FAIL'}  {detail}")
        assert ok, detail
    return emit


def reset(structure):
    for store in structure.stores:
        store.counters.reset()


def test_01_oracle_equivalence(report):
    start = time.perf_counter()
    result = run_verify(seeds=100)
    seconds = time.perf_counter() - start
    _timings["verify"] = seconds
    failed = len(result.failures)
    report(1, result.passed and seconds < 120,
           f"{len(result.checks) - failed}/{len(result.checks)} oracle checks over 100 seeds in {seconds:.1f}s (limit 120s)")


def test_02_golden_example(report):
    checks = verify_golden()
    (s1, s2), (ol1, ol2, ol3, ol4) = example_database()
    ok = all(c.passed for c in checks)
    for backend in bench.BACKENDS:
        for name in bench.STRUCTURES:
            s = bench.create_structure(name, backend, BufferPool(), Policy.ALL)
            s.bulk_load([s1, s2], [ol1, ol2, ol3, ol4])
            ok &= [(r.stock, r.orderline) for r in s.point_join((1, 2))] == [(s2, ol3), (s2, ol4)]
            ok &= [(r.stock, r.orderline) for r in s.full_join()] == [(s1, ol1), (s1, ol2), (s2, ol3), (s2, ol4)]
    report(2, ok, f"{len(checks)} structure x backend golden checks, point (1,2) -> [(s2,ol3),(s2,ol4)]")


def test_03_point_lookup_traversals(report):
    seen = {}
    for structure in ("merged", "traditional"):
        for policy in Policy:
            for jt in bench.QUERY_JOINS:
                cfg = bench.ExperimentConfig(backend="btree", structure=structure, phase="point", policy=policy,
                                             jt=jt, workload=GRID_WORKLOAD, ops=100)
                seen.setdefault(structure, set()).add(bench.run_experiment(cfg).traversals_per_op)
    ok = seen == {"merged": {1.0}, "traditional": {2.0}}
    report(3, ok, f"traversals/op merged={sorted(seen['merged'])} traditional={sorted(seen['traditional'])}")


def _group(k):
    (s1, _), orderlines = example_database()
    return s1, [replace(orderlines[0], line_number=n) for n in range(1, k + 1)]


def test_04_maintenance_counts(report):
    problems = []
    for k in (0, 1, 3):
        s1, orderlines = _group(k)
        update = Delta.update(s1, replace(s1, quantity=7))
        merged = MergedIndex.create("btree")
        merged.bulk_load([s1], orderlines)
        reset(merged)
        merged.apply(update)
        c = merged.store.counters
        if (c.mutations, c.probes) != (1, 0):
            problems.append(f"merged k={k}: {c.mutations} mutations, {c.probes} probes")
        view = MaterializedJoinView.create("btree", jt_stored=JoinType.INNER)
        view.bulk_load([s1], orderlines)
        reset(view)
        view.apply(update)
        support_probes = sum(s.counters.probes for s in view.support.stores)
        if support_probes < 1 or view.view.counters.mutations != k:
            problems.append(f"matview k={k}: {support_probes} probes, {view.view.counters.mutations} view mutations")
    for k in (0, 1):
        s1, (ol,) = _group(1)
        stocks = [s1] if k else []
        merged = MergedIndex.create("btree")
        merged.bulk_load(stocks, [])
        reset(merged)
        merged.apply(Delta.insert(ol))
        if (merged.store.counters.mutations, merged.store.counters.probes) != (1, 0):
            problems.append(f"merged orderline insert k={k}")
        view = MaterializedJoinView.create("btree", jt_stored=JoinType.INNER)
        view.bulk_load(stocks, [])
        reset(view)
        view.apply(Delta.insert(ol))
        if view.support.stock_index.counters.probes < 1 or view.view.counters.mutations != k:
            problems.append(f"matview orderline insert k={k}")
    merged, traditional = (_default_update(s) for s in ("merged", "traditional"))
    ratio = merged.node_accesses_per_op / traditional.node_accesses_per_op
    ok = not problems and ratio <= 1.1
    report(4, ok, f"constructed k in {{0,1,3}}: {'; '.join(problems) or 'exact'}; "
                  f"default update accesses merged/traditional = {ratio:.3f} (limit 1.1)")


def test_05_space_identities(report):
    wl = replace(WorkloadConfig(), so=1.0, policy=Policy.ALL)
    stocks, orderlines = generate(wl)
    fan_out = len(orderlines) / len(stocks)
    rows = {r["structure"]: r for r in bench.report_space(bench.space_structures(wl, "btree"))}
    merged, traditional, view = rows["merged"], rows["traditional"], rows["matview"]
    identity = merged["payload_bytes"] == traditional["payload_bytes"] + merged["entries"]
    smaller = merged["allocated_bytes"] < view["allocated_bytes"]
    net = view["net_addition_bytes"] > 0
    report(5, identity and smaller and net and fan_out >= 2,
           f"payload merged-traditional={merged['payload_bytes'] - traditional['payload_bytes']} "
           f"entries={merged['entries']}; fan-out {fan_out:.1f}; allocated merged={merged['allocated_bytes']} "
           f"< view={view['allocated_bytes']}; net addition={view['net_addition_bytes']}")


def test_06_compression_identity(report):
    bad = []
    for seed in range(10):
        wl = WorkloadConfig(2, 50, 400, so=[0.2, 0.5, 1.0][seed % 3], seed=seed)
        stocks, orderlines = generate(wl)
        merged = MergedIndex.create("btree")
        merged.bulk_load(stocks, orderlines)
        view = MaterializedJoinView.create("btree", jt_stored=JoinType.INNER)
        view.bulk_load(stocks, orderlines)
        r = Counter((s.warehouse_id, s.item_id) for s in stocks)
        o = Counter((x.warehouse_id, x.item_id) for x in orderlines)
        expected_view = sum(n * o[key] for key, n in r.items())
        if merged.store.space().entries != len(stocks) + len(orderlines):
            bad.append(f"seed {seed} merged entries")
        if view.view.space().entries != expected_view:
            bad.append(f"seed {seed} view rows {view.view.space().entries} != {expected_view}")
    report(6, not bad, "10 seeds: merged entries = |stock|+|orderline|, view rows = sum r_k*s_k"
                       + (f"; {bad}" if bad else ""))


def test_07_lsm_bulk_load(report):
    stocks, orderlines = generate(WorkloadConfig())
    rng = random.Random(7)
    stocks, orderlines = rng.sample(stocks, len(stocks)), rng.sample(orderlines, len(orderlines))
    merged = MergedIndex.create("lsm", BufferPool(bench.CAPACITIES["large"]))
    merged.bulk_load(stocks, orderlines)
    traditional = TraditionalIndexes.create("lsm", BufferPool(bench.CAPACITIES["large"]))
    traditional.bulk_load(stocks, orderlines)
    m_writes = sum(s.counters.node_writes for s in merged.stores)
    t_writes = sum(s.counters.node_writes for s in traditional.stores)
    ratio = m_writes / t_writes
    merged.store.compact()
    reference = MergedIndex.create("btree")
    reference.bulk_load(stocks, orderlines)
    same = merged.store.items() == reference.store.items()
    same &= list(merged.full_join(JoinType.FULL_OUTER)) == list(reference.full_join(JoinType.FULL_OUTER))
    same &= all(list(merged.extract_table(t)) == list(reference.extract_table(t)) for t in SourceTag)
    report(7, ratio <= 1.15 and same,
           f"load page writes merged={m_writes} traditional={t_writes} ratio={ratio:.3f} (limit 1.15); "
           f"compacted scan {'equals' if same else 'differs from'} b-tree")


def test_08_memory_regimes(report):
    misses = {}
    for structure in bench.STRUCTURES:
        for buffer in bench.BUFFERS:
            cfg = bench.ExperimentConfig(backend="btree", buffer=buffer, structure=structure, phase="scan",
                                         workload=GRID_WORKLOAD, ops=4)
            misses[structure, buffer] = bench.run_experiment(cfg).misses_per_op
    ok = all(misses[s, "small"] > misses[s, "large"] == 0 for s in bench.STRUCTURES)
    report(8, ok, "scan misses/op small vs large: " + ", ".join(
        f"{s} {misses[s, 'small']:.1f} vs {misses[s, 'large']:.1f}" for s in bench.STRUCTURES))


_update_reports: dict[str, bench.MetricsReport] = {}


def _default_update(structure: str) -> bench.MetricsReport:
    if structure not in _update_reports:
        cfg = bench.ExperimentConfig(backend="btree", structure=structure, phase="update")
        _update_reports[structure] = bench.run_experiment(cfg)
    return _update_reports[structure]


def test_09_read_dominance(report):
    shares = {s: _default_update(s).read_share for s in bench.STRUCTURES}
    report(9, all(v >= 0.8 for v in shares.values()),
           "update read share (limit 0.8): " + ", ".join(f"{s} {v:.3f}" for s, v in shares.items()))


def test_10_non_blocking(report):
    details, ok = [], True
    for scale in (1, 10):
        wl = WorkloadConfig(2, 40 * scale, 400 * scale, so=0.5, seed=5)
        stocks, orderlines = generate(wl)
        largest = max(Counter(s.join_key for s in stocks).values())
        merged = MergedIndex.create("btree")
        merged.bulk_load(stocks, orderlines)
        traditional = TraditionalIndexes.create("btree")
        traditional.bulk_load(stocks, orderlines)
        for name, s in (("full_join", merged), ("merge_join", traditional)):
            for jt in JoinType:
                rows = sum(1 for _ in s.full_join(jt))
                ok &= s.last_stats.peak_buffered == largest and rows >= 0
        details.append(f"{len(stocks) + len(orderlines)} entries: peak {merged.last_stats.peak_buffered}/"
                       f"{traditional.last_stats.peak_buffered} (largest buffered group {largest})")
    report(10, ok, "; ".join(details))


def test_11_grid_time_and_determinism(report, tmp_path):
    configs = bench.parse_grid(bench.DEFAULT_GRID)
    start = time.perf_counter()
    first = bench.write_outputs(bench.run_grid(configs), tmp_path / "a")
    grid_seconds = time.perf_counter() - start
    verify_seconds = _timings.get("verify")
    if verify_seconds is None:
        start = time.perf_counter()
        run_verify(seeds=100)
        verify_seconds = time.perf_counter() - start
    second = bench.write_outputs(bench.run_grid(configs), tmp_path / "b")
    identical = first["csv"].read_bytes() == second["csv"].read_bytes()
    identical &= first["ratios"].read_bytes() == second["ratios"].read_bytes()
    total = grid_seconds + verify_seconds
    report(11, total < 600 and identical,
           f"{len(configs)} grid rows {grid_seconds:.0f}s + verify {verify_seconds:.0f}s = {total:.0f}s (limit 600s); "
           f"CSV {'byte-identical' if identical else 'differs'} across two runs")
