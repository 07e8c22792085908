"""Oracle equivalence suite shared by the ``verify`` subcommand and the tests.

Each seed builds a small random database, loads it into every structure on
both backends, then alternates random deltas with full, range and point join
queries, comparing each answer with the nested-loops oracle.
"""
from __future__ import annotations

import random
from dataclasses import dataclass, field, replace
from typing import Callable, Iterator

from .baselines import MaterializedJoinView, TraditionalIndexes
from .deltas import Delta
from .encoding import DIST_INFO_COUNT, DIST_INFO_WIDTH, OrderlineRecord, Policy, StockRecord
from .joins import JoinRow, JoinType
from .merged_index import MergedIndex
from .oracle import ShadowDb, canonical, multiset_diff, nested_loops_join
from .store import BufferPool
from .workload import WorkloadConfig, example_database, generate

SELECTIVITIES = (0.2, 0.5, 1.0)
# small pages and memtables so even tiny databases span several nodes and runs
STORE_OPTIONS = {"btree": {"page_size": 2048}, "lsm": {"page_size": 2048, "memtable_bytes": 1024, "max_runs": 3}}


@dataclass
class Check:
    name: str
    passed: bool
    detail: str = ""


@dataclass
class VerifyResult:
    checks: list[Check] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    @property
    def failures(self) -> list[Check]:
        return [c for c in self.checks if not c.passed]


def structures(backend: str, policy: Policy = Policy.ALL) -> dict[str, object]:
    opts = STORE_OPTIONS[backend]
    pool = lambda: BufferPool(64, page_size=opts["page_size"])
    return {
        "merged": MergedIndex.create(backend, pool(), policy, **opts),
        "traditional": TraditionalIndexes.create(backend, pool(), policy, **opts),
        "matview-inner": MaterializedJoinView.create(backend, pool(), JoinType.INNER, policy, **opts),
        "matview-full": MaterializedJoinView.create(backend, pool(), JoinType.FULL_OUTER, policy, **opts),
    }


def _serves(structure, jt: JoinType) -> bool:
    return not isinstance(structure, MaterializedJoinView) or structure.serves(jt)


def _text(rng: random.Random, n: int) -> str:
    return "".join(rng.choices("abcdefghijklmnopqrstuvwxyz0123456789", k=n))


def _stock(rng: random.Random, w: int, i: int) -> StockRecord:
    return StockRecord(w, i, rng.randint(10, 100), rng.randint(0, 50), rng.randint(0, 9), _text(rng, rng.randint(26, 50)),
                       tuple(_text(rng, DIST_INFO_WIDTH) for _ in range(DIST_INFO_COUNT)))


def _orderline(rng: random.Random, key: tuple[int, int, int, int], item: int) -> OrderlineRecord:
    w, d, o, n = key
    return OrderlineRecord(w, d, o, n, item, w, rng.randint(0, 10**6), rng.randint(1, 10),
                           rng.randint(1, 999_999), _text(rng, DIST_INFO_WIDTH))


def random_deltas(db: ShadowDb, rng: random.Random, count: int, warehouses: int, items: int) -> Iterator[Delta]:
    """Valid random deltas against ``db``, applied to it as they are yielded.

    Covers inserts, deletes, in-place updates and orderline updates that move
    the row to another join key.
    """
    items = max(items, 1)
    for _ in range(count):
        table = rng.choice(("stock", "orderline"))
        kind = rng.choice(("insert", "delete", "update"))
        rows = db.stock if table == "stock" else db.orderline
        if kind != "insert" and not rows:
            kind = "insert"
        if table == "stock":
            if kind == "insert":
                free = [(w, i) for w in range(1, warehouses + 1) for i in range(1, 2 * items + 1)
                        if (w, i) not in db.stock]
                if not free:
                    continue
                delta = Delta.insert(_stock(rng, *rng.choice(free)))
            else:
                old = db.stock[rng.choice(sorted(db.stock))]
                if kind == "delete":
                    delta = Delta.delete(old)
                else:
                    delta = Delta.update(old, replace(old, quantity=rng.randint(10, 100), order_count=old.order_count + 1))
        else:
            if kind == "insert":
                key = (rng.randint(1, warehouses), rng.randint(1, 10), rng.randint(1, 10**6), rng.randint(1, 15))
                if key in db.orderline:
                    continue
                delta = Delta.insert(_orderline(rng, key, rng.randint(1, 2 * items)))
            else:
                old = db.orderline[rng.choice(sorted(db.orderline))]
                if kind == "delete":
                    delta = Delta.delete(old)
                elif rng.random() < 0.5:
                    delta = Delta.update(old, replace(old, amount=rng.randint(1, 999_999)))
                else:
                    delta = Delta.update(old, replace(old, item_id=rng.randint(1, 2 * items)))
        db.apply(delta)
        yield delta


def _check_all(checks: list[Check], label: str, structs: dict, db: ShadowDb, policy: Policy, rng: random.Random) -> None:
    warehouses = sorted({k[0] for k in db.stock} | {k[0] for k in db.orderline}) or [1]
    join_keys = sorted({s.join_key for s in db.stock.values()} | {o.join_key for o in db.orderline.values()})
    probe_keys = rng.sample(join_keys, min(3, len(join_keys))) + [(warehouses[0], 10**6)]
    for jt in JoinType:
        expected = nested_loops_join(db, jt, policy)
        for name, s in structs.items():
            if not _serves(s, jt):
                continue
            ok = True
            got = list(s.full_join(jt))
            extra, missing = multiset_diff(got, expected)
            ok &= not extra and not missing
            for w in warehouses:
                want = [r for r in expected if r.join_key[0] == w]
                ok &= canonical(s.range_join(w, jt)) == canonical(want)
            for key in probe_keys:
                want = [r for r in expected if r.join_key == key]
                ok &= canonical(s.point_join(key, jt)) == canonical(want)
            detail = "" if ok else f"{len(extra)} unexpected, {len(missing)} missing rows in full join"
            checks.append(Check(f"{label} {name} {jt.value}", ok, detail))


def verify_seed(seed: int, deltas: int = 24, backends=("btree", "lsm")) -> list[Check]:
    rng = random.Random(seed)
    so = SELECTIVITIES[seed % len(SELECTIVITIES)]
    policy = list(Policy)[seed % len(Policy)]
    warehouses = rng.randint(1, 2)
    items = rng.randint(1, 64 // warehouses)
    lines = rng.randint(0, 256 // warehouses)
    cfg = WorkloadConfig(warehouses, items, lines, so, policy, seed)
    stocks, orderlines = generate(cfg)
    checks: list[Check] = []
    for backend in backends:
        db = ShadowDb.from_rows(stocks, orderlines)
        structs = structures(backend, policy)
        for s in structs.values():
            s.bulk_load(stocks, orderlines)
        label = f"seed={seed} so={so} {policy.value} {backend}"
        _check_all(checks, f"{label} load", structs, db, policy, rng)
        for delta in random_deltas(db, rng, deltas, warehouses, items):
            for s in structs.values():
                s.apply(delta)
        _check_all(checks, f"{label} deltas", structs, db, policy, rng)
        if backend == "lsm":
            for s in structs.values():
                for store in s.stores:
                    store.compact()
            _check_all(checks, f"{label} compacted", structs, db, policy, rng)
    return checks


def verify_golden() -> list[Check]:
    """The six-row example: four inner rows from every structure, two for key (1, 2)."""
    stocks, orderlines = example_database()
    s1, s2 = stocks
    ol1, ol2, ol3, ol4 = orderlines
    table = [JoinRow((1, 1), ol1, s1), JoinRow((1, 1), ol2, s1), JoinRow((1, 2), ol3, s2), JoinRow((1, 2), ol4, s2)]
    checks = []
    for backend in ("btree", "lsm"):
        for name, s in structures(backend).items():
            s.bulk_load(stocks, orderlines)
            ok = list(s.range_join(1, JoinType.INNER)) == table
            ok &= s.point_join((1, 2), JoinType.INNER) == table[2:]
            checks.append(Check(f"golden {backend} {name}", ok))
    return checks


def run_verify(seeds: int = 100, deltas: int = 24, progress: Callable[[int], None] | None = None) -> VerifyResult:
    result = VerifyResult(verify_golden())
    for seed in range(seeds):
        result.checks.extend(verify_seed(seed, deltas))
        if progress is not None:
            progress(seed)
    return result
