"""Brute-force ground truth: dict-backed tables and nested-loops joins.

Shares only the record, delta and join-row types with the structures under
test; no store, codec or join-operator code runs here.
"""
from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field
from typing import Iterable

from .deltas import Delta
from .encoding import OrderlineRecord, Policy, SourceTag, StockRecord
from .errors import NotFoundError
from .joins import JoinRow, JoinType


@dataclass
class ShadowDb:
    stock: dict[tuple, StockRecord] = field(default_factory=dict)
    orderline: dict[tuple, OrderlineRecord] = field(default_factory=dict)

    @classmethod
    def from_rows(cls, stocks: Iterable[StockRecord], orderlines: Iterable[OrderlineRecord]) -> "ShadowDb":
        db = cls()
        for s in stocks:
            db.stock[s.key] = s
        for o in orderlines:
            db.orderline[o.key] = o
        return db

    def table(self, source: SourceTag) -> dict:
        return self.stock if SourceTag(source) is SourceTag.STOCK else self.orderline

    def apply(self, delta: Delta) -> None:
        table = self.table(delta.table)
        if delta.kind == "insert":
            table[delta.new.key] = delta.new
            return
        if delta.old.key not in table:
            raise NotFoundError(delta.old.key)
        del table[delta.old.key]
        if delta.kind == "update":
            table[delta.new.key] = delta.new

    def restricted(self, policy: Policy) -> "ShadowDb":
        return ShadowDb(
            {k: v.restricted(policy) for k, v in self.stock.items()},
            {k: v.restricted(policy) for k, v in self.orderline.items()},
        )

    def copy(self) -> "ShadowDb":
        return ShadowDb(dict(self.stock), dict(self.orderline))


def nested_loops_join(db: ShadowDb, jt: JoinType, policy: Policy | None = None) -> list[JoinRow]:
    """Every pair compared on (warehouse_id, item_id); canonically sorted output."""
    jt = JoinType(jt)
    if policy is not None:
        db = db.restricted(policy)
    stocks = list(db.stock.values())
    orderlines = list(db.orderline.values())
    rows = []
    stock_matched = [False] * len(stocks)
    for o in orderlines:
        partners = []
        for j, s in enumerate(stocks):
            if o.warehouse_id == s.warehouse_id and o.item_id == s.item_id:
                partners.append(s)
                stock_matched[j] = True
        key = (o.warehouse_id, o.item_id)
        if jt in (JoinType.INNER, JoinType.LEFT_OUTER, JoinType.RIGHT_OUTER, JoinType.FULL_OUTER):
            rows.extend(JoinRow(key, o, s) for s in partners)
        if not partners and jt in (JoinType.LEFT_OUTER, JoinType.FULL_OUTER):
            rows.append(JoinRow(key, o, None))
        if partners and jt is JoinType.LEFT_SEMI:
            rows.append(JoinRow(key, o, None))
    for s, matched in zip(stocks, stock_matched):
        key = (s.warehouse_id, s.item_id)
        if not matched and jt in (JoinType.RIGHT_OUTER, JoinType.FULL_OUTER):
            rows.append(JoinRow(key, None, s))
        if matched and jt is JoinType.RIGHT_SEMI:
            rows.append(JoinRow(key, None, s))
    return sorted(rows, key=canonical_key)


def canonical_key(row: JoinRow) -> tuple:
    """(join key, orderline PK or sentinel, stock PK or sentinel); absent sorts first."""
    o = (0,) if row.orderline is None else (1, *row.orderline.key)
    s = (0,) if row.stock is None else (1, *row.stock.key)
    return (row.join_key, o, s)


def canonical(rows: Iterable[JoinRow]) -> list[JoinRow]:
    return sorted(rows, key=canonical_key)


def same_multiset(a: Iterable[JoinRow], b: Iterable[JoinRow]) -> bool:
    return Counter(a) == Counter(b)


def multiset_diff(actual: Iterable[JoinRow], expected: Iterable[JoinRow]) -> tuple[list, list]:
    """(rows only in ``actual``, rows only in ``expected``), counting duplicates."""
    a, e = Counter(actual), Counter(expected)
    return list((a - e).elements()), list((e - a).elements())


def inner_row_count(db: ShadowDb) -> int:
    """Sum over join keys of |stock group| * |orderline group|."""
    s = Counter((r.warehouse_id, r.item_id) for r in db.stock.values())
    o = Counter((r.warehouse_id, r.item_id) for r in db.orderline.values())
    return sum(n * o[k] for k, n in s.items())


def full_outer_row_count(db: ShadowDb) -> int:
    s = Counter((r.warehouse_id, r.item_id) for r in db.stock.values())
    o = Counter((r.warehouse_id, r.item_id) for r in db.orderline.values())
    total = 0
    for k in set(s) | set(o):
        r, c = s[k], o[k]
        total += r * c if r and c else r + c
    return total
