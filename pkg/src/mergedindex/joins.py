"""Join types, join rows and the per-key-group join operator.

The operator consumes one stream of (join key, source, record) in join-key
order with Stock records ahead of Orderline records inside each group, as a
merged-index scan delivers them (and as two index cursors do once
interleaved). It buffers the Stock side of the current group and streams the
Orderline side, so memory is bounded by one group and the first row appears
as soon as the first group with output has been read.

"Left" is the orderline side and "right" the stock side throughout.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Iterable, Iterator

from .encoding import OrderlineRecord, Record, SourceTag, StockRecord


class JoinType(str, enum.Enum):
    INNER = "inner"
    LEFT_OUTER = "left_outer"
    RIGHT_OUTER = "right_outer"
    FULL_OUTER = "full_outer"
    LEFT_SEMI = "left_semi"
    RIGHT_SEMI = "right_semi"

    @classmethod
    def parse(cls, text: str) -> "JoinType":
        norm = text.strip().lower().replace("-", "_").replace(" ", "_")
        aliases = {"full": "full_outer", "fullouter": "full_outer", "left": "left_outer",
                   "right": "right_outer", "leftouter": "left_outer", "rightouter": "right_outer",
                   "leftsemi": "left_semi", "rightsemi": "right_semi"}
        return cls(aliases.get(norm, norm))


_PAIRS = {JoinType.INNER, JoinType.LEFT_OUTER, JoinType.RIGHT_OUTER, JoinType.FULL_OUTER}
_KEEP_UNMATCHED_LEFT = {JoinType.LEFT_OUTER, JoinType.FULL_OUTER}
_KEEP_UNMATCHED_RIGHT = {JoinType.RIGHT_OUTER, JoinType.FULL_OUTER}


@dataclass(frozen=True)
class JoinRow:
    join_key: tuple[int, int]
    orderline: OrderlineRecord | None
    stock: StockRecord | None

    def __post_init__(self):
        if self.orderline is None and self.stock is None:
            raise ValueError("a join row needs at least one side")


@dataclass
class JoinStats:
    groups: int = 0
    rows: int = 0
    buffered: int = 0
    peak_buffered: int = 0


Tagged = tuple[tuple[int, int], SourceTag, Record]


def group_join(entries: Iterable[Tagged], jt: JoinType, stats: JoinStats | None = None) -> Iterator[JoinRow]:
    jt = JoinType(jt)
    stats = stats if stats is not None else JoinStats()
    current = None
    stocks: list[StockRecord] = []
    matched = False
    for join_key, tag, record in entries:
        if join_key != current:
            if current is not None:
                yield from _close(current, stocks, matched, jt, stats)
            current, stocks, matched = join_key, [], False
            stats.groups += 1
            stats.buffered = 0
        if tag is SourceTag.STOCK:
            stocks.append(record)
            stats.buffered = len(stocks)
            stats.peak_buffered = max(stats.peak_buffered, stats.buffered)
            continue
        if stocks and not matched and jt is JoinType.RIGHT_SEMI:
            for s in stocks:
                stats.rows += 1
                yield JoinRow(join_key, None, s)
        matched = matched or bool(stocks)
        if jt in _PAIRS:
            for s in stocks:
                stats.rows += 1
                yield JoinRow(join_key, record, s)
            if not stocks and jt in _KEEP_UNMATCHED_LEFT:
                stats.rows += 1
                yield JoinRow(join_key, record, None)
        elif jt is JoinType.LEFT_SEMI and stocks:
            stats.rows += 1
            yield JoinRow(join_key, record, None)
    if current is not None:
        yield from _close(current, stocks, matched, jt, stats)


def _close(join_key, stocks, matched, jt, stats) -> Iterator[JoinRow]:
    if not matched and jt in _KEEP_UNMATCHED_RIGHT:
        for s in stocks:
            stats.rows += 1
            yield JoinRow(join_key, None, s)


def interleave(stocks: Iterator[StockRecord], orderlines: Iterator[OrderlineRecord]) -> Iterator[Tagged]:
    """Lockstep merge of two join-key-ordered cursors; Stock first on equal keys."""
    s = next(stocks, None)
    o = next(orderlines, None)
    while s is not None or o is not None:
        if o is None or (s is not None and s.join_key <= o.join_key):
            yield s.join_key, SourceTag.STOCK, s
            s = next(stocks, None)
        else:
            yield o.join_key, SourceTag.ORDERLINE, o
            o = next(orderlines, None)
