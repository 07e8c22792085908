"""Deterministic stock/orderline databases and the new-order update stream.

Orderlines that should not join point at item ids in
(items_per_warehouse, 2 * items_per_warehouse], which no stock row has, so the
semi-join selectivity is exact: ceil(so * |orderline|) rows match.
"""
from __future__ import annotations

import math
import random
import string
from dataclasses import dataclass, field, replace
from typing import Iterator

from .deltas import Delta
from .encoding import (
    DIST_INFO_COUNT,
    DIST_INFO_WIDTH,
    OrderlineRecord,
    Policy,
    StockRecord,
)
from .errors import ConfigError

DISTRICTS = 10
MIN_LINES, MAX_LINES = 5, 15
_ALNUM = string.ascii_letters + string.digits
_EPOCH = 1_700_000_000


@dataclass(frozen=True)
class WorkloadConfig:
    warehouses: int = 2
    items_per_warehouse: int = 2000
    orderlines_per_warehouse: int = 20_000
    so: float = 1.0
    policy: Policy = Policy.ALL
    seed: int = 42

    def __post_init__(self):
        if min(self.warehouses, self.items_per_warehouse, self.orderlines_per_warehouse) < 0:
            raise ConfigError("workload counts must be non-negative")
        if not 0.0 <= self.so <= 1.0:
            raise ConfigError(f"so must lie in [0, 1], got {self.so}")
        object.__setattr__(self, "policy", Policy(self.policy))

    @property
    def orderlines(self) -> int:
        return self.warehouses * self.orderlines_per_warehouse

    @property
    def matching(self) -> int:
        # round first so 0.19 * 100 does not become 19.000000000000004 -> 20
        return math.ceil(round(self.so * self.orderlines, 9))


def _text(rng: random.Random, lo: int, hi: int) -> str:
    return "".join(rng.choices(_ALNUM, k=rng.randint(lo, hi)))


def _stock(rng: random.Random, w: int, i: int) -> StockRecord:
    return StockRecord(
        warehouse_id=w,
        item_id=i,
        quantity=rng.randint(10, 100),
        year_to_date=0,
        order_count=0,
        data=_text(rng, 26, 50),
        district_info=tuple("".join(rng.choices(_ALNUM, k=DIST_INFO_WIDTH)) for _ in range(DIST_INFO_COUNT)),
    )


def generate(config: WorkloadConfig) -> tuple[list[StockRecord], list[OrderlineRecord]]:
    rng = random.Random(config.seed)
    items = config.items_per_warehouse
    if config.matching and not items:
        raise ConfigError("so > 0 needs at least one item per warehouse")
    stocks = [_stock(rng, w, i) for w in range(1, config.warehouses + 1) for i in range(1, items + 1)]
    matching = set(rng.sample(range(config.orderlines), config.matching))
    orderlines = []
    position = 0
    for w in range(1, config.warehouses + 1):
        next_order = [1] * (DISTRICTS + 1)
        district = 0
        made = 0
        while made < config.orderlines_per_warehouse:
            district = district % DISTRICTS + 1
            order_id = next_order[district]
            next_order[district] += 1
            lines = min(rng.randint(MIN_LINES, MAX_LINES), config.orderlines_per_warehouse - made)
            for line in range(1, lines + 1):
                if position in matching:
                    item = rng.randint(1, items)
                else:
                    item = rng.randint(items + 1, 2 * max(items, 1))
                orderlines.append(OrderlineRecord(
                    warehouse_id=w,
                    district_id=district,
                    order_id=order_id,
                    line_number=line,
                    item_id=item,
                    supply_warehouse_id=w,
                    delivery_date=_EPOCH + rng.randrange(86_400 * 365),
                    quantity=5,
                    amount=rng.randint(1, 999_999),
                    district_info="".join(rng.choices(_ALNUM, k=DIST_INFO_WIDTH)),
                ))
                position += 1
            made += lines
    return stocks, orderlines


@dataclass(frozen=True)
class NewOrderLine:
    item_id: int
    quantity: int
    has_stock: bool


@dataclass(frozen=True)
class NewOrderTxn:
    warehouse_id: int
    district_id: int
    order_id: int
    lines: tuple[NewOrderLine, ...] = field(default_factory=tuple)


class NewOrderStream:
    """TPC-C style new-order transactions against a generated database.

    Keeps its own copy of stock values so each stock update carries exact
    before/after images. Lines referencing a missing item skip the stock update.
    """

    def __init__(self, config: WorkloadConfig, stocks, orderlines, seed: int | None = None):
        self.config = config
        self.rng = random.Random(config.seed + 1 if seed is None else seed)
        self.stock = {s.key: s for s in stocks}
        self.next_order: dict[tuple[int, int], int] = {}
        for o in orderlines:
            k = (o.warehouse_id, o.district_id)
            self.next_order[k] = max(self.next_order.get(k, 1), o.order_id + 1)

    def __iter__(self):
        return self

    def __next__(self) -> tuple[NewOrderTxn, list[Delta]]:
        return self.next()

    def _pick_items(self, count: int) -> list[int]:
        items = self.config.items_per_warehouse
        chosen: list[int] = []
        for _ in range(count):
            matching = items > 0 and self.rng.random() < self.config.so
            lo, hi = (1, items) if matching else (items + 1, 2 * max(items, 1))
            item = self.rng.randint(lo, hi)
            # distinct items per order when the domain allows it
            for _ in range(8):
                if item not in chosen:
                    break
                item = self.rng.randint(lo, hi)
            chosen.append(item)
        return chosen

    def next(self) -> tuple[NewOrderTxn, list[Delta]]:
        cfg = self.config
        rng = self.rng
        w = rng.randint(1, max(cfg.warehouses, 1))
        d = rng.randint(1, DISTRICTS)
        order_id = self.next_order.get((w, d), 1)
        self.next_order[(w, d)] = order_id + 1
        lines = []
        deltas = []
        for number, item in enumerate(self._pick_items(rng.randint(MIN_LINES, MAX_LINES)), start=1):
            quantity = rng.randint(1, 10)
            stock = self.stock.get((w, item))
            lines.append(NewOrderLine(item, quantity, stock is not None))
            if stock is not None:
                left = stock.quantity - quantity
                new = replace(
                    stock,
                    quantity=left if left >= 10 else left + 91,
                    year_to_date=stock.year_to_date + quantity,
                    order_count=stock.order_count + 1,
                )
                self.stock[new.key] = new
                deltas.append(Delta.update(stock, new))
                dist_info = stock.district_info[d - 1]
            else:
                dist_info = "".join(rng.choices(_ALNUM, k=DIST_INFO_WIDTH))
            deltas.append(Delta.insert(OrderlineRecord(
                warehouse_id=w,
                district_id=d,
                order_id=order_id,
                line_number=number,
                item_id=item,
                supply_warehouse_id=w,
                delivery_date=0,
                quantity=quantity,
                amount=rng.randint(1, 999_999),
                district_info=dist_info,
            )))
        return NewOrderTxn(w, d, order_id, tuple(lines)), deltas


def query_stream(config: WorkloadConfig, kind: str, seed: int | None = None) -> Iterator:
    """Point queries yield (warehouse_id, item_id); scans yield warehouse_id."""
    rng = random.Random(config.seed + 2 if seed is None else seed)
    warehouses = max(config.warehouses, 1)
    items = max(config.items_per_warehouse, 1)
    if kind == "point":
        while True:
            yield rng.randint(1, warehouses), rng.randint(1, items)
    elif kind == "scan":
        while True:
            yield rng.randint(1, warehouses)
    else:
        raise ValueError(f"unknown query kind {kind!r}")


def example_database() -> tuple[list[StockRecord], list[OrderlineRecord]]:
    """Two stock rows and four orderlines in warehouse 1, two orderlines per item."""
    info = tuple(f"dist{d:02d}".ljust(DIST_INFO_WIDTH, "x") for d in range(1, DIST_INFO_COUNT + 1))
    stocks = [
        StockRecord(1, 1, quantity=50, year_to_date=0, order_count=0, data="s1", district_info=info),
        StockRecord(1, 2, quantity=60, year_to_date=0, order_count=0, data="s2", district_info=info),
    ]
    orderlines = [
        OrderlineRecord(1, 1, 1, line, item, supply_warehouse_id=1, delivery_date=_EPOCH,
                        quantity=5, amount=100 * line, district_info=info[0])
        for line, item in ((1, 1), (2, 1), (3, 2), (4, 2))
    ]
    return stocks, orderlines
