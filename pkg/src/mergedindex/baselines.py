"""The two structures the merged index is measured against.

``TraditionalIndexes`` keeps one index per table and answers joins with a
merge join over two cursors. ``MaterializedJoinView`` stores the denormalized
join result, index-organized by join key, and keeps it fresh from base-table
deltas; it needs both single-table indexes to find matches.
"""
from __future__ import annotations

from typing import Iterable, Iterator, Sequence

from .deltas import Delta
from .encoding import (
    ORDERLINE_KEY_KINDS,
    STOCK_KEY_KINDS,
    U8,
    U32,
    OrderlineRecord,
    Policy,
    Record,
    SourceTag,
    StockRecord,
    decode_key,
    decode_payload,
    encode_key,
    join_key_prefix,
    orderline_from,
    orderline_index_key,
    prefix_successor,
    project,
    stock_from,
    stock_index_key,
)
from .errors import IntegrityError, NotFoundError, UnsupportedJoinError
from .joins import JoinRow, JoinStats, JoinType, group_join, interleave
from .store import BufferPool, OrderedStore, make_store


class TraditionalIndexes:
    def __init__(self, stock_index: OrderedStore, orderline_index: OrderedStore, policy: Policy = Policy.ALL):
        self.stock_index = stock_index
        self.orderline_index = orderline_index
        self.policy = Policy(policy)
        self.last_stats = JoinStats()

    @classmethod
    def create(cls, backend: str = "btree", pool: BufferPool | None = None,
               policy: Policy = Policy.ALL, **store_options) -> "TraditionalIndexes":
        pool = pool if pool is not None else BufferPool()
        return cls(
            make_store(backend, "stock", pool, **store_options),
            make_store(backend, "orderline", pool, **store_options),
            policy,
        )

    @property
    def stores(self) -> list[OrderedStore]:
        return [self.stock_index, self.orderline_index]

    def _index_for(self, record: Record) -> tuple[OrderedStore, bytes]:
        if isinstance(record, StockRecord):
            return self.stock_index, stock_index_key(*record.key)
        return self.orderline_index, orderline_index_key(record)

    def bulk_load(self, stocks: Iterable[StockRecord], orderlines: Iterable[OrderlineRecord]) -> None:
        self.stock_index.bulk_load((stock_index_key(*s.key), project(s, self.policy)) for s in stocks)
        self.orderline_index.bulk_load((orderline_index_key(o), project(o, self.policy)) for o in orderlines)

    def apply(self, delta: Delta) -> None:
        maintain_traditional(self, delta)

    # -- cursors -------------------------------------------------------------

    def stock_cursor(self, prefix: Sequence[int] = ()) -> Iterator[StockRecord]:
        entries = self.stock_index.prefix_scan(join_key_prefix(*prefix)) if prefix \
            else self.stock_index.range_scan()
        for key, value in entries:
            columns, _ = decode_payload(SourceTag.STOCK, value, self.policy)
            yield stock_from(decode_key(key, STOCK_KEY_KINDS), columns)

    def orderline_cursor(self, prefix: Sequence[int] = ()) -> Iterator[OrderlineRecord]:
        entries = self.orderline_index.prefix_scan(join_key_prefix(*prefix)) if prefix \
            else self.orderline_index.range_scan()
        for key, value in entries:
            columns, _ = decode_payload(SourceTag.ORDERLINE, value, self.policy)
            w, i, d, o, n = decode_key(key, ORDERLINE_KEY_KINDS)
            yield orderline_from((w, i), (d, o, n), columns)

    def read_stock(self, warehouse_id: int, item_id: int) -> StockRecord | None:
        value = self.stock_index.get(stock_index_key(warehouse_id, item_id))
        if value is None:
            return None
        columns, _ = decode_payload(SourceTag.STOCK, value, self.policy)
        return stock_from((warehouse_id, item_id), columns)

    # -- joins ---------------------------------------------------------------

    def merge_join(self, jt: JoinType = JoinType.INNER, prefix: Sequence[int] = ()) -> Iterator[JoinRow]:
        """Merge join over one cursor per index; output in join-key order."""
        self.last_stats = JoinStats()
        return group_join(
            interleave(self.stock_cursor(prefix), self.orderline_cursor(prefix)), jt, self.last_stats
        )

    def point_join(self, join_key: tuple[int, int], jt: JoinType = JoinType.INNER) -> list[JoinRow]:
        return list(self.merge_join(jt, join_key))

    def range_join(self, warehouse_id: int, jt: JoinType = JoinType.INNER) -> Iterator[JoinRow]:
        return self.merge_join(jt, (warehouse_id,))

    def full_join(self, jt: JoinType = JoinType.INNER) -> Iterator[JoinRow]:
        return self.merge_join(jt)

    def extract_table(self, source: SourceTag) -> Iterator[Record]:
        return self.stock_cursor() if SourceTag(source) is SourceTag.STOCK else self.orderline_cursor()


def maintain_traditional(ti: TraditionalIndexes, delta: Delta) -> None:
    """Reflect one delta in exactly one index with one mutation (two if the key moves)."""
    try:
        if delta.kind == "insert":
            index, key = ti._index_for(delta.new)
            index.put(key, project(delta.new, ti.policy))
        elif delta.kind == "delete":
            index, key = ti._index_for(delta.old)
            index.delete(key, must_exist=True)
        else:
            index, old_key = ti._index_for(delta.old)
            _, new_key = ti._index_for(delta.new)
            if new_key == old_key:
                index.update(new_key, project(delta.new, ti.policy))
            else:
                index.delete(old_key, must_exist=True)
                index.put(new_key, project(delta.new, ti.policy))
    except KeyError:
        image = delta.old if delta.old is not None else delta.new
        raise NotFoundError(image.key) from None


# presence discriminant inside a view key group
MATCHED = 0
ORDERLINE_ONLY = 1
STOCK_ONLY = 2

_ROW_KINDS = (U32, U32, U8, U32, U32, U32)
_STOCK_ONLY_KINDS = (U32, U32, U8)


def _matched_key(o: OrderlineRecord) -> bytes:
    return encode_key((o.warehouse_id, o.item_id, MATCHED, *o.remainder), _ROW_KINDS)


def _orderline_only_key(o: OrderlineRecord) -> bytes:
    return encode_key((o.warehouse_id, o.item_id, ORDERLINE_ONLY, *o.remainder), _ROW_KINDS)


def _stock_only_key(join_key: tuple[int, int]) -> bytes:
    return encode_key((*join_key, STOCK_ONLY), _STOCK_ONLY_KINDS)


class MaterializedJoinView:
    """Index-organized join result keyed (w, i, discriminant, orderline remainder).

    An Inner view holds matched rows only. A FullOuter view also holds one
    null-padded row per unmatched record: discriminant 1 for an orderline
    without stock, 2 for a stock row without orderlines. Each matched row
    carries a full copy of its stock columns.
    """

    def __init__(self, view: OrderedStore, support: TraditionalIndexes,
                 jt_stored: JoinType = JoinType.INNER, policy: Policy = Policy.ALL):
        jt_stored = JoinType(jt_stored)
        if jt_stored not in (JoinType.INNER, JoinType.FULL_OUTER):
            raise UnsupportedJoinError(f"views are stored as inner or full outer, not {jt_stored.value}")
        self.view = view
        self.support = support
        self.jt_stored = jt_stored
        self.policy = Policy(policy)
        self.last_stats = JoinStats()

    @classmethod
    def create(cls, backend: str = "btree", pool: BufferPool | None = None,
               jt_stored: JoinType = JoinType.INNER, policy: Policy = Policy.ALL,
               **store_options) -> "MaterializedJoinView":
        pool = pool if pool is not None else BufferPool()
        support = TraditionalIndexes.create(backend, pool, policy, **store_options)
        return cls(make_store(backend, "view", pool, **store_options), support, jt_stored, policy)

    @property
    def full(self) -> bool:
        return self.jt_stored is JoinType.FULL_OUTER

    @property
    def stores(self) -> list[OrderedStore]:
        return [self.view, *self.support.stores]

    def serves(self, jt: JoinType) -> bool:
        """Inner views lack padding rows, so they answer inner and semi joins only."""
        return self.full or JoinType(jt) in (JoinType.INNER, JoinType.LEFT_SEMI, JoinType.RIGHT_SEMI)

    def _pay(self, record: Record) -> bytes:
        return project(record, self.policy)

    # -- load ----------------------------------------------------------------

    def bulk_load(self, stocks: Iterable[StockRecord], orderlines: Iterable[OrderlineRecord]) -> None:
        stocks = list(stocks)
        orderlines = list(orderlines)
        self.support.bulk_load(stocks, orderlines)
        by_key = {s.join_key: s for s in stocks}
        matched_keys = set()
        rows = []
        for o in orderlines:
            s = by_key.get(o.join_key)
            if s is not None:
                matched_keys.add(s.join_key)
                rows.append((_matched_key(o), self._pay(s) + self._pay(o)))
            elif self.full:
                rows.append((_orderline_only_key(o), self._pay(o)))
        if self.full:
            rows.extend((_stock_only_key(s.join_key), self._pay(s))
                        for s in stocks if s.join_key not in matched_keys)
        self.view.bulk_load(rows)

    # -- queries -------------------------------------------------------------

    def _decode(self, key: bytes, value: bytes) -> tuple[tuple[int, int], int, OrderlineRecord | None, StockRecord | None]:
        disc = key[8]
        if disc == STOCK_ONLY:
            w, i, _ = decode_key(key, _STOCK_ONLY_KINDS)
            columns, _ = decode_payload(SourceTag.STOCK, value, self.policy)
            return (w, i), disc, None, stock_from((w, i), columns)
        w, i, _, d, o, n = decode_key(key, _ROW_KINDS)
        stock = None
        pos = 0
        if disc == MATCHED:
            columns, pos = decode_payload(SourceTag.STOCK, value, self.policy)
            stock = stock_from((w, i), columns)
        columns, _ = decode_payload(SourceTag.ORDERLINE, value, self.policy, pos)
        return (w, i), disc, orderline_from((w, i), (d, o, n), columns), stock

    def query_view(self, prefix: Sequence[int] = (), jt: JoinType | None = None) -> Iterator[JoinRow]:
        """Rows for a point (w, i), a warehouse (w,) or everything, read straight off the view."""
        jt = JoinType(jt) if jt is not None else self.jt_stored
        if not self.serves(jt):
            raise UnsupportedJoinError(f"an inner view cannot answer {jt.value}")
        self.last_stats = JoinStats()
        entries = self.view.prefix_scan(join_key_prefix(*prefix)) if prefix else self.view.range_scan()
        return self._rows(entries, jt)

    def _rows(self, entries, jt: JoinType) -> Iterator[JoinRow]:
        stats = self.last_stats
        group = None
        stock_emitted = False
        for key, value in entries:
            join_key, disc, o, s = self._decode(key, value)
            if join_key != group:
                group, stock_emitted = join_key, False
                stats.groups += 1
            if disc == MATCHED:
                if jt in (JoinType.INNER, JoinType.LEFT_OUTER, JoinType.RIGHT_OUTER, JoinType.FULL_OUTER):
                    row = JoinRow(join_key, o, s)
                elif jt is JoinType.LEFT_SEMI:
                    # one stock row per key, so each orderline appears once per group
                    row = JoinRow(join_key, o, None)
                elif not stock_emitted:
                    stock_emitted = True
                    row = JoinRow(join_key, None, s)
                else:
                    continue
            elif disc == ORDERLINE_ONLY and jt in (JoinType.LEFT_OUTER, JoinType.FULL_OUTER):
                row = JoinRow(join_key, o, None)
            elif disc == STOCK_ONLY and jt in (JoinType.RIGHT_OUTER, JoinType.FULL_OUTER):
                row = JoinRow(join_key, None, s)
            else:
                continue
            stats.rows += 1
            yield row

    def point_join(self, join_key: tuple[int, int], jt: JoinType = JoinType.INNER) -> list[JoinRow]:
        return list(self.query_view(join_key, jt))

    def range_join(self, warehouse_id: int, jt: JoinType = JoinType.INNER) -> Iterator[JoinRow]:
        return self.query_view((warehouse_id,), jt)

    def full_join(self, jt: JoinType = JoinType.INNER) -> Iterator[JoinRow]:
        return self.query_view((), jt)

    def read_stock(self, warehouse_id: int, item_id: int) -> StockRecord | None:
        return self.support.read_stock(warehouse_id, item_id)

    # -- incremental maintenance ---------------------------------------------

    def apply(self, delta: Delta) -> None:
        apply_delta_view(self, delta)

    def _stock_match(self, join_key: tuple[int, int]) -> StockRecord | None:
        return self.support.read_stock(*join_key)

    def _orderline_matches(self, join_key: tuple[int, int]) -> list[OrderlineRecord]:
        return list(self.support.orderline_cursor(join_key))

    def _must_delete(self, key: bytes) -> None:
        try:
            self.view.delete(key, must_exist=True)
        except KeyError:
            raise IntegrityError(f"view row {key.hex()} missing") from None

    def _must_update(self, key: bytes, value: bytes) -> None:
        try:
            self.view.update(key, value)
        except KeyError:
            raise IntegrityError(f"view row {key.hex()} missing") from None

    def _orderline_added(self, o: OrderlineRecord) -> None:
        s = self._stock_match(o.join_key)
        if s is not None:
            self.view.put(_matched_key(o), self._pay(s) + self._pay(o))
            if self.full:
                pad = _stock_only_key(o.join_key)
                if self.view.get(pad) is not None:
                    self.view.delete(pad)
        elif self.full:
            self.view.put(_orderline_only_key(o), self._pay(o))

    def _orderline_removed(self, o: OrderlineRecord) -> None:
        s = self._stock_match(o.join_key)
        if s is not None:
            self._must_delete(_matched_key(o))
            if self.full and not self._orderline_matches(o.join_key):
                self.view.put(_stock_only_key(o.join_key), self._pay(s))
        elif self.full:
            self._must_delete(_orderline_only_key(o))

    def _orderline_changed(self, o: OrderlineRecord) -> None:
        s = self._stock_match(o.join_key)
        if s is not None:
            self._must_update(_matched_key(o), self._pay(s) + self._pay(o))
        elif self.full:
            self._must_update(_orderline_only_key(o), self._pay(o))

    def _stock_added(self, s: StockRecord) -> None:
        matches = self._orderline_matches(s.join_key)
        for o in matches:
            if self.full:
                self._must_delete(_orderline_only_key(o))
            self.view.put(_matched_key(o), self._pay(s) + self._pay(o))
        if not matches and self.full:
            self.view.put(_stock_only_key(s.join_key), self._pay(s))

    def _stock_removed(self, s: StockRecord) -> None:
        matches = self._orderline_matches(s.join_key)
        for o in matches:
            self._must_delete(_matched_key(o))
            if self.full:
                self.view.put(_orderline_only_key(o), self._pay(o))
        if not matches and self.full:
            self._must_delete(_stock_only_key(s.join_key))

    def _stock_changed(self, s: StockRecord) -> None:
        matches = self._orderline_matches(s.join_key)
        if not matches:
            if self.full:
                self._must_update(_stock_only_key(s.join_key), self._pay(s))
            return
        # the derived delta, sorted by view key, applied in one pass over the group
        fresh = {_matched_key(o): self._pay(s) + self._pay(o) for o in matches}
        group = join_key_prefix(*s.join_key) + bytes([MATCHED])
        seen = set()

        def rewrite(key: bytes, old: bytes) -> bytes | None:
            value = fresh.get(key)
            if value is not None:
                seen.add(key)
            return value

        self.view.update_range(group, prefix_successor(group), rewrite)
        if len(seen) != len(fresh):
            raise IntegrityError(f"{len(fresh) - len(seen)} view rows missing for {s.join_key}")


def apply_delta_view(mv: MaterializedJoinView, delta: Delta) -> None:
    """Keep support indexes and view in step for one delta.

    Single-row deltas leave only the delta-times-other-table terms: an
    orderline change probes the stock index, a stock change scans the
    orderline index for its key group.
    """
    maintain_traditional(mv.support, delta)
    old, new = delta.old, delta.new
    moved = delta.kind == "update" and (old.key != new.key or old.join_key != new.join_key)
    if delta.table is SourceTag.ORDERLINE:
        if delta.kind == "insert":
            mv._orderline_added(new)
        elif delta.kind == "delete" or moved:
            mv._orderline_removed(old)
            if moved:
                mv._orderline_added(new)
        else:
            mv._orderline_changed(new)
    else:
        if delta.kind == "insert":
            mv._stock_added(new)
        elif delta.kind == "delete" or moved:
            mv._stock_removed(old)
            if moved:
                mv._stock_added(new)
        else:
            mv._stock_changed(new)
