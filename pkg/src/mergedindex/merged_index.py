"""One ordered store holding both tables, interleaved by (warehouse_id, item_id)."""
from __future__ import annotations

from typing import Iterable, Iterator, Sequence

from .encoding import (
    OrderlineRecord,
    Policy,
    Record,
    SourceTag,
    StockRecord,
    decode_merged_entry,
    join_key_prefix,
    merged_entry_key,
    merged_key_for,
    project,
    source_of,
)
from .errors import NotFoundError
from .joins import JoinRow, JoinStats, JoinType, Tagged, group_join
from .store import BufferPool, OrderedStore, make_store


def index_key(source: SourceTag, key: Sequence[int]) -> bytes:
    """Merged key from an index key: (w, i) for Stock, (w, i, d, o, n) for Orderline."""
    source = SourceTag(source)
    return merged_entry_key(tuple(key[:2]), source, tuple(key[2:]))


class MergedIndex:
    def __init__(self, store: OrderedStore, policy: Policy = Policy.ALL):
        self.store = store
        self.policy = Policy(policy)
        self.last_stats = JoinStats()

    @classmethod
    def create(cls, backend: str = "btree", pool: BufferPool | None = None,
               policy: Policy = Policy.ALL, **store_options) -> "MergedIndex":
        return cls(make_store(backend, "merged", pool, **store_options), policy)

    @property
    def stores(self) -> list[OrderedStore]:
        return [self.store]

    def _entry(self, record: Record) -> tuple[bytes, bytes]:
        return merged_key_for(record), project(record, self.policy)

    # -- maintenance: one store mutation per base-table change ---------------

    def insert(self, source: SourceTag, record: Record) -> None:
        if source_of(record) is not SourceTag(source):
            raise ValueError(f"{type(record).__name__} does not belong to {SourceTag(source)!r}")
        self.store.put(*self._entry(record))

    def delete(self, source: SourceTag, key: Sequence[int]) -> None:
        self.store.delete(index_key(source, key))

    def update(self, source: SourceTag, key: Sequence[int], record: Record) -> None:
        """Replace the payload of the entry at ``key`` with ``record``'s columns.

        A record whose own index key differs from ``key`` moves: delete + insert.
        """
        old_key = index_key(source, key)
        new_key, payload = self._entry(record)
        if new_key != old_key:
            if self.store.get(old_key) is None:
                raise NotFoundError(tuple(key))
            self.store.delete(old_key)
            self.store.put(new_key, payload)
            return
        try:
            self.store.update(old_key, payload)
        except KeyError:
            raise NotFoundError(tuple(key)) from None

    def apply(self, delta) -> None:
        if delta.kind == "insert":
            self.insert(delta.table, delta.new)
        elif delta.kind == "delete":
            self.delete(delta.table, _index_key_of(delta.old))
        else:
            self.update(delta.table, _index_key_of(delta.old), delta.new)

    def bulk_load(self, stocks: Iterable[StockRecord], orderlines: Iterable[OrderlineRecord]) -> None:
        """Arrival order, no pre-sort; sorting is the store's business."""
        def entries():
            for s in stocks:
                yield self._entry(s)
            for o in orderlines:
                yield self._entry(o)

        self.store.bulk_load(entries())

    # -- queries -------------------------------------------------------------

    def _decoded(self, entries: Iterable[tuple[bytes, bytes]]) -> Iterator[Tagged]:
        for key, value in entries:
            record = decode_merged_entry(key, value, self.policy)
            yield record.join_key, source_of(record), record

    def _join(self, entries, jt: JoinType) -> Iterator[JoinRow]:
        self.last_stats = JoinStats()
        return group_join(self._decoded(entries), jt, self.last_stats)

    def point_join(self, join_key: tuple[int, int], jt: JoinType = JoinType.INNER) -> list[JoinRow]:
        return list(self._join(self.store.prefix_scan(join_key_prefix(*join_key)), jt))

    def range_join(self, warehouse_id: int, jt: JoinType = JoinType.INNER) -> Iterator[JoinRow]:
        return self._join(self.store.prefix_scan(join_key_prefix(warehouse_id)), jt)

    def full_join(self, jt: JoinType = JoinType.INNER) -> Iterator[JoinRow]:
        return self._join(self.store.range_scan(), jt)

    def extract_table(self, source: SourceTag) -> Iterator[Record]:
        """Every row of one table, in index-key order. Scans the other table's entries too."""
        tag = SourceTag(source)
        for key, value in self.store.range_scan():
            if key[8] == tag:
                yield decode_merged_entry(key, value, self.policy)

    def read_stock(self, warehouse_id: int, item_id: int) -> StockRecord | None:
        value = self.store.get(merged_entry_key((warehouse_id, item_id), SourceTag.STOCK))
        if value is None:
            return None
        return decode_merged_entry(merged_entry_key((warehouse_id, item_id), SourceTag.STOCK), value, self.policy)


def _index_key_of(record: Record) -> tuple[int, ...]:
    if isinstance(record, StockRecord):
        return record.key
    return (record.warehouse_id, record.item_id, *record.remainder)
