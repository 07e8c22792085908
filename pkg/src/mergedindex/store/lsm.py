"""Log-structured merge-forest with size-tiered compaction.

Writes land in a sorted memtable; at ``memtable_bytes`` it is flushed as an
immutable run of page-sized blocks. Runs are kept newest first, each tagged
with a tier. When ``max_runs`` runs share a tier they are merged into one run
of the next tier. Deletes write tombstones, which are dropped only when a
merge includes the oldest run. Bulk loads only flush: merging the runs they
leave behind waits for the next compaction. Block fence keys are held in memory (like an
SST index block); block reads go through the buffer pool.
"""
from __future__ import annotations

import heapq
from bisect import bisect_left, bisect_right
from typing import Callable, Iterable, Iterator

from sortedcontainers import SortedDict

from .base import Entry, OrderedStore
from .bufferpool import PAGE_SIZE, BufferPool
from .metrics import SpaceReport

BLOCK_HEADER = 32
ENTRY_OVERHEAD = 8
MEMTABLE_BYTES = 64 * 1024
MAX_RUNS = 4


def _cost(key: bytes, value: bytes | None) -> int:
    return len(key) + (len(value) if value is not None else 0) + ENTRY_OVERHEAD


class _Block:
    __slots__ = ("page_id", "keys", "values")

    def __init__(self, page_id: int, keys: list[bytes], values: list[bytes | None]):
        self.page_id = page_id
        self.keys = keys
        self.values = values


class _Run:
    __slots__ = ("tier", "blocks", "fences", "entries", "payload", "tombstones")

    def __init__(self, tier: int, blocks: list[_Block]):
        self.tier = tier
        self.blocks = blocks
        self.fences = [b.keys[0] for b in blocks]
        self.entries = sum(len(b.keys) for b in blocks)
        self.payload = sum(
            len(k) + (len(v) if v is not None else 0) for b in blocks for k, v in zip(b.keys, b.values)
        )
        self.tombstones = sum(v is None for b in blocks for v in b.values)


class LsmStore(OrderedStore):
    backend = "lsm"

    def __init__(
        self,
        name: str = "lsm",
        pool: BufferPool | None = None,
        page_size: int = PAGE_SIZE,
        memtable_bytes: int = MEMTABLE_BYTES,
        max_runs: int = MAX_RUNS,
    ):
        super().__init__(name, pool, page_size)
        if max_runs < 2:
            raise ValueError("max_runs must be at least 2")
        self.memtable_bytes = memtable_bytes
        self.max_runs = max_runs
        self.max_entry = page_size // 4
        # value None marks a tombstone
        self.memtable: SortedDict = SortedDict()
        self._mem_used = 0
        self.runs: list[_Run] = []
        self.flushes = 0
        self.compactions = 0
        self._loading = False

    # -- writes --------------------------------------------------------------

    def _mem_put(self, key: bytes, value: bytes | None) -> None:
        if value is not None and _cost(key, value) > self.max_entry:
            raise ValueError(f"entry of {_cost(key, value)} bytes exceeds a quarter page")
        self.counters.mutations += 1
        self.counters.key_comparisons += len(self.memtable).bit_length()
        old = self.memtable.get(key, _MISSING)
        if old is not _MISSING:
            self._mem_used -= _cost(key, old)
        self.memtable[key] = value
        self._mem_used += _cost(key, value)
        if self._mem_used >= self.memtable_bytes:
            self.flush()

    def put(self, key: bytes, value: bytes) -> None:
        self._mem_put(key, value)

    def delete(self, key: bytes, must_exist: bool = False) -> None:
        if must_exist and self.get(key) is None:
            raise KeyError(key)
        self._mem_put(key, None)

    def update(self, key: bytes, value: bytes) -> bytes:
        old = self.get(key)
        if old is None:
            raise KeyError(key)
        self._mem_put(key, value)
        return old

    def update_range(
        self, lower: bytes, upper: bytes | None, fn: Callable[[bytes, bytes], bytes | None]
    ) -> int:
        changed = 0
        for key, old in list(self.range_scan(lower, upper)):
            new = fn(key, old)
            if new is not None and new != old:
                self._mem_put(key, new)
                changed += 1
        return changed

    def bulk_load(self, entries: Iterable[Entry]) -> None:
        # arrival order straight into the memtable; sorting is left to flushes and merges
        self._loading = True
        try:
            for key, value in entries:
                self._mem_put(key, value)
        finally:
            self._loading = False

    def flush(self) -> None:
        if not self.memtable:
            return
        items = list(self.memtable.items())
        if not self.runs:
            items = [(k, v) for k, v in items if v is not None]
        self.memtable = SortedDict()
        self._mem_used = 0
        self.flushes += 1
        if items:
            self.runs.insert(0, self._write_run(items, tier=0))
            if not self._loading:
                self._maybe_compact()

    def _write_run(self, items: list[tuple[bytes, bytes | None]], tier: int) -> _Run:
        blocks = []
        keys: list[bytes] = []
        values: list[bytes | None] = []
        used = BLOCK_HEADER
        for key, value in items:
            cost = _cost(key, value)
            if keys and used + cost > self.page_size:
                blocks.append(self._write_block(keys, values))
                keys, values, used = [], [], BLOCK_HEADER
            keys.append(key)
            values.append(value)
            used += cost
        if keys:
            blocks.append(self._write_block(keys, values))
        return _Run(tier, blocks)

    def _write_block(self, keys: list[bytes], values: list[bytes | None]) -> _Block:
        page_id = self.pool.allocate(self.counters)
        self.counters.bytes_written += sum(_cost(k, v) - ENTRY_OVERHEAD for k, v in zip(keys, values))
        return _Block(page_id, keys, values)

    # -- compaction ----------------------------------------------------------

    def _maybe_compact(self) -> None:
        while True:
            tiers: dict[int, list[int]] = {}
            for pos, run in enumerate(self.runs):
                tiers.setdefault(run.tier, []).append(pos)
            full = [t for t, positions in sorted(tiers.items()) if len(positions) >= self.max_runs]
            if not full:
                return
            positions = tiers[full[0]]
            self._merge(positions[0], positions[-1] + 1, full[0] + 1)

    def _merge(self, lo: int, hi: int, tier: int) -> None:
        """Merge runs[lo:hi] (contiguous, newest first) into one run."""
        inputs = self.runs[lo:hi]
        bottom = hi == len(self.runs)
        streams = [self._read_run(run, rank) for rank, run in enumerate(inputs)]
        merged = []
        last = None
        for key, _, value in heapq.merge(*streams):
            if key == last:
                continue
            last = key
            if value is None and bottom:
                continue
            merged.append((key, value))
        for run in inputs:
            for block in run.blocks:
                self.pool.free(block.page_id)
        new = self._write_run(merged, tier)
        self.runs[lo:hi] = [new]
        self.compactions += 1

    def _read_run(self, run: _Run, rank: int) -> Iterator[tuple[bytes, int, bytes | None]]:
        for block in run.blocks:
            self.pool.read(block.page_id, self.counters)
            self.counters.bytes_read += sum(_cost(k, v) - ENTRY_OVERHEAD for k, v in zip(block.keys, block.values))
            for key, value in zip(block.keys, block.values):
                yield key, rank, value

    def compact(self) -> None:
        """Flush the memtable and merge every run into one, dropping tombstones."""
        self.flush()
        if self.runs:
            self._merge(0, len(self.runs), max(r.tier for r in self.runs) + 1)

    # -- reads ---------------------------------------------------------------

    def get(self, key: bytes) -> bytes | None:
        counters = self.counters
        counters.probes += 1
        counters.key_comparisons += len(self.memtable).bit_length()
        if key in self.memtable:
            value = self.memtable[key]
            if value is not None:
                counters.entries_scanned += 1
            return value
        for run in self.runs:
            counters.root_to_leaf_traversals += 1
            counters.key_comparisons += len(run.fences).bit_length()
            b = bisect_right(run.fences, key) - 1
            if b < 0:
                continue
            block = run.blocks[b]
            self.pool.read(block.page_id, counters)
            counters.key_comparisons += len(block.keys).bit_length()
            i = bisect_left(block.keys, key)
            if i < len(block.keys) and block.keys[i] == key:
                value = block.values[i]
                if value is not None:
                    counters.entries_scanned += 1
                    counters.bytes_read += len(key) + len(value)
                return value
        return None

    def _scan_run(self, run: _Run, lower: bytes, upper: bytes | None) -> Iterator[Entry]:
        counters = self.counters
        counters.root_to_leaf_traversals += 1
        counters.key_comparisons += len(run.fences).bit_length()
        b = max(bisect_right(run.fences, lower) - 1, 0)
        first = True
        for block in run.blocks[b:]:
            if upper is not None and block.keys[0] >= upper:
                return
            self.pool.read(block.page_id, counters)
            start = bisect_left(block.keys, lower) if first else 0
            first = False
            for key, value in zip(block.keys[start:], block.values[start:]):
                if upper is not None and key >= upper:
                    return
                counters.bytes_read += len(key) + (len(value) if value is not None else 0)
                yield key, value

    def _sources(self, lower: bytes, upper: bytes | None, counted: bool):
        mem = self.memtable.irange(lower, upper, inclusive=(True, False)) if upper is not None \
            else self.memtable.irange(lower)
        sources = [_ranked(((k, self.memtable[k]) for k in mem), 0)]
        for rank, run in enumerate(self.runs, start=1):
            raw = self._scan_run(run, lower, upper) if counted else _raw_run(run, lower, upper)
            sources.append(_ranked(raw, rank))
        return sources

    def range_scan(self, lower: bytes = b"", upper: bytes | None = None) -> Iterator[Entry]:
        self.counters.probes += 1
        counters = self.counters
        last = None
        for key, _, value in heapq.merge(*self._sources(lower, upper, counted=True)):
            counters.key_comparisons += 1
            if key == last:
                continue
            last = key
            if value is None:
                continue
            counters.entries_scanned += 1
            yield key, value

    def _silent_scan(self) -> Iterator[Entry]:
        last = None
        for key, _, value in heapq.merge(*self._sources(b"", None, counted=False)):
            if key == last:
                continue
            last = key
            if value is not None:
                yield key, value

    # -- inspection ----------------------------------------------------------

    def space(self) -> SpaceReport:
        mem_payload = sum(len(k) + (len(v) if v is not None else 0) for k, v in self.memtable.items())
        pages = sum(len(r.blocks) for r in self.runs)
        return SpaceReport(
            entries=sum(1 for _ in self._silent_scan()),
            stored_entries=len(self.memtable) + sum(r.entries for r in self.runs),
            payload_bytes=mem_payload + sum(r.payload for r in self.runs),
            allocated_bytes=pages * self.page_size + self._mem_used,
            pages=pages,
            runs=len(self.runs),
        )

    @property
    def tombstones(self) -> int:
        return sum(v is None for v in self.memtable.values()) + sum(r.tombstones for r in self.runs)


_MISSING = object()


def _ranked(entries: Iterable[tuple[bytes, bytes | None]], rank: int):
    for key, value in entries:
        yield key, rank, value


def _raw_run(run: _Run, lower: bytes, upper: bytes | None) -> Iterator[tuple[bytes, bytes | None]]:
    b = max(bisect_right(run.fences, lower) - 1, 0)
    for block in run.blocks[b:]:
        start = bisect_left(block.keys, lower)
        for key, value in zip(block.keys[start:], block.values[start:]):
            if upper is not None and key >= upper:
                return
            yield key, value
