"""Simulated page cache with LRU eviction.

Pages carry no bytes here; the owning store keeps node contents as Python
objects and only reports accesses. A miss stands in for a disk read, a dirty
page leaving the pool for a disk write.
"""
from __future__ import annotations

from collections import OrderedDict

from .metrics import MetricsCounters

PAGE_SIZE = 4096
SMALL_CAPACITY = 256
LARGE_CAPACITY = 65_536
CAPACITIES = {"small": SMALL_CAPACITY, "large": LARGE_CAPACITY}


class BufferPool:
    def __init__(self, capacity: int = LARGE_CAPACITY, page_size: int = PAGE_SIZE):
        if capacity < 1:
            raise ValueError("buffer pool needs at least one frame")
        self.capacity = capacity
        self.page_size = page_size
        self._next_id = 0
        # page id -> dirty flag, in LRU order (oldest first)
        self._frames: OrderedDict[int, bool] = OrderedDict()
        self._owner: dict[int, MetricsCounters] = {}
        self.logical_reads = 0
        self.misses = 0
        self.writebacks = 0

    def __len__(self) -> int:
        return len(self._frames)

    @property
    def resident(self) -> int:
        return len(self._frames)

    def allocate(self, counters: MetricsCounters) -> int:
        """A fresh page: resident and dirty, no disk read."""
        page_id = self._next_id
        self._next_id += 1
        self._owner[page_id] = counters
        self._admit(page_id, dirty=True)
        counters.node_writes += 1
        return page_id

    def read(self, page_id: int, counters: MetricsCounters) -> None:
        counters.node_reads += 1
        self.logical_reads += 1
        frames = self._frames
        if page_id in frames:
            frames.move_to_end(page_id)
            return
        counters.buffer_misses += 1
        self.misses += 1
        self._admit(page_id, dirty=False)

    def write(self, page_id: int, counters: MetricsCounters) -> None:
        """Mark a page modified. Callers read the page first within the same operation."""
        counters.node_writes += 1
        frames = self._frames
        if page_id not in frames:
            counters.buffer_misses += 1
            self.misses += 1
            self._admit(page_id, dirty=True)
        else:
            frames[page_id] = True
            frames.move_to_end(page_id)

    def free(self, page_id: int) -> None:
        self._frames.pop(page_id, None)
        self._owner.pop(page_id, None)

    def is_resident(self, page_id: int) -> bool:
        return page_id in self._frames

    def resize(self, capacity: int) -> None:
        if capacity < 1:
            raise ValueError("buffer pool needs at least one frame")
        self.capacity = capacity
        while len(self._frames) > capacity:
            self._evict()

    def flush(self) -> None:
        """Write back every dirty page (a checkpoint); pages stay resident."""
        for page_id, dirty in self._frames.items():
            if dirty:
                self._writeback(page_id)
                self._frames[page_id] = False

    def clear(self) -> None:
        """Write back dirty pages and empty the pool: a cold start for the next phase."""
        self.flush()
        self._frames.clear()

    def _admit(self, page_id: int, dirty: bool) -> None:
        while len(self._frames) >= self.capacity:
            self._evict()
        self._frames[page_id] = dirty

    def _evict(self) -> None:
        page_id, dirty = self._frames.popitem(last=False)
        if dirty:
            self._writeback(page_id)

    def _writeback(self, page_id: int) -> None:
        self.writebacks += 1
        owner = self._owner.get(page_id)
        if owner is not None:
            owner.disk_writes += 1
