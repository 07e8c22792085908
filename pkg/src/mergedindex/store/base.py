from __future__ import annotations

from typing import Callable, Iterable, Iterator

from .bufferpool import PAGE_SIZE, BufferPool
from .metrics import MetricsCounters, SpaceReport

Entry = tuple[bytes, bytes]


class UnsupportedOperation(RuntimeError):
    pass


class OrderedStore:
    """Ordered map from byte keys to byte values, ascending bytewise.

    Backends route every page access through a shared :class:`BufferPool` and
    record it in ``self.counters``. A store is single-writer; iterators
    returned by :meth:`range_scan` must be exhausted or dropped before the
    next mutation.
    """

    backend = "abstract"

    def __init__(self, name: str, pool: BufferPool | None = None, page_size: int = PAGE_SIZE):
        self.name = name
        self.pool = pool if pool is not None else BufferPool(page_size=page_size)
        self.page_size = page_size
        self.counters = MetricsCounters()

    def put(self, key: bytes, value: bytes) -> None:
        raise NotImplementedError

    def get(self, key: bytes) -> bytes | None:
        raise NotImplementedError

    def delete(self, key: bytes, must_exist: bool = False) -> None:
        """Remove ``key``. Blind by default; ``must_exist`` raises KeyError when it is absent."""
        raise NotImplementedError

    def update(self, key: bytes, value: bytes) -> bytes:
        """Replace the value of an existing key, returning the old value. KeyError if absent."""
        raise NotImplementedError

    def update_range(
        self, lower: bytes, upper: bytes | None, fn: Callable[[bytes, bytes], bytes | None]
    ) -> int:
        """Rewrite values of keys in [lower, upper) in one pass; ``fn`` returns None to keep.

        Returns the number of entries rewritten.
        """
        raise NotImplementedError

    def range_scan(self, lower: bytes = b"", upper: bytes | None = None) -> Iterator[Entry]:
        raise NotImplementedError

    def prefix_scan(self, prefix: bytes) -> Iterator[Entry]:
        from ..encoding import prefix_successor

        return self.range_scan(prefix, prefix_successor(prefix))

    def bulk_load(self, entries: Iterable[Entry]) -> None:
        raise NotImplementedError

    def compact(self) -> None:
        raise UnsupportedOperation(f"{self.backend} store has no compaction")

    def space(self) -> SpaceReport:
        raise NotImplementedError

    def stats(self) -> tuple[MetricsCounters, SpaceReport]:
        return self.counters.snapshot(), self.space()

    def items(self) -> list[Entry]:
        """Every visible entry, bypassing the buffer pool and counters."""
        return list(self._silent_scan())

    def _silent_scan(self) -> Iterator[Entry]:
        raise NotImplementedError

    def __len__(self) -> int:
        return self.space().entries


def make_store(
    backend: str,
    name: str = "store",
    pool: BufferPool | None = None,
    page_size: int = PAGE_SIZE,
    **options,
) -> OrderedStore:
    from .btree import BTreeStore
    from .lsm import LsmStore

    if backend == "btree":
        return BTreeStore(name, pool, page_size=page_size, **options)
    if backend == "lsm":
        return LsmStore(name, pool, page_size=page_size, **options)
    raise ValueError(f"unknown backend {backend!r}")
