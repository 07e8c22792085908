from .base import Entry, OrderedStore, UnsupportedOperation, make_store
from .bufferpool import CAPACITIES, LARGE_CAPACITY, PAGE_SIZE, SMALL_CAPACITY, BufferPool
from .metrics import MetricsCounters, SpaceReport, total

__all__ = [
    "BufferPool",
    "CAPACITIES",
    "Entry",
    "LARGE_CAPACITY",
    "MetricsCounters",
    "OrderedStore",
    "PAGE_SIZE",
    "SMALL_CAPACITY",
    "SpaceReport",
    "UnsupportedOperation",
    "make_store",
    "total",
]
