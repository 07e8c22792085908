from __future__ import annotations

from dataclasses import asdict, dataclass, fields


@dataclass
class MetricsCounters:
    """Deterministic access counters; the acceptance currency of every experiment.

    ``node_reads``/``node_writes`` are logical page accesses, ``buffer_misses`` are
    simulated disk reads and ``disk_writes`` are dirty pages written back on eviction.
    ``mutations`` counts entry-level writes (put/delete/update) and ``probes``
    counts searches (get, range-scan opens) issued against the store.
    """

    node_reads: int = 0
    node_writes: int = 0
    buffer_misses: int = 0
    disk_writes: int = 0
    key_comparisons: int = 0
    entries_scanned: int = 0
    bytes_read: int = 0
    bytes_written: int = 0
    root_to_leaf_traversals: int = 0
    mutations: int = 0
    probes: int = 0

    def reset(self) -> None:
        for f in fields(self):
            setattr(self, f.name, 0)

    def snapshot(self) -> "MetricsCounters":
        return MetricsCounters(**asdict(self))

    def as_dict(self) -> dict[str, int]:
        return asdict(self)

    def __add__(self, other: "MetricsCounters") -> "MetricsCounters":
        return MetricsCounters(
            **{f.name: getattr(self, f.name) + getattr(other, f.name) for f in fields(self)}
        )

    def __sub__(self, other: "MetricsCounters") -> "MetricsCounters":
        return MetricsCounters(
            **{f.name: getattr(self, f.name) - getattr(other, f.name) for f in fields(self)}
        )

    @property
    def node_accesses(self) -> int:
        return self.node_reads + self.node_writes

    @property
    def read_share(self) -> float:
        total = self.node_accesses
        return self.node_reads / total if total else 0.0


def total(counters) -> MetricsCounters:
    out = MetricsCounters()
    for c in counters:
        out = out + c
    return out


@dataclass(frozen=True)
class SpaceReport:
    entries: int = 0
    stored_entries: int = 0
    payload_bytes: int = 0
    allocated_bytes: int = 0
    pages: int = 0
    runs: int = 0

    def __add__(self, other: "SpaceReport") -> "SpaceReport":
        return SpaceReport(
            **{f.name: getattr(self, f.name) + getattr(other, f.name) for f in fields(self)}
        )
