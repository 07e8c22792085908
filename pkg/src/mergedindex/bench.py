"""Experiment runner: one config -> one report; grid files -> CSV/JSON tables.

Every number that matters is a deterministic counter. Wall-clock seconds are
recorded in the JSON output only, so two runs of the same grid produce
byte-identical CSV files.

Grid files are plain ``key = value[, value...]`` lines; ``#`` starts a comment.
Every combination of the listed values becomes one experiment. Keys:

    backend, buffer, so, jt, view_jt, policy, structure, phase   (lists)
    ops, ops.point, ops.scan, ops.update, warmup                 (integers)
    warehouses, items_per_warehouse, orderlines_per_warehouse, seed
"""
from __future__ import annotations

import csv
import io
import itertools
import json
import time
from dataclasses import asdict, dataclass, field, fields, replace
from functools import lru_cache
from pathlib import Path
from typing import Callable, Iterable, Mapping

from .baselines import MaterializedJoinView, TraditionalIndexes
from .encoding import Policy, SourceTag
from .errors import ConfigError
from .joins import JoinType
from .merged_index import MergedIndex
from .store import CAPACITIES, BufferPool, MetricsCounters, SpaceReport, total
from .workload import NewOrderStream, WorkloadConfig, generate, query_stream

BACKENDS = ("btree", "lsm")
BUFFERS = tuple(CAPACITIES)
STRUCTURES = ("merged", "traditional", "matview")
PHASES = ("load", "point", "scan", "update")
QUERY_JOINS = (JoinType.INNER, JoinType.FULL_OUTER)
DEFAULT_OPS = {"point": 200, "scan": 4, "update": 50}


@dataclass(frozen=True)
class ExperimentConfig:
    backend: str = "btree"
    buffer: str = "small"
    so: float = 1.0
    jt: JoinType = JoinType.INNER
    policy: Policy = Policy.ALL
    structure: str = "merged"
    phase: str = "point"
    workload: WorkloadConfig = field(default_factory=WorkloadConfig)
    ops: int | None = None
    warmup: int | None = None
    # join type a materialized view stores; defaults to the one it is asked for
    view_jt: JoinType | None = None

    def __post_init__(self):
        for name, allowed in (("backend", BACKENDS), ("buffer", BUFFERS),
                              ("structure", STRUCTURES), ("phase", PHASES)):
            if getattr(self, name) not in allowed:
                raise ConfigError(f"{name} must be one of {', '.join(allowed)}; got {getattr(self, name)!r}")
        try:
            jt = JoinType.parse(self.jt) if isinstance(self.jt, str) else JoinType(self.jt)
            view_jt = None if self.view_jt is None else JoinType.parse(self.view_jt)
            policy = Policy(self.policy)
        except ValueError as e:
            raise ConfigError(str(e)) from None
        if jt not in QUERY_JOINS:
            raise ConfigError(f"jt must be inner or full_outer; got {jt.value}")
        if view_jt is not None:
            if self.structure != "matview":
                raise ConfigError("view_jt only applies to the matview structure")
            if view_jt not in QUERY_JOINS:
                raise ConfigError(f"views store inner or full_outer joins; got {view_jt.value}")
            if view_jt is JoinType.INNER and jt is not JoinType.INNER:
                raise ConfigError(f"an inner view cannot serve {jt.value} queries")
        if self.ops is not None and self.ops < 0 or self.warmup is not None and self.warmup < 0:
            raise ConfigError("ops and warmup must be non-negative")
        object.__setattr__(self, "jt", jt)
        object.__setattr__(self, "view_jt", view_jt)
        object.__setattr__(self, "policy", policy)
        # so and policy live on the experiment; the workload follows them
        object.__setattr__(self, "workload", replace(self.workload, so=self.so, policy=policy))

    @property
    def capacity(self) -> int:
        return CAPACITIES[self.buffer]

    @property
    def stored_jt(self) -> JoinType | None:
        if self.structure != "matview":
            return None
        return self.view_jt or self.jt

    @property
    def op_count(self) -> int:
        if self.ops is not None:
            return self.ops
        return DEFAULT_OPS.get(self.phase, 0)

    @property
    def warmup_count(self) -> int:
        return self.warmup if self.warmup is not None else self.op_count // 4

    @property
    def build_key(self) -> tuple:
        """Everything that shapes the loaded structure; query phases may share one build."""
        return (self.backend, self.buffer, self.structure, self.stored_jt, self.workload)


@dataclass
class MetricsReport:
    config: ExperimentConfig
    ops: int
    load: MetricsCounters
    measured: MetricsCounters
    rows: int = 0
    peak_buffered: int = 0
    space: SpaceReport = field(default_factory=SpaceReport)
    support_space: SpaceReport = field(default_factory=SpaceReport)
    load_seconds: float = 0.0
    run_seconds: float = 0.0

    def _per_op(self, value: int) -> float:
        return value / self.ops if self.ops else 0.0

    @property
    def traversals_per_op(self) -> float:
        return self._per_op(self.measured.root_to_leaf_traversals)

    @property
    def node_accesses_per_op(self) -> float:
        return self._per_op(self.measured.node_accesses)

    @property
    def misses_per_op(self) -> float:
        return self._per_op(self.measured.buffer_misses)

    @property
    def bytes_scanned_per_op(self) -> float:
        return self._per_op(self.measured.bytes_read)

    @property
    def read_share(self) -> float:
        return self.measured.read_share

    def row(self) -> dict:
        """Flat, deterministic CSV row; see CSV_COLUMNS."""
        cfg = self.config
        wl = cfg.workload
        out = {
            "backend": cfg.backend, "buffer": cfg.buffer, "so": cfg.so, "jt": cfg.jt.value,
            "view_jt": cfg.stored_jt.value if cfg.stored_jt else "", "policy": cfg.policy.value,
            "structure": cfg.structure, "phase": cfg.phase, "ops": self.ops, "warmup": cfg.warmup_count,
            "warehouses": wl.warehouses, "items_per_warehouse": wl.items_per_warehouse,
            "orderlines_per_warehouse": wl.orderlines_per_warehouse, "seed": wl.seed,
            "traversals_per_op": _fmt(self.traversals_per_op),
            "node_accesses_per_op": _fmt(self.node_accesses_per_op),
            "misses_per_op": _fmt(self.misses_per_op),
            "bytes_scanned_per_op": _fmt(self.bytes_scanned_per_op),
            "read_share": _fmt(self.read_share),
            "rows": self.rows, "peak_buffered": self.peak_buffered,
        }
        out.update({f"run_{k}": v for k, v in self.measured.as_dict().items()})
        out.update({f"load_{k}": v for k, v in self.load.as_dict().items()})
        out.update({
            "entries": self.space.entries, "payload_bytes": self.space.payload_bytes,
            "allocated_bytes": self.space.allocated_bytes, "pages": self.space.pages,
            "support_payload_bytes": self.support_space.payload_bytes,
            "support_allocated_bytes": self.support_space.allocated_bytes,
        })
        return out

    def to_json(self) -> dict:
        out = self.row()
        out["load_seconds"] = round(self.load_seconds, 6)
        out["run_seconds"] = round(self.run_seconds, 6)
        return out


def _fmt(x: float) -> str:
    return f"{x:.6f}"


_COUNTER_NAMES = [f.name for f in fields(MetricsCounters)]
CSV_COLUMNS = (
    "backend", "buffer", "so", "jt", "view_jt", "policy", "structure", "phase", "ops", "warmup",
    "warehouses", "items_per_warehouse", "orderlines_per_warehouse", "seed",
    "traversals_per_op", "node_accesses_per_op", "misses_per_op", "bytes_scanned_per_op",
    "read_share", "rows", "peak_buffered",
    *(f"run_{n}" for n in _COUNTER_NAMES),
    *(f"load_{n}" for n in _COUNTER_NAMES),
    "entries", "payload_bytes", "allocated_bytes", "pages",
    "support_payload_bytes", "support_allocated_bytes",
)
RATIO_COLUMNS = (
    "backend", "buffer", "so", "jt", "policy", "phase",
    "merged_vs_traditional", "merged_vs_matview",
    "misses_merged_vs_traditional", "misses_merged_vs_matview", "matview_space_vs_merged",
)


# -- building ----------------------------------------------------------------

@lru_cache(maxsize=4)
def _database(workload: WorkloadConfig):
    return generate(workload)


def create_structure(structure: str, backend: str, pool: BufferPool, policy: Policy,
                     view_jt: JoinType | None = None):
    if structure == "merged":
        return MergedIndex.create(backend, pool, policy)
    if structure == "traditional":
        return TraditionalIndexes.create(backend, pool, policy)
    if structure == "matview":
        return MaterializedJoinView.create(backend, pool, view_jt or JoinType.INNER, policy)
    raise ConfigError(f"unknown structure {structure!r}")


@dataclass
class Built:
    structure: object
    load: MetricsCounters
    load_seconds: float
    stocks: list
    orderlines: list


def build(cfg: ExperimentConfig) -> Built:
    """Load phase (counted on its own), then LSM compaction as the first warm-up step."""
    stocks, orderlines = _database(cfg.workload)
    structure = create_structure(cfg.structure, cfg.backend, BufferPool(cfg.capacity),
                                 cfg.policy, cfg.stored_jt)
    start = time.perf_counter()
    structure.bulk_load(stocks, orderlines)
    load = total(s.counters for s in structure.stores)
    seconds = time.perf_counter() - start
    if cfg.backend == "lsm":
        for store in structure.stores:
            store.compact()
    return Built(structure, load, seconds, stocks, orderlines)


def split_space(structure) -> tuple[SpaceReport, SpaceReport]:
    """(structure bytes, support-index bytes); only a view has support indexes."""
    if isinstance(structure, MaterializedJoinView):
        return structure.view.space(), total_space(structure.support.stores)
    return total_space(structure.stores), SpaceReport()


def total_space(stores) -> SpaceReport:
    out = SpaceReport()
    for s in stores:
        out = out + s.space()
    return out


# -- phases ------------------------------------------------------------------

def _queries(structure, cfg: ExperimentConfig, count: int, seed: int) -> tuple[int, int]:
    rows = peak = 0
    stream = query_stream(cfg.workload, cfg.phase, seed)
    for _ in range(count):
        arg = next(stream)
        if cfg.phase == "point":
            rows += len(structure.point_join(arg, cfg.jt))
        else:
            rows += sum(1 for _ in structure.range_join(arg, cfg.jt))
        peak = max(peak, structure.last_stats.peak_buffered)
    return rows, peak


def _updates(structure, stream: NewOrderStream, count: int) -> int:
    """New-order transactions: read each stock row, then apply its update and the orderline insert."""
    changes = 0
    for _ in range(count):
        _, deltas = stream.next()
        for delta in deltas:
            if delta.table is SourceTag.STOCK and delta.kind == "update":
                structure.read_stock(*delta.old.key)
            structure.apply(delta)
            changes += 1
    return changes


def run_experiment(cfg: ExperimentConfig, cache: dict | None = None) -> MetricsReport:
    """Build, warm up, reset counters, run the measured phase and snapshot everything.

    ``cache`` maps build keys to loaded structures and is only consulted by the
    read-only point and scan phases, which leave a structure unchanged.
    """
    if cfg.structure == "matview" and cfg.stored_jt is JoinType.INNER and cfg.jt is not JoinType.INNER:
        raise ConfigError(f"an inner view cannot serve {cfg.jt.value} queries")
    if cache is not None and cfg.phase in ("point", "scan"):
        built = cache.get(cfg.build_key)
        if built is None:
            built = cache[cfg.build_key] = build(cfg)
    else:
        built = build(cfg)
    structure = built.structure
    space, support = split_space(structure)
    if cfg.phase == "load":
        return MetricsReport(cfg, space.entries + support.entries, built.load, built.load,
                             space=space, support_space=support, load_seconds=built.load_seconds)

    # warm-up: cold pool, one pass over every page, then a slice of the workload
    pool = structure.stores[0].pool
    pool.clear()
    pool.resize(cfg.capacity)
    for store in structure.stores:
        for _ in store.range_scan():
            pass
    seed = cfg.workload.seed
    stream = NewOrderStream(cfg.workload, built.stocks, built.orderlines) if cfg.phase == "update" else None
    if stream is not None:
        _updates(structure, stream, cfg.warmup_count)
    else:
        _queries(structure, cfg, cfg.warmup_count, seed + 3)
    for store in structure.stores:
        store.counters.reset()

    start = time.perf_counter()
    rows = peak = 0
    if stream is not None:
        rows = _updates(structure, stream, cfg.op_count)
    else:
        rows, peak = _queries(structure, cfg, cfg.op_count, seed + 2)
    seconds = time.perf_counter() - start
    measured = total(s.counters for s in structure.stores)
    space, support = split_space(structure)
    return MetricsReport(cfg, cfg.op_count, built.load, measured, rows, peak, space, support,
                         built.load_seconds, seconds)


# -- space -------------------------------------------------------------------

SPACE_COLUMNS = ("structure", "entries", "payload_bytes", "allocated_bytes", "pages",
                 "net_addition_payload_bytes", "net_addition_bytes")


def report_space(structures: Mapping[str, object]) -> list[dict]:
    """Bytes per structure; a view's support indexes go in the net-addition columns."""
    out = []
    for name, structure in structures.items():
        main, support = split_space(structure)
        out.append({
            "structure": name, "entries": main.entries, "payload_bytes": main.payload_bytes,
            "allocated_bytes": main.allocated_bytes, "pages": main.pages,
            "net_addition_payload_bytes": support.payload_bytes,
            "net_addition_bytes": support.allocated_bytes,
        })
    return out


def space_structures(workload: WorkloadConfig, backend: str = "btree",
                     view_jt: JoinType = JoinType.INNER) -> dict[str, object]:
    """All three structures loaded with the same data (LSM stores compacted)."""
    stocks, orderlines = _database(workload)
    out = {}
    for name in STRUCTURES:
        s = create_structure(name, backend, BufferPool(CAPACITIES["large"]), workload.policy, view_jt)
        s.bulk_load(stocks, orderlines)
        if backend == "lsm":
            for store in s.stores:
                store.compact()
        out[name] = s
    return out


# -- grids -------------------------------------------------------------------

class GridParseError(ConfigError):
    def __init__(self, line: int, message: str, source: str = "<grid>"):
        super().__init__(f"{source}:{line}: {message}")
        self.line = line


_LIST_KEYS = ("backend", "buffer", "so", "jt", "view_jt", "policy", "structure", "phase")
_INT_KEYS = ("ops", "ops.point", "ops.scan", "ops.update", "warmup",
             "warehouses", "items_per_warehouse", "orderlines_per_warehouse", "seed")
# loop order, outermost first; keeps runs that share a build next to each other
_AXES = ("seed", "warehouses", "items_per_warehouse", "orderlines_per_warehouse",
         "backend", "so", "policy", "structure", "buffer", "view_jt", "jt", "phase")


def _parse_value(key: str, text: str):
    if key == "so":
        value = float(text)
        if not 0.0 <= value <= 1.0:
            raise ValueError("so must lie in [0, 1]")
        return value
    if key in ("jt", "view_jt"):
        return JoinType.parse(text)
    if key == "policy":
        return Policy(text.lower())
    if key in _INT_KEYS:
        return int(text)
    allowed = {"backend": BACKENDS, "buffer": BUFFERS, "structure": STRUCTURES, "phase": PHASES}[key]
    if text not in allowed:
        raise ValueError(f"expected one of {', '.join(allowed)}")
    return text


def parse_grid(text: str, source: str = "<grid>") -> list[ExperimentConfig]:
    values: dict[str, list] = {}
    lines: dict[str, int] = {}
    for number, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise GridParseError(number, f"expected 'key = value', got {line!r}", source)
        key, _, rest = (part.strip() for part in line.partition("="))
        if key not in _LIST_KEYS and key not in _INT_KEYS:
            raise GridParseError(number, f"unknown key {key!r}", source)
        if key in values:
            raise GridParseError(number, f"{key!r} already set on line {lines[key]}", source)
        items = [item.strip() for item in rest.split(",")]
        if not all(items):
            raise GridParseError(number, f"empty value for {key!r}", source)
        try:
            values[key] = [_parse_value(key, item) for item in items]
        except ValueError as e:
            raise GridParseError(number, f"bad value for {key!r}: {e}", source) from None
        lines[key] = number

    base = WorkloadConfig()
    axes = {axis: values.get(axis, [None]) for axis in _AXES}
    configs = []
    for combo in itertools.product(*axes.values()):
        point = dict(zip(_AXES, combo))
        structure = point["structure"] or "merged"
        if structure != "matview" and point["view_jt"] != axes["view_jt"][0]:
            continue  # view_jt does not vary the other structures
        workload = replace(base, **{k: point[k] for k in
                                    ("seed", "warehouses", "items_per_warehouse", "orderlines_per_warehouse")
                                    if point[k] is not None})
        phase = point["phase"] or "point"
        ops = values.get(f"ops.{phase}", values.get("ops", [None]))[0]
        kwargs = {k: point[k] for k in ("backend", "buffer", "so", "jt", "policy") if point[k] is not None}
        view_jt = point["view_jt"] if structure == "matview" else None
        try:
            configs.append(ExperimentConfig(structure=structure, phase=phase, workload=workload, ops=ops,
                                            warmup=values.get("warmup", [None])[0], view_jt=view_jt, **kwargs))
        except ConfigError as e:
            key = "view_jt" if "view" in str(e) else "jt"
            raise GridParseError(lines.get(key, 0), str(e), source) from None
    return configs


def load_grid(path: str | Path) -> list[ExperimentConfig]:
    path = Path(path)
    return parse_grid(path.read_text(), str(path))


DEFAULT_GRID = """\
# Every independent variable at every level: 2 backends x 2 buffers x 3 selectivities
# x 2 join types x 3 policies = 72 points, times 3 structures and 3 measured phases.
backend   = btree, lsm
buffer    = small, large
so        = 0.05, 0.19, 1.0
jt        = inner, full_outer
policy    = all, covering, keys
structure = merged, traditional, matview
phase     = point, scan, update

warehouses = 2
items_per_warehouse = 500
orderlines_per_warehouse = 5000
seed = 42

ops.point  = 100
ops.scan   = 2
ops.update = 10
"""


@dataclass
class GridResult:
    reports: list[MetricsReport]

    @property
    def rows(self) -> list[dict]:
        return [r.row() for r in self.reports]

    def ratios(self) -> list[dict]:
        return ratio_table(self.reports)


def run_grid(configs: Iterable[ExperimentConfig],
             progress: Callable[[int, MetricsReport], None] | None = None) -> GridResult:
    reports = []
    cache: dict = {}
    for n, cfg in enumerate(configs):
        if cfg.build_key not in cache:
            cache.clear()
        reports.append(run_experiment(cfg, cache))
        if progress is not None:
            progress(n, reports[-1])
    return GridResult(reports)


def ratio_table(reports: Iterable[MetricsReport]) -> list[dict]:
    """Proxy throughput ratios: baseline accesses/op over merged accesses/op (> 1 favours merged).

    The ``misses_`` columns do the same with buffer misses, the cost that
    matters once the data outgrows the pool. Also the view-to-merged allocated
    space ratio. Cells without a partner config, or with a zero merged cost,
    are left empty.
    """
    groups: dict[tuple, dict[str, MetricsReport]] = {}
    for r in reports:
        c = r.config
        key = (c.backend, c.buffer, c.so, c.jt.value, c.policy.value, c.phase, c.workload)
        groups.setdefault(key, {})[c.structure] = r
    out = []
    for key, by in groups.items():
        merged = by.get("merged")
        if merged is None:
            continue

        def ratio(other: str, measure: Callable[[MetricsReport], float]) -> str:
            r = by.get(other)
            if r is None or not measure(merged):
                return ""
            return _fmt(measure(r) / measure(merged))

        out.append({
            **dict(zip(RATIO_COLUMNS, key[:6])),
            "merged_vs_traditional": ratio("traditional", lambda r: r.node_accesses_per_op),
            "merged_vs_matview": ratio("matview", lambda r: r.node_accesses_per_op),
            "misses_merged_vs_traditional": ratio("traditional", lambda r: r.misses_per_op),
            "misses_merged_vs_matview": ratio("matview", lambda r: r.misses_per_op),
            "matview_space_vs_merged": ratio("matview", lambda r: r.space.allocated_bytes),
        })
    return out


def to_csv(rows: Iterable[dict], columns: Iterable[str]) -> str:
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=list(columns), lineterminator="\n")
    writer.writeheader()
    writer.writerows(rows)
    return buf.getvalue()


def write_outputs(result: GridResult, out_dir: str | Path) -> dict[str, Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = {
        "csv": out / "results.csv",
        "json": out / "results.json",
        "ratios": out / "ratios.csv",
    }
    paths["csv"].write_text(to_csv(result.rows, CSV_COLUMNS))
    paths["json"].write_text(json.dumps([r.to_json() for r in result.reports], indent=1) + "\n")
    paths["ratios"].write_text(to_csv(result.ratios(), RATIO_COLUMNS))
    return paths


def config_dict(cfg: ExperimentConfig) -> dict:
    d = asdict(cfg)
    d["jt"] = cfg.jt.value
    d["policy"] = cfg.policy.value
    d["view_jt"] = cfg.view_jt.value if cfg.view_jt else None
    d["workload"]["policy"] = cfg.policy.value
    return d
