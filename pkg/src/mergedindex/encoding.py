"""Schemas, included-columns policies and the order-preserving byte codec.

Byte format (all multi-byte integers big-endian):

    U32   4 bytes, unsigned, 0 <= v < 2**32
    I64   8 bytes, two's complement with the sign bit flipped
    U8    1 byte, unsigned
    TAG   1 byte, SourceTag value (0 = Stock, 1 = Orderline)
    TEXT  raw UTF-8 bytes, each 0x00 written as 0x00 0x01, terminated by 0x00 0x00
    CHAR  fixed ``n`` bytes, ASCII, right-padded with 0x00 (0x00 not allowed in the value)

Every kind sorts bytewise in the same order as its logical value, and TEXT
terminates before any continuation, so a concatenation of encoded components
compares lexicographically component by component.

Keys:

    stock index       U32 warehouse_id, U32 item_id                                    (8 bytes)
    orderline index   U32 warehouse_id, U32 item_id, U32 district_id, U32 order_id,
                      U32 line_number                                                  (20 bytes)
    merged index      U32 warehouse_id, U32 item_id, TAG, <remainder>
                      remainder: empty for Stock, (district_id, order_id, line_number)
                      for Orderline                                                    (9 / 21 bytes)

Payloads are the policy's non-key columns, encoded in declaration order with
the same codec (see ``STOCK_COLUMNS`` / ``ORDERLINE_COLUMNS``).
"""
from __future__ import annotations

import enum
import struct
from dataclasses import dataclass, fields, replace
from typing import Any, Sequence

EncodedKey = bytes
EncodedRecord = bytes

U8 = "u8"
U32 = "u32"
I64 = "i64"
TAG = "tag"
TEXT = "text"

U32_MAX = 2**32 - 1
I64_MIN = -(2**63)
I64_MAX = 2**63 - 1
MAX_TEXT = 50
DIST_INFO_WIDTH = 24
DIST_INFO_COUNT = 10

_U32 = struct.Struct(">I")
_U64 = struct.Struct(">Q")
_SIGN = 1 << 63


class EncodingError(ValueError):
    pass


class SourceTag(enum.IntEnum):
    STOCK = 0
    ORDERLINE = 1

    def __repr__(self) -> str:
        return self.name.capitalize()


class Policy(str, enum.Enum):
    """Which columns a storage structure keeps next to the keys."""

    ALL = "all"
    COVERING = "covering"
    KEYS = "keys"


def char(width: int) -> str:
    return f"char({width})"


def _char_width(kind: str) -> int | None:
    if kind.startswith("char(") and kind.endswith(")"):
        return int(kind[5:-1])
    return None


# ---------------------------------------------------------------------------
# component codec


def encode_component(value: Any, kind: str) -> bytes:
    if kind == U32:
        if not isinstance(value, int) or not 0 <= value <= U32_MAX:
            raise EncodingError(f"u32 component out of range: {value!r}")
        return _U32.pack(value)
    if kind == U8:
        if not isinstance(value, int) or not 0 <= value <= 255:
            raise EncodingError(f"u8 component out of range: {value!r}")
        return bytes([value])
    if kind == I64:
        if not isinstance(value, int) or not I64_MIN <= value <= I64_MAX:
            raise EncodingError(f"i64 component out of range: {value!r}")
        return _U64.pack((value + (1 << 64)) % (1 << 64) ^ _SIGN)
    if kind == TAG:
        try:
            return bytes([SourceTag(value)])
        except ValueError as exc:
            raise EncodingError(f"bad source tag: {value!r}") from exc
    if kind == TEXT:
        if not isinstance(value, str) or len(value) > MAX_TEXT:
            raise EncodingError(f"text component too long or not text: {value!r}")
        return value.encode().replace(b"\x00", b"\x00\x01") + b"\x00\x00"
    width = _char_width(kind)
    if width is not None:
        if not isinstance(value, str):
            raise EncodingError(f"char component not text: {value!r}")
        raw = value.encode("ascii", errors="replace")
        if not value.isascii() or len(raw) > width or b"\x00" in raw:
            raise EncodingError(f"char({width}) component invalid: {value!r}")
        return raw.ljust(width, b"\x00")
    raise EncodingError(f"unknown component kind {kind!r}")


def decode_component(data: bytes, pos: int, kind: str) -> tuple[Any, int]:
    try:
        if kind == U32:
            return _U32.unpack_from(data, pos)[0], pos + 4
        if kind == I64:
            raw = _U64.unpack_from(data, pos)[0] ^ _SIGN
            return (raw - (1 << 64) if raw & _SIGN else raw), pos + 8
        if kind == TAG:
            return SourceTag(data[pos]), pos + 1
        if kind == U8:
            return data[pos], pos + 1
    except (struct.error, IndexError, ValueError) as exc:
        raise EncodingError(f"truncated or invalid {kind} at offset {pos}") from exc
    if kind == TEXT:
        out = bytearray()
        while True:
            end = data.find(b"\x00", pos)
            if end < 0 or end + 1 >= len(data):
                raise EncodingError(f"unterminated text at offset {pos}")
            out += data[pos:end]
            marker = data[end + 1]
            pos = end + 2
            if marker == 0:
                return out.decode(), pos
            if marker != 1:
                raise EncodingError(f"bad text escape at offset {end}")
            out.append(0)
    width = _char_width(kind)
    if width is not None:
        if pos + width > len(data):
            raise EncodingError(f"truncated char({width}) at offset {pos}")
        return data[pos:pos + width].rstrip(b"\x00").decode("ascii"), pos + width
    raise EncodingError(f"unknown component kind {kind!r}")


def infer_kind(value: Any) -> str:
    if isinstance(value, SourceTag):
        return TAG
    if isinstance(value, bool):
        raise EncodingError("booleans are not a key component kind")
    if isinstance(value, int):
        return U32
    if isinstance(value, str):
        return TEXT
    raise EncodingError(f"cannot encode component {value!r}")


def encode_key(components: Sequence[Any], kinds: Sequence[str] | None = None) -> EncodedKey:
    """Encode a composite key. Kinds default to U32 for ints, TAG for SourceTag, TEXT for str."""
    if not components:
        raise EncodingError("empty key")
    if kinds is None:
        kinds = [infer_kind(c) for c in components]
    elif len(kinds) != len(components):
        raise EncodingError("kinds and components differ in length")
    return b"".join(encode_component(c, k) for c, k in zip(components, kinds))


def decode_key(data: bytes, kinds: Sequence[str]) -> list[Any]:
    out = []
    pos = 0
    for kind in kinds:
        value, pos = decode_component(data, pos, kind)
        out.append(value)
    if pos != len(data):
        raise EncodingError(f"{len(data) - pos} trailing bytes after key")
    return out


def decode_merged_key(data: bytes) -> list[Any]:
    """Decode a merged-index key; the tag byte decides the remainder schema."""
    if len(data) < 9:
        raise EncodingError("merged key shorter than join key + tag")
    if data[8] not in (SourceTag.STOCK, SourceTag.ORDERLINE):
        raise EncodingError(f"bad source tag byte {data[8]:#x}")
    return decode_key(data, MERGED_KEY_KINDS[SourceTag(data[8])])


def prefix_successor(prefix: bytes) -> bytes | None:
    """Smallest byte string greater than every string starting with ``prefix``."""
    stripped = prefix.rstrip(b"\xff")
    if not stripped:
        return None
    return stripped[:-1] + bytes([stripped[-1] + 1])


# ---------------------------------------------------------------------------
# schemas

STOCK_KEY_KINDS = (U32, U32)
ORDERLINE_KEY_KINDS = (U32, U32, U32, U32, U32)
MERGED_KEY_KINDS = {
    SourceTag.STOCK: (U32, U32, TAG),
    SourceTag.ORDERLINE: (U32, U32, TAG, U32, U32, U32),
}

# (field name, kind, policies that keep it)
_BOTH = (Policy.ALL, Policy.COVERING)
STOCK_COLUMNS: tuple[tuple[str, str, tuple[Policy, ...]], ...] = (
    ("quantity", I64, _BOTH),
    ("year_to_date", I64, _BOTH),
    ("order_count", I64, _BOTH),
    ("data", TEXT, _BOTH),
    ("district_info", "dist", (Policy.ALL,)),
)
ORDERLINE_COLUMNS: tuple[tuple[str, str, tuple[Policy, ...]], ...] = (
    ("supply_warehouse_id", U32, (Policy.ALL,)),
    ("delivery_date", I64, _BOTH),
    ("quantity", I64, _BOTH),
    ("amount", I64, _BOTH),
    ("district_info", char(DIST_INFO_WIDTH), (Policy.ALL,)),
)


@dataclass(frozen=True)
class StockRecord:
    warehouse_id: int
    item_id: int
    quantity: int | None = None
    year_to_date: int | None = None
    order_count: int | None = None
    data: str | None = None
    district_info: tuple[str, ...] | None = None

    @property
    def key(self) -> tuple[int, int]:
        return (self.warehouse_id, self.item_id)

    @property
    def join_key(self) -> tuple[int, int]:
        return (self.warehouse_id, self.item_id)

    def restricted(self, policy: Policy) -> "StockRecord":
        return _restrict(self, STOCK_COLUMNS, policy)


@dataclass(frozen=True)
class OrderlineRecord:
    warehouse_id: int
    district_id: int
    order_id: int
    line_number: int
    item_id: int
    supply_warehouse_id: int | None = None
    delivery_date: int | None = None
    quantity: int | None = None
    amount: int | None = None
    district_info: str | None = None

    @property
    def key(self) -> tuple[int, int, int, int]:
        return (self.warehouse_id, self.district_id, self.order_id, self.line_number)

    @property
    def join_key(self) -> tuple[int, int]:
        return (self.warehouse_id, self.item_id)

    @property
    def remainder(self) -> tuple[int, int, int]:
        return (self.district_id, self.order_id, self.line_number)

    def restricted(self, policy: Policy) -> "OrderlineRecord":
        return _restrict(self, ORDERLINE_COLUMNS, policy)


Record = StockRecord | OrderlineRecord


def _restrict(record, columns, policy):
    policy = Policy(policy)
    drop = {name: None for name, _, keep in columns if policy not in keep}
    return replace(record, **drop) if drop else record


def _columns_for(source: SourceTag):
    return STOCK_COLUMNS if source is SourceTag.STOCK else ORDERLINE_COLUMNS


def source_of(record: Record) -> SourceTag:
    if isinstance(record, StockRecord):
        return SourceTag.STOCK
    if isinstance(record, OrderlineRecord):
        return SourceTag.ORDERLINE
    raise EncodingError(f"not a stock or orderline record: {record!r}")


# ---------------------------------------------------------------------------
# keys


def stock_index_key(warehouse_id: int, item_id: int) -> EncodedKey:
    return encode_key((warehouse_id, item_id), STOCK_KEY_KINDS)


def orderline_index_key(record: OrderlineRecord) -> EncodedKey:
    return encode_key(
        (record.warehouse_id, record.item_id, *record.remainder), ORDERLINE_KEY_KINDS
    )


def join_key_prefix(*components: int) -> bytes:
    """Prefix shared by every entry whose join key starts with ``components``."""
    return encode_key(components, (U32,) * len(components))


def merged_entry_key(
    join_key: tuple[int, int], tag: SourceTag, remainder: Sequence[int] = ()
) -> EncodedKey:
    tag = SourceTag(tag)
    kinds = MERGED_KEY_KINDS[tag]
    if len(remainder) != len(kinds) - 3:
        raise EncodingError(f"{tag!r} entry needs a remainder of {len(kinds) - 3} columns")
    return encode_key((*join_key, tag, *remainder), kinds)


def merged_key_for(record: Record) -> EncodedKey:
    if isinstance(record, StockRecord):
        return merged_entry_key(record.join_key, SourceTag.STOCK)
    return merged_entry_key(record.join_key, SourceTag.ORDERLINE, record.remainder)


# ---------------------------------------------------------------------------
# payloads


def _encode_column(value: Any, kind: str) -> bytes:
    if kind == "dist":
        if value is None or len(value) != DIST_INFO_COUNT:
            raise EncodingError("district_info needs exactly 10 fields")
        return b"".join(encode_component(v, char(DIST_INFO_WIDTH)) for v in value)
    return encode_component(value, kind)


def _decode_column(data: bytes, pos: int, kind: str) -> tuple[Any, int]:
    if kind == "dist":
        out = []
        for _ in range(DIST_INFO_COUNT):
            v, pos = decode_component(data, pos, char(DIST_INFO_WIDTH))
            out.append(v)
        return tuple(out), pos
    return decode_component(data, pos, kind)


def project(record: Record, policy: Policy) -> EncodedRecord:
    """Encode the policy's non-key columns of ``record``."""
    policy = Policy(policy)
    out = []
    for name, kind, keep in _columns_for(source_of(record)):
        if policy in keep:
            out.append(_encode_column(getattr(record, name), kind))
    return b"".join(out)


def decode_payload(
    source: SourceTag, data: bytes, policy: Policy, pos: int = 0
) -> tuple[dict[str, Any], int]:
    """Decode a payload starting at ``pos``; returns the column dict and the end offset."""
    policy = Policy(policy)
    values = {}
    for name, kind, keep in _columns_for(SourceTag(source)):
        if policy in keep:
            values[name], pos = _decode_column(data, pos, kind)
    return values, pos


def stock_from(join_key: Sequence[int], columns: dict[str, Any]) -> StockRecord:
    return StockRecord(join_key[0], join_key[1], **columns)


def orderline_from(
    join_key: Sequence[int], remainder: Sequence[int], columns: dict[str, Any]
) -> OrderlineRecord:
    w, i = join_key
    d, o, n = remainder
    return OrderlineRecord(w, d, o, n, i, **columns)


def decode_merged_entry(key: bytes, value: bytes, policy: Policy) -> Record:
    parts = decode_merged_key(key)
    columns, end = decode_payload(parts[2], value, policy)
    if end != len(value):
        raise EncodingError("trailing bytes after payload")
    if parts[2] is SourceTag.STOCK:
        return stock_from(parts[:2], columns)
    return orderline_from(parts[:2], parts[3:], columns)


def record_fields(record: Record) -> dict[str, Any]:
    return {f.name: getattr(record, f.name) for f in fields(record)}
