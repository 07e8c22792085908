from __future__ import annotations

from dataclasses import dataclass

from .encoding import Record, SourceTag, source_of

KINDS = ("insert", "delete", "update")


@dataclass(frozen=True)
class Delta:
    """One base-table change. Inserts carry ``new``, deletes ``old``, updates both."""

    table: SourceTag
    kind: str
    old: Record | None = None
    new: Record | None = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown delta kind {self.kind!r}")
        need_old = self.kind in ("delete", "update")
        need_new = self.kind in ("insert", "update")
        if (self.old is not None) != need_old or (self.new is not None) != need_new:
            raise ValueError(f"{self.kind} delta has the wrong record images")
        for image in (self.old, self.new):
            if image is not None and source_of(image) is not SourceTag(self.table):
                raise ValueError("record image does not match the delta's table")

    @classmethod
    def insert(cls, record: Record) -> "Delta":
        return cls(source_of(record), "insert", new=record)

    @classmethod
    def delete(cls, record: Record) -> "Delta":
        return cls(source_of(record), "delete", old=record)

    @classmethod
    def update(cls, old: Record, new: Record) -> "Delta":
        return cls(source_of(old), "update", old=old, new=new)
