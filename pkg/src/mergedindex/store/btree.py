"""Paged b+-tree over a simulated buffer pool.

Nodes live as Python objects; every visit goes through the pool so reads,
misses and writes are counted. Page capacity is accounted in bytes:

    node header         32
    leaf entry          len(key) + len(value) + 8   (slot + key/value lengths)
    internal entry      len(key) + 8                (slot + child pointer)
    leftmost child      4

Splits happen at the byte midpoint. Empty leaves are freed; there is no merge
on underflow. Bulk load fills leaves to ``fill_factor`` of a page (0.9 by
default, leaving room for a few inserts before the first split) and internal
nodes completely.
"""
from __future__ import annotations

from bisect import bisect_left, bisect_right
from typing import Callable, Iterable, Iterator

from .base import Entry, OrderedStore
from .bufferpool import PAGE_SIZE, BufferPool
from .metrics import SpaceReport

NODE_HEADER = 32
LEAF_ENTRY_OVERHEAD = 8
INTERNAL_ENTRY_OVERHEAD = 8
CHILD_POINTER = 4
FILL_FACTOR = 0.9


class _Node:
    __slots__ = ("page_id", "leaf", "keys", "values", "children", "used", "next", "prev")

    def __init__(self, page_id: int, leaf: bool):
        self.page_id = page_id
        self.leaf = leaf
        self.keys: list[bytes] = []
        self.values: list[bytes] = []
        self.children: list[_Node] = []
        self.used = NODE_HEADER if leaf else NODE_HEADER + CHILD_POINTER
        self.next: _Node | None = None
        self.prev: _Node | None = None


def _leaf_cost(key: bytes, value: bytes) -> int:
    return len(key) + len(value) + LEAF_ENTRY_OVERHEAD


def _sep_cost(key: bytes) -> int:
    return len(key) + INTERNAL_ENTRY_OVERHEAD


class BTreeStore(OrderedStore):
    backend = "btree"

    def __init__(
        self,
        name: str = "btree",
        pool: BufferPool | None = None,
        page_size: int = PAGE_SIZE,
        fill_factor: float = FILL_FACTOR,
    ):
        super().__init__(name, pool, page_size)
        if not 0.5 <= fill_factor <= 1.0:
            raise ValueError("fill_factor must lie in [0.5, 1]")
        self.fill_factor = fill_factor
        self.max_entry = page_size // 4
        self.root = self._new_node(leaf=True)
        self.height = 1
        self._entries = 0
        self._payload = 0
        self._pages = 1
        self._largest = 0
        # creating the empty root is not an operation
        self.counters.reset()

    # -- page plumbing -------------------------------------------------------

    def _new_node(self, leaf: bool) -> _Node:
        return _Node(self.pool.allocate(self.counters), leaf)

    def _read(self, node: _Node) -> None:
        self.pool.read(node.page_id, self.counters)

    def _write(self, node: _Node, written: set[int]) -> None:
        if node.page_id not in written:
            written.add(node.page_id)
            self.pool.write(node.page_id, self.counters)

    def _free(self, node: _Node) -> None:
        self.pool.free(node.page_id)
        self._pages -= 1

    def _search(self, keys: list[bytes], key: bytes, right: bool) -> int:
        self.counters.key_comparisons += len(keys).bit_length()
        return bisect_right(keys, key) if right else bisect_left(keys, key)

    def _descend(self, key: bytes) -> list[tuple[_Node, int]]:
        """Root-to-leaf path as (node, child index taken); the leaf's index is -1."""
        self.counters.root_to_leaf_traversals += 1
        node = self.root
        self._read(node)
        path = []
        while not node.leaf:
            idx = self._search(node.keys, key, right=True)
            path.append((node, idx))
            node = node.children[idx]
            self._read(node)
        path.append((node, -1))
        return path

    # -- point operations ----------------------------------------------------

    def _check_size(self, key: bytes, value: bytes) -> None:
        cost = _leaf_cost(key, value)
        if cost > self.max_entry:
            raise ValueError(f"entry of {cost} bytes exceeds a quarter page")
        self._largest = max(self._largest, cost)

    def put(self, key: bytes, value: bytes) -> None:
        self._check_size(key, value)
        self.counters.mutations += 1
        self.counters.bytes_written += len(key) + len(value)
        written: set[int] = set()
        path = self._descend(key)
        leaf = path[-1][0]
        i = self._search(leaf.keys, key, right=False)
        if i < len(leaf.keys) and leaf.keys[i] == key:
            old = leaf.values[i]
            leaf.values[i] = value
            leaf.used += len(value) - len(old)
            self._payload += len(value) - len(old)
        else:
            leaf.keys.insert(i, key)
            leaf.values.insert(i, value)
            leaf.used += _leaf_cost(key, value)
            self._entries += 1
            self._payload += len(key) + len(value)
        self._write(leaf, written)
        if leaf.used > self.page_size:
            self._split(path, written)

    def get(self, key: bytes) -> bytes | None:
        self.counters.probes += 1
        leaf = self._descend(key)[-1][0]
        i = self._search(leaf.keys, key, right=False)
        if i < len(leaf.keys) and leaf.keys[i] == key:
            value = leaf.values[i]
            self.counters.entries_scanned += 1
            self.counters.bytes_read += len(key) + len(value)
            return value
        return None

    def update(self, key: bytes, value: bytes) -> bytes:
        self._check_size(key, value)
        written: set[int] = set()
        path = self._descend(key)
        leaf = path[-1][0]
        i = self._search(leaf.keys, key, right=False)
        if i >= len(leaf.keys) or leaf.keys[i] != key:
            raise KeyError(key)
        self.counters.mutations += 1
        self.counters.bytes_written += len(key) + len(value)
        old = leaf.values[i]
        self.counters.bytes_read += len(key) + len(old)
        leaf.values[i] = value
        leaf.used += len(value) - len(old)
        self._payload += len(value) - len(old)
        self._write(leaf, written)
        if leaf.used > self.page_size:
            self._split(path, written)
        return old

    def delete(self, key: bytes, must_exist: bool = False) -> None:
        path = self._descend(key)
        leaf = path[-1][0]
        i = self._search(leaf.keys, key, right=False)
        if i >= len(leaf.keys) or leaf.keys[i] != key:
            if must_exist:
                raise KeyError(key)
            return
        self.counters.mutations += 1
        written: set[int] = set()
        value = leaf.values.pop(i)
        leaf.keys.pop(i)
        leaf.used -= _leaf_cost(key, value)
        self._entries -= 1
        self._payload -= len(key) + len(value)
        self._write(leaf, written)
        if not leaf.keys and (leaf.prev is not None or leaf.next is not None):
            self._unlink_leaf(path, written)

    def update_range(
        self, lower: bytes, upper: bytes | None, fn: Callable[[bytes, bytes], bytes | None]
    ) -> int:
        self.counters.probes += 1
        written: set[int] = set()
        leaf: _Node | None = self._descend(lower)[-1][0]
        i = self._search(leaf.keys, lower, right=False)
        overflowed: list[bytes] = []
        changed = 0
        done = False
        while leaf is not None:
            keys, values = leaf.keys, leaf.values
            while i < len(keys):
                key = keys[i]
                if upper is not None:
                    self.counters.key_comparisons += 1
                    if key >= upper:
                        done = True
                        break
                old = values[i]
                self.counters.entries_scanned += 1
                self.counters.bytes_read += len(key) + len(old)
                new = fn(key, old)
                if new is not None and new != old:
                    self._check_size(key, new)
                    values[i] = new
                    leaf.used += len(new) - len(old)
                    self._payload += len(new) - len(old)
                    self.counters.mutations += 1
                    self.counters.bytes_written += len(key) + len(new)
                    self._write(leaf, written)
                    changed += 1
                i += 1
            if leaf.used > self.page_size:
                overflowed.append(leaf.keys[0])
            if done:
                break
            leaf = leaf.next
            i = 0
            if leaf is not None:
                self._read(leaf)
        for first_key in overflowed:
            path = self._descend(first_key)
            if path[-1][0].used > self.page_size:
                self._split(path, written)
        return changed

    # -- structure maintenance -----------------------------------------------

    def _split(self, path: list[tuple[_Node, int]], written: set[int]) -> None:
        level = len(path) - 1
        node = path[level][0]
        while node.used > self.page_size:
            right, separator = self._split_node(node)
            assert node.used <= self.page_size and right.used <= self.page_size
            self._write(right, written)
            if level == 0:
                new_root = self._new_node(leaf=False)
                self._pages += 1
                new_root.keys = [separator]
                new_root.children = [node, right]
                new_root.used += _sep_cost(separator)
                written.add(new_root.page_id)
                self.root = new_root
                self.height += 1
                return
            parent, idx = path[level - 1]
            parent.keys.insert(idx, separator)
            parent.children.insert(idx + 1, right)
            parent.used += _sep_cost(separator)
            self._write(parent, written)
            level -= 1
            node = parent

    def _split_node(self, node: _Node) -> tuple[_Node, bytes]:
        right = self._new_node(node.leaf)
        self._pages += 1
        if node.leaf:
            costs = [_leaf_cost(k, v) for k, v in zip(node.keys, node.values)]
            half = sum(costs) / 2
            acc = 0
            cut = 0
            while cut < len(costs) - 1 and acc < half:
                acc += costs[cut]
                cut += 1
            cut = max(cut, 1)
            right.keys, node.keys = node.keys[cut:], node.keys[:cut]
            right.values, node.values = node.values[cut:], node.values[:cut]
            right.used = NODE_HEADER + sum(costs[cut:])
            node.used = NODE_HEADER + sum(costs[:cut])
            right.next, right.prev = node.next, node
            if node.next is not None:
                node.next.prev = right
            node.next = right
            return right, right.keys[0]
        # keys[mid] moves up; pick the cut that balances the two halves' bytes
        costs = [_sep_cost(k) for k in node.keys]
        prefix = [0]
        for c in costs:
            prefix.append(prefix[-1] + c)
        mid = min(
            range(1, len(costs) - 1),
            key=lambda m: max(prefix[m], prefix[-1] - prefix[m + 1]),
        )
        separator = node.keys[mid]
        right.keys = node.keys[mid + 1:]
        right.children = node.children[mid + 1:]
        node.keys = node.keys[:mid]
        node.children = node.children[:mid + 1]
        right.used = NODE_HEADER + CHILD_POINTER + prefix[-1] - prefix[mid + 1]
        node.used = NODE_HEADER + CHILD_POINTER + prefix[mid]
        return right, separator

    def _unlink_leaf(self, path: list[tuple[_Node, int]], written: set[int]) -> None:
        leaf = path[-1][0]
        if leaf.prev is not None:
            leaf.prev.next = leaf.next
            self._write(leaf.prev, written)
        if leaf.next is not None:
            leaf.next.prev = leaf.prev
        self._free(leaf)
        level = len(path) - 2
        while level >= 0:
            parent, idx = path[level]
            parent.children.pop(idx)
            if parent.keys:
                removed = parent.keys.pop(idx - 1 if idx > 0 else 0)
                parent.used -= _sep_cost(removed)
            self._write(parent, written)
            if parent.children or level == 0:
                break
            self._free(parent)
            level -= 1
        while not self.root.leaf and len(self.root.children) == 1:
            old = self.root
            self.root = old.children[0]
            self._free(old)
            self.height -= 1

    # -- scans and loads -----------------------------------------------------

    def range_scan(self, lower: bytes = b"", upper: bytes | None = None) -> Iterator[Entry]:
        self.counters.probes += 1
        counters = self.counters
        leaf: _Node | None = self._descend(lower)[-1][0]
        i = self._search(leaf.keys, lower, right=False)
        while leaf is not None:
            keys, values = leaf.keys, leaf.values
            while i < len(keys):
                key = keys[i]
                if upper is not None:
                    counters.key_comparisons += 1
                    if key >= upper:
                        return
                value = values[i]
                counters.entries_scanned += 1
                counters.bytes_read += len(key) + len(value)
                yield key, value
                i += 1
            leaf = leaf.next
            i = 0
            if leaf is not None:
                self._read(leaf)

    def bulk_load(self, entries: Iterable[Entry]) -> None:
        batch: dict[bytes, bytes] = {}
        for key, value in entries:
            self._check_size(key, value)
            batch[key] = value
        if not batch:
            return
        ordered = sorted(batch.items())
        if self._entries == 0:
            self._build(ordered)
        else:
            for key, value in ordered:
                self.put(key, value)

    def _build(self, ordered: list[Entry]) -> None:
        """Bottom-up build of packed leaves, then internal levels, left to right."""
        self._free(self.root)
        self._pages = 0
        self.counters.mutations += len(ordered)
        bounds = self._pack([_leaf_cost(k, v) for k, v in ordered], leaf=True)
        level = []
        for lo, hi in bounds:
            node = self._new_node(leaf=True)
            node.keys = [k for k, _ in ordered[lo:hi]]
            node.values = [v for _, v in ordered[lo:hi]]
            node.used = NODE_HEADER + sum(_leaf_cost(k, v) for k, v in ordered[lo:hi])
            level.append(node)
        self._pages += len(level)
        for a, b in zip(level, level[1:]):
            a.next, b.prev = b, a
        self._entries = len(ordered)
        self._payload = sum(len(k) + len(v) for k, v in ordered)
        self.counters.bytes_written += self._payload
        self.height = 1
        while len(level) > 1:
            firsts = [self._first_key(n) for n in level]
            children = level
            level = []
            for lo, hi in self._pack([_sep_cost(k) for k in firsts], leaf=False):
                node = self._new_node(leaf=False)
                node.children = children[lo:hi]
                node.keys = firsts[lo + 1:hi]
                node.used = NODE_HEADER + CHILD_POINTER + sum(_sep_cost(k) for k in node.keys)
                level.append(node)
            self._pages += len(level)
            self.height += 1
        self.root = level[0]

    @staticmethod
    def _first_key(node: _Node) -> bytes:
        while not node.leaf:
            node = node.children[0]
        return node.keys[0]

    def _pack(self, costs: list[int], leaf: bool) -> list[tuple[int, int]]:
        """Split items into nodes filled up to the target, left to right; returns [lo, hi) bounds.

        An internal node's first child rides on the leftmost pointer, so only
        items after the first cost their separator. A last node under half a
        page is rebalanced with its left neighbour.
        """
        base = NODE_HEADER + (0 if leaf else CHILD_POINTER)
        target = int(self.page_size * self.fill_factor) if leaf else self.page_size
        prefix = [0]
        for c in costs:
            prefix.append(prefix[-1] + c)

        def used(lo: int, hi: int) -> int:
            return base + prefix[hi] - prefix[lo if leaf else lo + 1]

        bounds = []
        lo = 0
        while lo < len(costs):
            hi = lo + 1
            while hi < len(costs) and used(lo, hi + 1) <= target:
                hi += 1
            bounds.append((lo, hi))
            lo = hi
        if len(bounds) > 1 and used(*bounds[-1]) < self.page_size // 2:
            a, d = bounds[-2][0], bounds[-1][1]
            cut = min(range(a + 1, d), key=lambda c: max(used(a, c), used(c, d)))
            bounds[-2:] = [(a, cut), (cut, d)]
        return bounds

    # -- inspection ----------------------------------------------------------

    def _silent_scan(self) -> Iterator[Entry]:
        node = self.root
        while not node.leaf:
            node = node.children[0]
        while node is not None:
            yield from zip(node.keys, node.values)
            node = node.next

    def space(self) -> SpaceReport:
        # an empty tree's root leaf holds nothing and is not charged
        pages = self._pages if self._entries else 0
        return SpaceReport(
            entries=self._entries,
            stored_entries=self._entries,
            payload_bytes=self._payload,
            allocated_bytes=pages * self.page_size,
            pages=pages,
            runs=0,
        )

    def check(self, strict_occupancy: bool = True) -> None:
        """Validate structure; raises AssertionError on the first violation.

        Occupancy is checked to within two entries of half a page (byte-midpoint
        splits cannot do better with variable-size entries) and only makes sense
        for delete-free histories, since underfull nodes are never merged.
        """
        slack = 2 * max(self._largest, INTERNAL_ENTRY_OVERHEAD + 64)
        leaf_depths = set()
        leaves_in_order: list[_Node] = []
        pages = 0

        def walk(node: _Node, depth: int, low: bytes | None, high: bytes | None) -> None:
            nonlocal pages
            pages += 1
            assert node.keys == sorted(node.keys), "keys out of order"
            assert len(set(node.keys)) == len(node.keys), "duplicate keys in node"
            if low is not None and node.keys:
                assert node.keys[0] >= low, "key below fence"
            if high is not None and node.keys:
                assert node.keys[-1] < high, "key above fence"
            assert node.used <= self.page_size, "node over capacity"
            if strict_occupancy and node is not self.root:
                assert node.used + slack >= self.page_size // 2, "node under half full"
            if node.leaf:
                expect = NODE_HEADER + sum(_leaf_cost(k, v) for k, v in zip(node.keys, node.values))
                assert node.used == expect, "leaf byte accounting drift"
                leaf_depths.add(depth)
                leaves_in_order.append(node)
                return
            assert len(node.children) == len(node.keys) + 1, "fan-out mismatch"
            expect = NODE_HEADER + CHILD_POINTER + sum(_sep_cost(k) for k in node.keys)
            assert node.used == expect, "internal byte accounting drift"
            bounds = [low, *node.keys, high]
            for j, child in enumerate(node.children):
                walk(child, depth + 1, bounds[j], bounds[j + 1])

        walk(self.root, 1, None, None)
        assert len(leaf_depths) == 1, f"leaves at depths {sorted(leaf_depths)}"
        assert leaf_depths == {self.height}, "height bookkeeping drift"
        assert pages == self._pages, "page count drift"
        chain = []
        node = leaves_in_order[0]
        assert node.prev is None
        while node is not None:
            chain.append(node)
            if node.next is not None:
                assert node.next.prev is node, "broken back link"
            node = node.next
        assert chain == leaves_in_order, "leaf chain differs from tree order"
        assert sum(len(n.keys) for n in chain) == self._entries, "entry count drift"
