import random
from dataclasses import replace

import pytest

from mergedindex.baselines import MaterializedJoinView, TraditionalIndexes
from mergedindex.deltas import Delta
from mergedindex.encoding import OrderlineRecord, Policy, SourceTag
from mergedindex.errors import IntegrityError, NotFoundError, UnsupportedJoinError
from mergedindex.joins import JoinRow, JoinType
from mergedindex.merged_index import MergedIndex
from mergedindex.oracle import ShadowDb, canonical, nested_loops_join, same_multiset
from mergedindex.verify import random_deltas
from mergedindex.workload import WorkloadConfig, example_database, generate

BACKENDS = ["btree", "lsm"]


def pairs(rows):
    return [(r.orderline, r.stock) for r in rows]


def reset(structure):
    for store in structure.stores:
        store.counters.reset()


def group_db(k):
    """One stock row (1, 1) with k orderlines on its key."""
    stocks, orderlines = example_database()
    return stocks[0], [replace(orderlines[0], line_number=n) for n in range(1, k + 1)]


# -- traditional indexes ------------------------------------------------------

@pytest.mark.parametrize("backend", BACKENDS)
def test_merge_join_on_example(backend):
    (s1, s2), (ol1, ol2, ol3, ol4) = example_database()
    ti = TraditionalIndexes.create(backend)
    ti.bulk_load([s1, s2], [ol1, ol2, ol3, ol4])
    assert pairs(ti.full_join()) == [(ol1, s1), (ol2, s1), (ol3, s2), (ol4, s2)]
    assert pairs(ti.point_join((1, 2))) == [(ol3, s2), (ol4, s2)]


def test_merge_join_point_lookup_opens_two_cursors():
    stocks, orderlines = example_database()
    ti = TraditionalIndexes.create("btree")
    ti.bulk_load(stocks, orderlines)
    reset(ti)
    ti.point_join((1, 2))
    assert sum(s.counters.root_to_leaf_traversals for s in ti.stores) == 2
    assert ti.stock_index.counters.root_to_leaf_traversals == 1


def test_merge_join_output_sorted_by_join_key():
    stocks, orderlines = generate(WorkloadConfig(2, 30, 200, so=0.5, seed=3))
    ti = TraditionalIndexes.create("btree")
    ti.bulk_load(stocks, orderlines)
    keys = [r.join_key for r in ti.full_join(JoinType.FULL_OUTER)]
    assert keys == sorted(keys)


@pytest.mark.parametrize("backend", BACKENDS)
@pytest.mark.parametrize("seed", range(5))
def test_traditional_matches_oracle_for_every_join_type(backend, seed):
    cfg = WorkloadConfig(2, 20, 80, so=[0.2, 0.5, 1.0][seed % 3], policy=list(Policy)[seed % 3], seed=seed)
    stocks, orderlines = generate(cfg)
    ti = TraditionalIndexes.create(backend, policy=cfg.policy)
    ti.bulk_load(stocks, orderlines)
    db = ShadowDb.from_rows(stocks, orderlines)
    for jt in JoinType:
        assert same_multiset(ti.full_join(jt), nested_loops_join(db, jt, cfg.policy)), jt


def test_maintain_traditional_touches_one_index_once():
    stocks, orderlines = example_database()
    ti = TraditionalIndexes.create("btree")
    ti.bulk_load(stocks, orderlines)
    reset(ti)
    ti.apply(Delta.insert(OrderlineRecord(1, 2, 1, 1, 2, 1, 0, 3, 7, "x" * 24)))
    assert ti.orderline_index.counters.mutations == 1
    assert ti.stock_index.counters.mutations == 0
    assert ti.orderline_index.space().entries == 5
    reset(ti)
    ti.apply(Delta.update(stocks[0], replace(stocks[0], quantity=11)))
    assert ti.stock_index.counters.mutations == 1
    assert ti.orderline_index.counters.mutations == 0
    assert ti.read_stock(1, 1).quantity == 11


def test_maintain_traditional_missing_row():
    stocks, orderlines = example_database()
    ti = TraditionalIndexes.create("btree")
    ti.bulk_load(stocks[:1], orderlines)
    with pytest.raises(NotFoundError):
        ti.apply(Delta.delete(stocks[1]))
    with pytest.raises(NotFoundError):
        ti.apply(Delta.update(stocks[1], replace(stocks[1], quantity=1)))


@pytest.mark.parametrize("backend", BACKENDS)
def test_traditional_tracks_shadow_tables(backend):
    stocks, orderlines = generate(WorkloadConfig(2, 20, 100, so=0.5, seed=8))
    ti = TraditionalIndexes.create(backend, page_size=2048)
    ti.bulk_load(stocks, orderlines)
    db = ShadowDb.from_rows(stocks, orderlines)
    for delta in random_deltas(db, random.Random(8), 1000, 2, 20):
        ti.apply(delta)
    assert list(ti.extract_table(SourceTag.STOCK)) == [db.stock[k] for k in sorted(db.stock)]
    by_index_key = sorted(db.orderline.values(), key=lambda o: (*o.join_key, *o.remainder))
    assert list(ti.extract_table(SourceTag.ORDERLINE)) == by_index_key


# -- materialized join view ---------------------------------------------------

@pytest.mark.parametrize("backend", BACKENDS)
def test_view_point_lookup_returns_last_two_rows(backend):
    (s1, s2), (ol1, ol2, ol3, ol4) = example_database()
    mv = MaterializedJoinView.create(backend)
    mv.bulk_load([s1, s2], [ol1, ol2, ol3, ol4])
    assert pairs(mv.full_join()) == [(ol1, s1), (ol2, s1), (ol3, s2), (ol4, s2)]
    assert pairs(mv.point_join((1, 2))) == [(ol3, s2), (ol4, s2)]
    assert mv.point_join((1, 7)) == []
    assert list(mv.range_join(5)) == []


def test_view_query_is_one_scan_of_the_view():
    stocks, orderlines = example_database()
    mv = MaterializedJoinView.create("btree")
    mv.bulk_load(stocks, orderlines)
    reset(mv)
    mv.point_join((1, 2))
    assert mv.view.counters.root_to_leaf_traversals == 1
    assert all(s.counters.node_reads == 0 for s in mv.support.stores)


def test_inner_view_rejects_outer_joins():
    mv = MaterializedJoinView.create("btree", jt_stored=JoinType.INNER)
    for jt in (JoinType.LEFT_OUTER, JoinType.RIGHT_OUTER, JoinType.FULL_OUTER):
        assert not mv.serves(jt)
        with pytest.raises(UnsupportedJoinError):
            mv.query_view((1,), jt)
    with pytest.raises(UnsupportedJoinError):
        MaterializedJoinView.create("btree", jt_stored=JoinType.LEFT_OUTER)


def test_full_view_filtered_to_inner_equals_inner_view():
    stocks, orderlines = generate(WorkloadConfig(2, 20, 100, so=0.5, seed=4))
    inner = MaterializedJoinView.create("btree", jt_stored=JoinType.INNER)
    full = MaterializedJoinView.create("btree", jt_stored=JoinType.FULL_OUTER)
    for mv in (inner, full):
        mv.bulk_load(stocks, orderlines)
    assert list(full.full_join(JoinType.INNER)) == list(inner.full_join(JoinType.INNER))


def test_unmatched_orderline_gets_padding_row():
    stocks, orderlines = example_database()
    mv = MaterializedJoinView.create("btree", jt_stored=JoinType.FULL_OUTER)
    mv.bulk_load(stocks, orderlines)
    dangling = OrderlineRecord(1, 1, 2, 1, 99, 1, 0, 1, 1, "y" * 24)
    before = mv.view.space().entries
    mv.apply(Delta.insert(dangling))
    assert mv.view.space().entries == before + 1
    assert pairs(mv.point_join((1, 99), JoinType.FULL_OUTER)) == [(dangling, None)]


def test_padding_converts_when_first_match_appears_and_last_leaves():
    s1, _ = group_db(0)
    mv = MaterializedJoinView.create("btree", jt_stored=JoinType.FULL_OUTER)
    mv.bulk_load([s1], [])
    assert pairs(mv.full_join(JoinType.FULL_OUTER)) == [(None, s1)]
    _, (ol,) = group_db(1)
    mv.apply(Delta.insert(ol))
    assert pairs(mv.full_join(JoinType.FULL_OUTER)) == [(ol, s1)]
    mv.apply(Delta.delete(s1))
    assert pairs(mv.full_join(JoinType.FULL_OUTER)) == [(ol, None)]
    mv.apply(Delta.insert(s1))
    mv.apply(Delta.delete(ol))
    assert pairs(mv.full_join(JoinType.FULL_OUTER)) == [(None, s1)]


@pytest.mark.parametrize("k", [0, 1, 3])
def test_stock_update_rewrites_k_view_rows(k):
    s1, orderlines = group_db(k)
    mv = MaterializedJoinView.create("btree", jt_stored=JoinType.INNER)
    mv.bulk_load([s1], orderlines)
    reset(mv)
    mv.apply(Delta.update(s1, replace(s1, quantity=7)))
    assert mv.support.orderline_index.counters.probes >= 1
    assert mv.support.stock_index.counters.mutations == 1
    assert mv.view.counters.mutations == k
    assert all(r.stock.quantity == 7 for r in mv.full_join())


@pytest.mark.parametrize("k", [0, 1, 3])
def test_merged_index_stock_update_is_one_mutation(k):
    s1, orderlines = group_db(k)
    index = MergedIndex.create("btree")
    index.bulk_load([s1], orderlines)
    index.store.counters.reset()
    index.apply(Delta.update(s1, replace(s1, quantity=7)))
    assert index.store.counters.mutations == 1
    assert index.store.counters.probes == 0


def test_full_view_pays_for_padding_without_matches():
    s1, _ = group_db(0)
    mv = MaterializedJoinView.create("btree", jt_stored=JoinType.FULL_OUTER)
    mv.bulk_load([s1], [])
    reset(mv)
    mv.apply(Delta.update(s1, replace(s1, quantity=7)))
    assert mv.view.counters.mutations == 1
    assert pairs(mv.full_join(JoinType.FULL_OUTER))[0][1].quantity == 7


def test_orderline_insert_probes_stock_index():
    s1, _ = group_db(0)
    _, (ol,) = group_db(1)
    mv = MaterializedJoinView.create("btree")
    mv.bulk_load([s1], [])
    reset(mv)
    mv.apply(Delta.insert(ol))
    assert mv.support.stock_index.counters.probes == 1
    assert mv.view.counters.mutations == 1
    assert pairs(mv.full_join()) == [(ol, s1)]


def test_missing_view_row_is_an_integrity_error():
    s1, orderlines = group_db(2)
    mv = MaterializedJoinView.create("btree")
    mv.bulk_load([s1], orderlines)
    mv.view.delete(next(k for k, _ in mv.view.range_scan()))
    with pytest.raises(IntegrityError):
        mv.apply(Delta.update(s1, replace(s1, quantity=7)))


@pytest.mark.parametrize("backend", BACKENDS)
@pytest.mark.parametrize("stored", [JoinType.INNER, JoinType.FULL_OUTER])
@pytest.mark.parametrize("seed", range(4))
def test_view_stays_fresh_under_random_deltas(backend, stored, seed):
    cfg = WorkloadConfig(2, 10, 60, so=0.5, seed=seed)
    stocks, orderlines = generate(cfg)
    mv = MaterializedJoinView.create(backend, jt_stored=stored, page_size=2048)
    mv.bulk_load(stocks, orderlines)
    db = ShadowDb.from_rows(stocks, orderlines)
    for delta in random_deltas(db, random.Random(seed), 500, 2, 10):
        mv.apply(delta)
    assert same_multiset(mv.full_join(stored), nested_loops_join(db, stored))
    if stored is JoinType.FULL_OUTER:
        rows = list(mv.full_join(JoinType.FULL_OUTER))
        matched_o = {r.orderline.key for r in rows if r.orderline and r.stock}
        matched_s = {r.stock.key for r in rows if r.orderline and r.stock}
        assert all(r.orderline.key not in matched_o for r in rows if r.stock is None)
        assert all(r.stock.key not in matched_s for r in rows if r.orderline is None)


def test_view_space_duplicates_stock_payload():
    (s1, s2), orderlines = example_database()
    mv = MaterializedJoinView.create("btree")
    mv.bulk_load([s1, s2], orderlines)
    rows = list(mv.full_join())
    assert canonical(rows) == rows
    assert mv.view.space().entries == 4
    assert isinstance(rows[0], JoinRow)
