import random
from collections import Counter
from dataclasses import replace

import pytest
from hypothesis import given
from hypothesis import strategies as st

from mergedindex.deltas import Delta
from mergedindex.encoding import Policy
from mergedindex.errors import NotFoundError
from mergedindex.joins import JoinRow, JoinType
from mergedindex.oracle import (
    ShadowDb,
    canonical,
    full_outer_row_count,
    inner_row_count,
    multiset_diff,
    nested_loops_join,
    same_multiset,
)
from mergedindex.verify import random_deltas
from mergedindex.workload import WorkloadConfig, example_database, generate


def pairs(rows):
    return [(r.orderline, r.stock) for r in rows]


def test_example_inner_join():
    (s1, s2), (ol1, ol2, ol3, ol4) = example_database()
    db = ShadowDb.from_rows([s1, s2], [ol1, ol2, ol3, ol4])
    assert pairs(nested_loops_join(db, JoinType.INNER)) == [(ol1, s1), (ol2, s1), (ol3, s2), (ol4, s2)]


@pytest.mark.parametrize("jt", list(JoinType))
def test_empty_db(jt):
    assert nested_loops_join(ShadowDb(), jt) == []


def test_padding_and_semi_joins_on_lone_rows():
    (s1, _), (ol1, *_) = example_database()
    lone_o = replace(ol1, item_id=9)
    db = ShadowDb.from_rows([s1], [lone_o])
    assert pairs(nested_loops_join(db, JoinType.FULL_OUTER)) == [(None, s1), (lone_o, None)]
    assert pairs(nested_loops_join(db, JoinType.LEFT_OUTER)) == [(lone_o, None)]
    assert pairs(nested_loops_join(db, JoinType.RIGHT_OUTER)) == [(None, s1)]
    assert nested_loops_join(db, JoinType.LEFT_SEMI) == []
    assert nested_loops_join(db, JoinType.RIGHT_SEMI) == []
    assert nested_loops_join(ShadowDb.from_rows([s1], []), JoinType.FULL_OUTER) == [JoinRow((1, 1), None, s1)]


def test_semi_joins_emit_each_record_once():
    (s1, s2), orderlines = example_database()
    db = ShadowDb.from_rows([s1, s2], orderlines)
    assert pairs(nested_loops_join(db, JoinType.RIGHT_SEMI)) == [(None, s1), (None, s2)]
    assert pairs(nested_loops_join(db, JoinType.LEFT_SEMI)) == [(o, None) for o in orderlines]


def test_policy_restricts_columns():
    stocks, orderlines = example_database()
    db = ShadowDb.from_rows(stocks, orderlines)
    rows = nested_loops_join(db, JoinType.INNER, Policy.KEYS)
    assert rows[0].stock == stocks[0].restricted(Policy.KEYS)
    assert db.stock[stocks[0].key] == stocks[0]


def test_multiset_helper_distinguishes_absent_sides():
    (s1, _), (ol1, *_) = example_database()
    padded_o = JoinRow((1, 1), ol1, None)
    padded_s = JoinRow((1, 1), None, s1)
    matched = JoinRow((1, 1), ol1, s1)
    assert not same_multiset([padded_o], [matched])
    assert not same_multiset([padded_s], [padded_o])
    assert not same_multiset([matched], [matched, matched])
    assert same_multiset([padded_s, matched], [matched, padded_s])
    extra, missing = multiset_diff([matched, matched, padded_o], [matched, padded_s])
    assert Counter(extra) == Counter([matched, padded_o])
    assert missing == [padded_s]


def test_canonical_order_puts_absent_first():
    (s1, _), (ol1, *_) = example_database()
    rows = [JoinRow((1, 1), ol1, s1), JoinRow((1, 1), None, s1), JoinRow((1, 0), ol1, None)]
    assert canonical(rows) == [rows[2], rows[1], rows[0]]


def test_apply_insert_then_delete_is_identity():
    stocks, orderlines = example_database()
    db = ShadowDb.from_rows(stocks, orderlines)
    before = db.copy()
    extra = replace(orderlines[0], order_id=7)
    db.apply(Delta.insert(extra))
    db.apply(Delta.delete(extra))
    assert db == before


def test_apply_update_replaces_value():
    stocks, orderlines = example_database()
    db = ShadowDb.from_rows(stocks, orderlines)
    db.apply(Delta.update(stocks[0], replace(stocks[0], quantity=1)))
    assert db.stock[stocks[0].key].quantity == 1


def test_apply_absent_key_raises():
    stocks, orderlines = example_database()
    db = ShadowDb.from_rows(stocks[:1], [])
    with pytest.raises(NotFoundError):
        db.apply(Delta.delete(stocks[1]))
    with pytest.raises(NotFoundError):
        db.apply(Delta.update(orderlines[0], orderlines[0]))


def test_trace_replay_is_deterministic():
    stocks, orderlines = generate(WorkloadConfig(2, 10, 50, so=0.5, seed=1))
    db = ShadowDb.from_rows(stocks, orderlines)
    trace = list(random_deltas(db, random.Random(5), 500, 2, 10))
    replay = ShadowDb.from_rows(stocks, orderlines)
    for delta in trace:
        replay.apply(delta)
    assert replay == db


@given(st.integers(0, 2**32), st.sampled_from([0.0, 0.2, 0.5, 1.0]))
def test_row_count_formulas_match_the_join(seed, so):
    stocks, orderlines = generate(WorkloadConfig(1, 6, 30, so=so, seed=seed))
    db = ShadowDb.from_rows(stocks, orderlines)
    assert len(nested_loops_join(db, JoinType.INNER)) == inner_row_count(db)
    assert len(nested_loops_join(db, JoinType.FULL_OUTER)) == full_outer_row_count(db)
