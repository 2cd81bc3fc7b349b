from __future__ import annotations

import pytest

from pregraph.locks import (
    DuplicateRequest,
    LockMode,
    LockTable,
    NotHolding,
    NotHoldingW,
    compatible,
)

R, W, IW = LockMode.R, LockMode.W, LockMode.IW


def test_compatibility_matrix_exhaustive():
    expected = {
        (R, R): True, (R, W): False, (R, IW): False,
        (W, R): False, (W, W): False, (W, IW): False,
        (IW, R): False, (IW, W): False, (IW, IW): True,
    }
    for (req, held), want in expected.items():
        assert compatible(req, held) is want, (req, held)


def test_request_r_shares_with_r():
    lt = LockTable()
    assert lt.request("x", "a", "t1", R)
    assert lt.request("x", "b", "t2", R)


def test_request_w_queues_behind_r():
    lt = LockTable()
    assert lt.request("x", "a", "t1", R)
    assert not lt.request("x", "b", "t2", W)
    assert [e.op_id for e in lt.queued("x")] == ["b"]


def test_request_iw_shares_with_iw():
    lt = LockTable()
    assert lt.request("x", "a", "t1", IW)
    assert lt.request("x", "b", "t2", IW)


def test_no_barging_past_waiters():
    lt = LockTable()
    assert lt.request("x", "a", "t1", R)
    assert not lt.request("x", "b", "t2", W)
    # a second R is compatible with the holder but must queue behind the W
    assert not lt.request("x", "c", "t3", R)
    assert [e.op_id for e in lt.queued("x")] == ["b", "c"]


def test_duplicate_request_rejected():
    lt = LockTable()
    lt.request("x", "a", "t1", R)
    with pytest.raises(DuplicateRequest):
        lt.request("x", "a", "t1", W)


def test_release_grants_head():
    lt = LockTable()
    lt.request("x", "a", "t1", R)
    lt.request("x", "b", "t2", W)
    granted = lt.release("x", "a")
    assert [e.op_id for e in granted] == ["b"]
    assert lt.holds("x", "b", W)


def test_release_one_of_two_readers_keeps_w_queued():
    lt = LockTable()
    lt.request("x", "a", "t1", R)
    lt.request("x", "a2", "t2", R)
    lt.request("x", "b", "t3", W)
    assert lt.release("x", "a") == []
    assert [e.op_id for e in lt.queued("x")] == ["b"]


def test_release_with_empty_queue():
    lt = LockTable()
    lt.request("x", "a", "t1", R)
    assert lt.release("x", "a") == []


def test_release_not_holding():
    lt = LockTable()
    with pytest.raises(NotHolding):
        lt.release("x", "a")


def test_convert_w_to_iw_wakes_iw_waiter():
    lt = LockTable()
    lt.request("x", "a", "t1", W)
    assert not lt.request("x", "b", "t2", IW)
    granted = lt.convert_w_to_iw("x", "a")
    assert [e.op_id for e in granted] == ["b"]
    assert lt.holds("x", "a", IW) and lt.holds("x", "b", IW)


def test_convert_w_to_iw_leaves_r_waiter_queued():
    lt = LockTable()
    lt.request("x", "a", "t1", W)
    lt.request("x", "b", "t2", R)
    assert lt.convert_w_to_iw("x", "a") == []
    assert [e.op_id for e in lt.queued("x")] == ["b"]


def test_convert_w_to_iw_empty_queue():
    lt = LockTable()
    lt.request("x", "a", "t1", W)
    assert lt.convert_w_to_iw("x", "a") == []


def test_convert_requires_w():
    lt = LockTable()
    lt.request("x", "a", "t1", R)
    with pytest.raises(NotHoldingW):
        lt.convert_w_to_iw("x", "a")
    with pytest.raises(NotHoldingW):
        lt.convert_w_to_iw("x", "zz")


def test_force_write_lock_evicts_reader():
    lt = LockTable()
    lt.request("x", "a", "t1", R)
    holders, waiters = lt.force_write_lock("x", "f", "t9")
    assert [(v.op_id, v.txn_id) for v in holders] == [("a", "t1")]
    assert waiters == []
    assert lt.holds("x", "f", IW)


def test_force_write_lock_shares_with_iw():
    lt = LockTable()
    lt.request("x", "a", "t1", IW)
    assert lt.force_write_lock("x", "f", "t9") == ([], [])
    assert lt.holds("x", "a", IW) and lt.holds("x", "f", IW)


def test_force_write_lock_no_holders():
    lt = LockTable()
    assert lt.force_write_lock("x", "f", "t9") == ([], [])
    assert lt.holds("x", "f", IW)


def test_force_write_lock_evicts_queue_too():
    lt = LockTable()
    lt.request("x", "a", "t1", W)
    lt.request("x", "b", "t2", W)
    holders, waiters = lt.force_write_lock("x", "f", "t9")
    assert {v.op_id for v in holders} == {"a"}
    assert {v.op_id for v in waiters} == {"b"}
    assert lt.queued("x") == []


def test_force_write_lock_idempotent_for_own_op():
    # the origin already converted this op's W into IW before submission
    lt = LockTable()
    lt.request("x", "a", "t1", W)
    lt.convert_w_to_iw("x", "a")
    assert lt.force_write_lock("x", "a", "t1") == ([], [])
    assert len(lt.holders("x")) == 1


def test_release_transaction_releases_everything_and_drains():
    lt = LockTable()
    lt.request("x", "a1", "t1", IW)
    lt.request("y", "a2", "t1", IW)
    lt.request("x", "b", "t2", R)
    lt.request("y", "c", "t3", R)
    granted = lt.release_transaction("t1")
    assert {e.op_id for e in granted} == {"b", "c"}
    assert lt.holds("x", "b", R) and lt.holds("y", "c", R)


def test_release_transaction_drops_queued_entries():
    lt = LockTable()
    lt.request("x", "a", "t1", W)
    lt.request("x", "b", "t2", W)
    lt.release_transaction("t2")
    assert lt.queued("x") == []
    assert lt.holds("x", "a", W)


def test_w_holder_is_always_alone():
    lt = LockTable()
    lt.request("x", "a", "t1", W)
    assert not lt.request("x", "b", "t2", R)
    assert not lt.request("x", "c", "t3", W)
    assert not lt.request("x", "d", "t4", IW)
    assert len(lt.holders("x")) == 1
