from __future__ import annotations

import pytest

from pregraph.graph import (
    CycleBudgetExceeded,
    PrecedenceGraph,
    VertexAbsent,
    break_cycles,
    closed_set,
    decide,
    elementary_cycles,
    is_closed,
)

from conftest import graph_of, txn


def three_txns():
    return {name: txn(name, "w:x") for name in ("tA", "tB", "tC")}


def test_union_with_empty_is_identity():
    ts = three_txns()
    g = graph_of(ts, [("tA", "tB")])
    empty = PrecedenceGraph()
    assert g.union(empty) == g
    assert empty.union(g) == g


def test_union_ors_aborted_flags():
    ts = {"tA": txn("tA", "w:x")}
    g1 = graph_of(ts, [], aborted=("tA",))
    g2 = graph_of(ts, [])
    u = g1.union(g2)
    assert u.is_aborted("tA")
    assert g2.union(g1).is_aborted("tA")


def test_union_unions_op_subsets():
    t = txn("tA", "w:x r:y")
    ops = sorted(o.op_id for o in t.ops)
    g1 = graph_of({"tA": t}, [], opg={"tA": [ops[0]]})
    g2 = graph_of({"tA": t}, [], opg={"tA": [ops[1]]})
    assert set(g1.union(g2).opg("tA")) == set(ops)


def test_subset_empty_always():
    g = graph_of(three_txns(), [("tA", "tB")])
    assert PrecedenceGraph().is_subset(g)


def test_subset_aborted_flag_must_be_implied():
    ts = {"tA": txn("tA", "w:x")}
    flagged = graph_of(ts, [], aborted=("tA",))
    plain = graph_of(ts, [])
    assert not flagged.is_subset(plain)
    assert plain.is_subset(flagged)


def test_union_is_superset_of_both():
    ts = three_txns()
    g1 = graph_of(ts, [("tA", "tB")])
    g2 = graph_of(ts, [("tB", "tC")], aborted=("tC",))
    u = g1.union(g2)
    assert g1.is_subset(u) and g2.is_subset(u)


def test_neighbors():
    ts = three_txns()
    g = graph_of(ts, [("tA", "tB"), ("tB", "tC")])
    assert g.in_neighbors("tA") == {"tA"}
    assert g.in_neighbors("tB") == {"tA", "tB"}
    assert g.out_neighbors("tB") == {"tB", "tC"}
    with pytest.raises(VertexAbsent):
        g.in_neighbors("zz")


def test_out_neighbors_multi():
    ts = three_txns()
    g = graph_of(ts, [("tA", "tB"), ("tA", "tC")])
    assert g.out_neighbors("tA") == {"tA", "tB", "tC"}


def test_predecessors_chain():
    ts = three_txns()
    g = graph_of(ts, [("tA", "tB"), ("tB", "tC")])
    p = g.predecessors("tC")
    assert p.vertices() == ["tA", "tB", "tC"]
    assert p.edges() == [("tA", "tB"), ("tB", "tC")]


def test_predecessors_isolated():
    g = graph_of({"tA": txn("tA", "w:x")}, [])
    p = g.predecessors("tA")
    assert p.vertices() == ["tA"]
    assert p.edges() == []


def test_predecessors_excludes_unrelated():
    ts = {name: txn(name, "w:x") for name in ("tA", "tB", "tC", "tD", "tE", "tT")}
    g = graph_of(
        ts,
        [("tA", "tB"), ("tB", "tT"), ("tA", "tC"), ("tC", "tT"), ("tD", "tE")],
    )
    p = g.predecessors("tT")
    assert p.vertices() == ["tA", "tB", "tC", "tT"]
    # oracle: reachability on reversed edges
    rev = {}
    for a, b in g.edges():
        rev.setdefault(b, set()).add(a)
    reach, stack = {"tT"}, ["tT"]
    while stack:
        v = stack.pop()
        for w in rev.get(v, ()):
            if w not in reach:
                reach.add(w)
                stack.append(w)
    assert set(p.vertices()) == reach


def test_predecessors_preserves_flags_and_opg():
    ts = three_txns()
    g = graph_of(ts, [("tA", "tB")], aborted=("tA",))
    p = g.predecessors("tB")
    assert p.is_aborted("tA")
    assert p.opg("tA") == g.opg("tA")
    assert p.is_subset(g)


def test_cycles_acyclic_graph():
    g = graph_of(three_txns(), [("tA", "tB"), ("tB", "tC")])
    assert elementary_cycles(g) == []


def test_cycles_two_cycle():
    g = graph_of(three_txns(), [("tA", "tB"), ("tB", "tA")])
    assert elementary_cycles(g) == [frozenset({"tA", "tB"})]


def test_cycles_k3_has_five():
    ts = three_txns()
    edges = [(a, b) for a in ts for b in ts if a != b]
    g = graph_of(ts, edges)
    cycles = elementary_cycles(g)
    # oracle: brute-force DFS over all simple paths returning to their start
    assert len(cycles) == len(_brute_force_cycles(set(ts), set(edges)))
    assert len(cycles) == 5
    two = [c for c in cycles if len(c) == 2]
    three = [c for c in cycles if len(c) == 3]
    assert len(two) == 3 and len(three) == 2


def _brute_force_cycles(vertices, edges):
    succ = {}
    for a, b in edges:
        succ.setdefault(a, set()).add(b)
    found = set()

    def walk(start, v, path):
        for w in succ.get(v, ()):
            if w == start and len(path) >= 1:
                # normalise: rotate so the path starts at its minimum
                k = path.index(min(path))
                found.add(tuple(path[k:] + path[:k]))
            elif w not in path and w > start:
                walk(start, w, path + [w])

    for v in sorted(vertices):
        walk(v, v, [v])
    return found


def test_cycle_budget():
    # a dense graph on 9 vertices has far more than 20 elementary cycles
    names = [f"t{i}" for i in range(9)]
    ts = {n: txn(n, "w:x") for n in names}
    edges = [(a, b) for a in names for b in names if a != b]
    g = graph_of(ts, edges)
    with pytest.raises(CycleBudgetExceeded):
        elementary_cycles(g, cap=20)


def test_break_cycles_acyclic():
    g = graph_of(three_txns(), [("tA", "tB")])
    assert break_cycles(g) == frozenset()


def test_break_cycles_two_cycle_picks_smaller_id():
    g = graph_of(three_txns(), [("tA", "tB"), ("tB", "tA")])
    # exhaustive check: the minimum feedback vertex set has size 1
    assert _min_fvs_size(g) == 1
    assert break_cycles(g) == {"tA"}


def test_break_cycles_two_disjoint_cycles():
    names = ["t1", "t2", "t3", "t4"]
    ts = {n: txn(n, "w:x") for n in names}
    g = graph_of(ts, [("t1", "t2"), ("t2", "t1"), ("t3", "t4"), ("t4", "t3")])
    assert _min_fvs_size(g) == 2
    result = break_cycles(g)
    assert len(result) == 2
    assert elementary_cycles(_without(g, result)) == []


def _without(g, removed):
    keep = {v: g.meta(v) for v in g.vertices() if v not in removed}
    edges = [(a, b) for a, b in g.edges() if a not in removed and b not in removed]
    return graph_of(keep, edges)


def _min_fvs_size(g):
    from itertools import combinations

    vertices = g.vertices()
    for k in range(len(vertices) + 1):
        for subset in combinations(vertices, k):
            if elementary_cycles(_without(g, set(subset))) == []:
                return k
    return len(vertices)


def test_decide_acyclic_predecessors():
    g = graph_of(three_txns(), [("tA", "tB")])
    assert decide("tB", g) is True


def test_decide_two_cycle_min_id_loses():
    ts = {"tT": txn("tT", "w:x"), "tU": txn("tU", "w:x")}
    g = graph_of(ts, [("tT", "tU"), ("tU", "tT")])
    assert _min_fvs_size(g) == 1
    assert decide("tT", g) is False
    assert decide("tU", g) is True


def test_decide_ignores_cycles_with_aborted_members():
    ts = {"tT": txn("tT", "w:x"), "tU": txn("tU", "w:x")}
    g = graph_of(ts, [("tT", "tU"), ("tU", "tT")], aborted=("tU",))
    assert decide("tT", g) is True


def test_closed_trivial():
    g = graph_of({"tA": txn("tA", "w:x")}, [])
    assert is_closed("tA", g) is True


def test_not_closed_with_partial_opg():
    t = txn("tA", "w:x r:y")
    some_op = sorted(o.op_id for o in t.ops)[0]
    g = graph_of({"tA": t}, [], opg={"tA": [some_op]})
    assert is_closed("tA", g) is False


def test_two_cycle_both_closed():
    ts = {"tT": txn("tT", "w:x"), "tU": txn("tU", "w:x")}
    g = graph_of(ts, [("tT", "tU"), ("tU", "tT")])
    # oracle: iterate the defining equation to a fixed point starting from
    # "everything closed" (greatest fixed point)
    state = {v: True for v in g.vertices()}
    changed = True
    while changed:
        changed = False
        for v in g.vertices():
            ok = g.opg_complete(v) and all(
                state[u] for u in g.in_neighbors(v) if u != v
            )
            if state[v] != ok:
                state[v] = ok
                changed = True
    assert state == {"tT": True, "tU": True}
    assert closed_set(g) == {"tT", "tU"}


def test_unclosedness_propagates_forward():
    t_open = txn("tA", "w:x r:y")
    some_op = sorted(o.op_id for o in t_open.ops)[0]
    ts = {"tA": t_open, "tB": txn("tB", "w:x"), "tC": txn("tC", "w:x")}
    g = graph_of(
        ts,
        [("tA", "tB"), ("tB", "tC")],
        opg={"tA": [some_op], "tB": [o.op_id for o in ts["tB"].ops],
             "tC": [o.op_id for o in ts["tC"].ops]},
    )
    assert closed_set(g) == frozenset()
    with pytest.raises(VertexAbsent):
        is_closed("zz", g)


def test_canonical_roundtrip_and_equality():
    ts = three_txns()
    g = graph_of(ts, [("tA", "tB")], aborted=("tB",))
    raw = g.to_canonical_bytes()
    g2 = PrecedenceGraph.from_canonical_bytes(raw)
    assert g2 == g
    assert g2.to_canonical_bytes() == raw
    g3 = g.copy()
    g3.set_aborted("tA")
    assert g3.to_canonical_bytes() != raw
