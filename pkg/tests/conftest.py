from __future__ import annotations

import pytest

from pregraph.graph import PrecedenceGraph
from pregraph.model import Operation, OpKind, Transaction


def op(op_id: str, txn: str, item: str, kind: str) -> Operation:
    value = f"v:{op_id}".encode() if kind == "w" else None
    return Operation(op_id=op_id, txn_id=txn, item=item, kind=OpKind(kind), update_value=value)


def txn(txn_id: str, spec: str, origin: int = 1, start: int = 0, end: int = 1,
        snapshot: tuple[str, ...] = ()) -> Transaction:
    """Builds a transaction from a spec like "r:x w:y" (one token per op)."""
    ops = []
    for i, token in enumerate(spec.split()):
        kind, item = token.split(":")
        ops.append(op(f"{txn_id}:{item}:{kind}{i}", txn_id, item, kind))
    return Transaction(
        txn_id=txn_id,
        ops=frozenset(ops),
        origin_site=origin,
        exec_start=start,
        exec_end=end,
        committed_at_start=frozenset(snapshot),
    )


def graph_of(txns: dict[str, Transaction], edges: list[tuple[str, str]],
             opg: dict[str, list[str]] | None = None,
             aborted: tuple[str, ...] = ()) -> PrecedenceGraph:
    g = PrecedenceGraph()
    for t in txns.values():
        g.ensure_vertex(t)
    for a, b in edges:
        g.add_edge(a, b)
    if opg is None:
        for t in txns.values():
            for o in t.ops:
                g.add_op(t.txn_id, o.op_id)
    else:
        for v, ops in opg.items():
            for o in ops:
                g.add_op(v, o)
    for v in aborted:
        g.set_aborted(v)
    return g


@pytest.fixture
def mk_op():
    return op


@pytest.fixture
def mk_txn():
    return txn


@pytest.fixture
def mk_graph():
    return graph_of
