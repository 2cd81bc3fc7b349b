"""Precedence graphs: the distributed knowledge each site keeps about
conflict order between transactions, plus the algebra the protocol needs.

A graph holds four things per vertex: the transaction metadata (full operation
set), the subset of its operations known to have been ordered so far, an
aborted flag set by read certification, and directed edges.  An edge (A, B)
records that some operation of A was ordered before a conflicting write of B,
i.e. A must serialize before B.

Graph union and subset are pointwise over all four components.  A transaction
is *closed* at a site once its known operation subset is complete and every
transitive predecessor is closed too; closure is what licenses a commit/abort
decision, and ``decide`` breaks any remaining cycles with a deterministic
feedback-vertex-set heuristic so every site aborts the same victims.
"""

from __future__ import annotations

import json
from typing import Iterable, Iterator

from .model import Transaction


class VertexAbsent(KeyError):
    pass


class CycleBudgetExceeded(RuntimeError):
    pass


DEFAULT_CYCLE_CAP = 10_000


class PrecedenceGraph:
    def __init__(self) -> None:
        self._meta: dict[str, Transaction] = {}
        self._succ: dict[str, set[str]] = {}
        self._pred: dict[str, set[str]] = {}
        self._opg: dict[str, set[str]] = {}
        self._aborted: set[str] = set()

    # -- construction -------------------------------------------------------

    def ensure_vertex(self, txn: Transaction) -> None:
        if txn.txn_id not in self._meta:
            self._meta[txn.txn_id] = txn
            self._succ[txn.txn_id] = set()
            self._pred[txn.txn_id] = set()
            self._opg[txn.txn_id] = set()

    def add_edge(self, src: str, dst: str) -> None:
        self._require(src)
        self._require(dst)
        self._succ[src].add(dst)
        self._pred[dst].add(src)

    def add_op(self, txn_id: str, op_id: str) -> None:
        self._require(txn_id)
        known = {o.op_id for o in self._meta[txn_id].ops}
        if op_id not in known:
            raise ValueError(f"{op_id} is not an operation of {txn_id}")
        self._opg[txn_id].add(op_id)

    def set_aborted(self, txn_id: str) -> None:
        self._require(txn_id)
        self._aborted.add(txn_id)

    def _require(self, txn_id: str) -> None:
        if txn_id not in self._meta:
            raise VertexAbsent(txn_id)

    # -- views ---------------------------------------------------------------

    def vertices(self) -> list[str]:
        return sorted(self._meta)

    def edges(self) -> list[tuple[str, str]]:
        return sorted((a, b) for a, bs in self._succ.items() for b in bs)

    def has_vertex(self, txn_id: str) -> bool:
        return txn_id in self._meta

    def meta(self, txn_id: str) -> Transaction:
        self._require(txn_id)
        return self._meta[txn_id]

    def opg(self, txn_id: str) -> frozenset[str]:
        self._require(txn_id)
        return frozenset(self._opg[txn_id])

    def is_aborted(self, txn_id: str) -> bool:
        self._require(txn_id)
        return txn_id in self._aborted

    def opg_complete(self, txn_id: str) -> bool:
        self._require(txn_id)
        return len(self._opg[txn_id]) == len(self._meta[txn_id].ops)

    def in_neighbors(self, txn_id: str) -> frozenset[str]:
        """The vertex together with its direct predecessors."""
        self._require(txn_id)
        return frozenset(self._pred[txn_id]) | {txn_id}

    def out_neighbors(self, txn_id: str) -> frozenset[str]:
        """The vertex together with its direct successors."""
        self._require(txn_id)
        return frozenset(self._succ[txn_id]) | {txn_id}

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, PrecedenceGraph):
            return NotImplemented
        return (
            set(self._meta) == set(other._meta)
            and self._succ == other._succ
            and self._opg == other._opg
            and self._aborted == other._aborted
        )

    def __repr__(self) -> str:
        return f"PrecedenceGraph(v={len(self._meta)}, e={sum(len(s) for s in self._succ.values())})"

    # -- value operations ------------------------------------------------------

    def copy(self) -> "PrecedenceGraph":
        g = PrecedenceGraph()
        g._meta = dict(self._meta)
        g._succ = {v: set(s) for v, s in self._succ.items()}
        g._pred = {v: set(p) for v, p in self._pred.items()}
        g._opg = {v: set(o) for v, o in self._opg.items()}
        g._aborted = set(self._aborted)
        return g

    def union(self, other: "PrecedenceGraph") -> "PrecedenceGraph":
        g = self.copy()
        g.merge(other)
        return g

    def merge(self, other: "PrecedenceGraph") -> None:
        """In-place union: vertex/edge union, flag OR, operation-subset union."""
        for v, txn in other._meta.items():
            if v not in self._meta:
                self._meta[v] = txn
                self._succ[v] = set()
                self._pred[v] = set()
                self._opg[v] = set()
        for v, succs in other._succ.items():
            self._succ[v] |= succs
            for w in succs:
                self._pred[w].add(v)
        for v, ops in other._opg.items():
            self._opg[v] |= ops
        self._aborted |= other._aborted

    def is_subset(self, other: "PrecedenceGraph") -> bool:
        for v in self._meta:
            if v not in other._meta:
                return False
            if not self._succ[v] <= other._succ[v]:
                return False
            if not self._opg[v] <= other._opg[v]:
                return False
            if v in self._aborted and v not in other._aborted:
                return False
        return True

    def predecessors(self, txn_id: str) -> "PrecedenceGraph":
        """Sub-graph induced by everything reachable backwards from the vertex."""
        self._require(txn_id)
        keep = {txn_id}
        stack = [txn_id]
        while stack:
            v = stack.pop()
            for p in self._pred[v]:
                if p not in keep:
                    keep.add(p)
                    stack.append(p)
        g = PrecedenceGraph()
        for v in keep:
            g._meta[v] = self._meta[v]
            g._opg[v] = set(self._opg[v])
            g._succ[v] = {w for w in self._succ[v] if w in keep}
            g._pred[v] = {w for w in self._pred[v] if w in keep}
        g._aborted = self._aborted & keep
        return g

    def predecessor_vertices(self, txn_id: str) -> frozenset[str]:
        self._require(txn_id)
        keep = {txn_id}
        stack = [txn_id]
        while stack:
            v = stack.pop()
            for p in self._pred[v]:
                if p not in keep:
                    keep.add(p)
                    stack.append(p)
        return frozenset(keep)

    def validate(self) -> None:
        """Structural sanity used on graphs received from the network."""
        for v, succs in self._succ.items():
            if v not in self._meta:
                raise ValueError(f"edge source {v} has no vertex")
            for w in succs:
                if w not in self._meta:
                    raise ValueError(f"edge target {w} has no vertex")
                if v not in self._pred[w]:
                    raise ValueError(f"edge ({v},{w}) missing reverse index")
        for v, ops in self._opg.items():
            known = {o.op_id for o in self._meta[v].ops}
            if not ops <= known:
                raise ValueError(f"operation subset of {v} contains foreign operations")
        if not self._aborted <= set(self._meta):
            raise ValueError("aborted flag on unknown vertex")

    # -- serialization ---------------------------------------------------------

    def to_canonical(self) -> dict:
        return {
            "vertices": [self._meta[v].to_dict() for v in sorted(self._meta)],
            "edges": self.edges(),
            "opg": {v: sorted(self._opg[v]) for v in sorted(self._meta)},
            "aborted": sorted(self._aborted),
        }

    def to_canonical_bytes(self) -> bytes:
        return json.dumps(self.to_canonical(), sort_keys=True, separators=(",", ":")).encode()

    @staticmethod
    def from_canonical(data: dict) -> "PrecedenceGraph":
        g = PrecedenceGraph()
        for td in data["vertices"]:
            g.ensure_vertex(Transaction.from_dict(td))
        for a, b in data["edges"]:
            g.add_edge(a, b)
        for v, ops in data["opg"].items():
            for op in ops:
                g.add_op(v, op)
        for v in data["aborted"]:
            g.set_aborted(v)
        return g

    @staticmethod
    def from_canonical_bytes(raw: bytes) -> "PrecedenceGraph":
        return PrecedenceGraph.from_canonical(json.loads(raw.decode()))


# -- cycle machinery -------------------------------------------------------


def _simple_cycle_paths(
    vertices: Iterable[str], succ: dict[str, set[str]], cap: int
) -> Iterator[tuple[str, ...]]:
    """Johnson-style enumeration of elementary cycles, smallest root first.

    Each cycle is yielded once, as the vertex path starting from its least
    vertex.  Raises CycleBudgetExceeded past ``cap`` cycles.
    """
    order = sorted(vertices)
    count = 0
    for root in order:
        # search only among vertices >= root so each cycle is found at its
        # least vertex exactly once
        allowed = {v for v in order if v >= root}
        blocked: set[str] = set()
        block_map: dict[str, set[str]] = {}
        path: list[str] = []

        def unblock(v: str) -> None:
            stack = [v]
            while stack:
                u = stack.pop()
                if u in blocked:
                    blocked.discard(u)
                    stack.extend(block_map.pop(u, ()))

        def circuit(v: str) -> Iterator[tuple[str, ...]]:
            nonlocal count
            found = False
            path.append(v)
            blocked.add(v)
            for w in sorted(succ.get(v, ())):
                if w not in allowed:
                    continue
                if w == root:
                    count += 1
                    if count > cap:
                        raise CycleBudgetExceeded(f"more than {cap} elementary cycles")
                    yield tuple(path)
                    found = True
                elif w not in blocked:
                    for cyc in circuit(w):
                        yield cyc
                        found = True
            if found:
                unblock(v)
            else:
                for w in sorted(succ.get(v, ())):
                    if w in allowed:
                        block_map.setdefault(w, set()).add(v)
            path.pop()

        yield from circuit(root)


def elementary_cycles(g: PrecedenceGraph, cap: int = DEFAULT_CYCLE_CAP) -> list[frozenset[str]]:
    """All elementary cycles of the graph, each as its vertex set.

    Distinct cycles over the same vertices (both orientations of a triangle,
    say) are reported separately, so the length of the result is the number
    of elementary cycles.
    """
    succ = {v: set(s) for v, s in g._succ.items()}
    return [frozenset(path) for path in _simple_cycle_paths(g.vertices(), succ, cap)]


def _is_acyclic(vertices: set[str], succ: dict[str, set[str]]) -> bool:
    indeg = {v: 0 for v in vertices}
    for v in vertices:
        for w in succ.get(v, ()):
            if w in indeg:
                indeg[w] += 1
    ready = [v for v, d in indeg.items() if d == 0]
    seen = 0
    while ready:
        v = ready.pop()
        seen += 1
        for w in succ.get(v, ()):
            if w in indeg:
                indeg[w] -= 1
                if indeg[w] == 0:
                    ready.append(w)
    return seen == len(vertices)


def _break_cycles_adj(
    vertices: set[str], succ: dict[str, set[str]], cap: int
) -> frozenset[str]:
    """Greedy feedback vertex set: repeatedly drop the vertex on the most
    remaining cycles (ties to the smallest id) until nothing cyclic is left.
    Pure function of the graph, so every site picks the same victims."""
    remaining = set(vertices)
    adj = {v: set(w for w in succ.get(v, ()) if w in remaining) for v in remaining}
    removed: set[str] = set()
    while not _is_acyclic(remaining, adj):
        participation: dict[str, int] = {}
        for path in _simple_cycle_paths(remaining, adj, cap):
            for v in path:
                participation[v] = participation.get(v, 0) + 1
        victim = min(participation, key=lambda v: (-participation[v], v))
        removed.add(victim)
        remaining.discard(victim)
        adj.pop(victim, None)
        for ws in adj.values():
            ws.discard(victim)
    return frozenset(removed)


def break_cycles(g: PrecedenceGraph, cap: int = DEFAULT_CYCLE_CAP) -> frozenset[str]:
    """Deterministic feedback vertex set of the graph."""
    succ = {v: set(s) for v, s in g._succ.items()}
    return _break_cycles_adj(set(g.vertices()), succ, cap)


def decide(txn_id: str, g: PrecedenceGraph, cap: int = DEFAULT_CYCLE_CAP) -> bool:
    """Commit/abort rule over the transaction's predecessor graph.

    Builds the union of all elementary cycles whose members are all
    unflagged, then returns False exactly when the transaction lands in that
    union's feedback vertex set.
    """
    succ = {v: set(s) for v, s in g._succ.items()}
    cyc_vertices: set[str] = set()
    cyc_succ: dict[str, set[str]] = {}
    for path in _simple_cycle_paths(g.vertices(), succ, cap):
        if any(v in g._aborted for v in path):
            continue
        for i, v in enumerate(path):
            w = path[(i + 1) % len(path)]
            cyc_vertices.add(v)
            cyc_vertices.add(w)
            cyc_succ.setdefault(v, set()).add(w)
    return txn_id not in _break_cycles_adj(cyc_vertices, cyc_succ, cap)


# -- closure -----------------------------------------------------------------


def closed_set(g: PrecedenceGraph) -> frozenset[str]:
    """Vertices closed in the graph, as the greatest fixed point.

    Start by marking every vertex with an incomplete operation subset as
    unclosed, then push unclosedness forward along edges until stable; the
    rest are closed.  Mutually dependent complete vertices therefore count as
    closed, which is what lets conflicting cycles ever reach a decision.
    """
    unclosed = {v for v in g._meta if not g.opg_complete(v)}
    frontier = list(unclosed)
    while frontier:
        v = frontier.pop()
        for w in g._succ[v]:
            if w not in unclosed:
                unclosed.add(w)
                frontier.append(w)
    return frozenset(v for v in g._meta if v not in unclosed)


def is_closed(txn_id: str, g: PrecedenceGraph) -> bool:
    if not g.has_vertex(txn_id):
        raise VertexAbsent(txn_id)
    return txn_id in closed_set(g)
