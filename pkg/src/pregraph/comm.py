"""Simulated group communication: uniform reliable multicast, per-item uniform
total order multicast, and the eventual weak leader service.

The primitives run inside the single-threaded simulator.  Uniformity under
crashes falls out of the construction: a reliable multicast schedules every
member's delivery atomically at send time, and total order delivery is driven
by a per-group sequencer that survives crashes (it stands in for a consensus
box inside each replica group, which the model assumes is available).  Links
never lose messages; a crashed site simply stops processing.

Message and delay accounting follow a fixed cost model: two hops per reliable
multicast delivery, three per total-order delivery (two when the weak leader
is colocated with the ordering leader), one per point-to-point graph message.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .model import DataItemId, Operation, ReplicationMap, SiteId, Transaction

URM_HOPS = 2
TOM_HOPS = 3
TOM_HOPS_COLOCATED = 2
P2P_HOPS = 1


@dataclass
class _GroupChannel:
    """Sequencer state for one data item's replica group."""

    members: frozenset[SiteId]
    next_seq: int = 0
    # per-member in-order release
    cursor: dict[SiteId, int] = field(default_factory=dict)
    holdback: dict[SiteId, dict[int, tuple[Operation, Transaction]]] = field(default_factory=dict)


class Network:
    """Message fabric shared by all sites of one simulation."""

    def __init__(self, engine, rmap: ReplicationMap, colocate_leaders: bool = False) -> None:
        self.engine = engine
        self.rmap = rmap
        self.colocate_leaders = colocate_leaders
        self._groups: dict[DataItemId, _GroupChannel] = {
            item: _GroupChannel(members=reps) for item, reps in sorted(rmap.placement.items())
        }
        self._msg_counter = 0
        self._tom_attempts: dict[str, int] = {}

    def _next_msg_id(self) -> int:
        self._msg_counter += 1
        return self._msg_counter

    # -- uniform reliable multicast ----------------------------------------

    def _delay(self, sender: SiteId, member: SiteId, hop_count: int) -> int:
        # a site talking to itself crosses no network
        return 0 if member == sender else self.engine.hops(hop_count)

    def r_multicast(self, sender: SiteId, group: frozenset[SiteId], txn: Transaction) -> None:
        msg_id = self._next_msg_id()
        self.engine.trace.emit(
            self.engine.now, sender, "r_mcast",
            msg=msg_id, txn=txn.txn_id, group=sorted(group),
            ops=[[o.op_id, o.item, o.kind.value] for o in txn.sorted_ops()],
        )
        for member in sorted(group):
            delay = self._delay(sender, member, URM_HOPS)
            self.engine.schedule(delay, member, lambda m=member, t=txn: self._r_deliver(m, t))

    def _r_deliver(self, site: SiteId, txn: Transaction) -> None:
        self.engine.replicas[site].on_r_deliver(txn)

    # -- uniform total order multicast --------------------------------------

    def tom_attempt_count(self, op_id: str) -> int:
        return self._tom_attempts.get(op_id, 0)

    def to_multicast(self, sender: SiteId, op: Operation, txn: Transaction) -> None:
        group = self._groups[op.item]
        attempt = self._tom_attempts.get(op.op_id, 0) + 1
        self._tom_attempts[op.op_id] = attempt
        seq = group.next_seq
        group.next_seq += 1
        self.engine.trace.emit(
            self.engine.now, sender, "to_mcast",
            msg=self._next_msg_id(), op=op.op_id, txn=op.txn_id, item=op.item,
            group=sorted(group.members), attempt=attempt,
        )
        hops = TOM_HOPS_COLOCATED if self.colocate_leaders else TOM_HOPS
        for member in sorted(group.members):
            delay = self._delay(sender, member, hops)
            self.engine.schedule(
                delay, member,
                lambda m=member, s=seq, o=op, t=txn: self._tom_arrive(m, s, o, t),
            )

    def _tom_arrive(self, site: SiteId, seq: int, op: Operation, txn: Transaction) -> None:
        group = self._groups[op.item]
        buffered = group.holdback.setdefault(site, {})
        buffered[seq] = (op, txn)
        cursor = group.cursor.setdefault(site, 0)
        while cursor in buffered:
            o, t = buffered.pop(cursor)
            cursor += 1
            group.cursor[site] = cursor
            self.engine.replicas[site].on_to_deliver(o, t)

    # -- point-to-point graph transfer ---------------------------------------

    def send_graph(self, sender: SiteId, dest: SiteId, subject: str, graph, covered: frozenset[SiteId]) -> None:
        self.engine.trace.emit(
            self.engine.now, sender, "graph_send",
            msg=self._next_msg_id(), dst=dest, txn=subject,
            nv=len(graph.vertices()), ne=len(graph.edges()),
        )
        delay = self.engine.hops(P2P_HOPS)
        self.engine.schedule(
            delay, dest,
            lambda d=dest, s=sender, g=graph, c=covered, subj=subject: self.engine.replicas[d].on_receive_graph(g, c, s, subj),
        )


class WeakLeaderService:
    """Per-group leader oracle.

    ``self`` strategy: every caller elects itself (trivially correct).
    ``min-alive`` strategy: the smallest group member not currently suspected
    of having crashed; suspicion lags a crash by a fixed delay, after which it
    is permanent, so the answer stabilizes on the smallest correct member.
    """

    def __init__(self, engine, strategy: str = "min-alive") -> None:
        if strategy not in ("self", "min-alive"):
            raise ValueError(f"unknown leader strategy {strategy!r}")
        self.engine = engine
        self.strategy = strategy

    def leader(self, group: frozenset[SiteId], caller: SiteId) -> SiteId:
        if caller not in group:
            raise ValueError(f"site {caller} is not a member of {sorted(group)}")
        if self.strategy == "self":
            return caller
        alive = [m for m in sorted(group) if m not in self.engine.suspected]
        return alive[0] if alive else min(group)
