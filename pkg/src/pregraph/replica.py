"""Per-site protocol state machine.

Five phases drive each update transaction: local execution under two-phase
locking (writes buffered, never applied), reliable multicast submission to
the replicas of its items, per-item total-order certification, precedence
graph closure by gossiping predecessor sub-graphs, and finally a local,
deterministic commit/abort decision once the transaction is closed.

Two certification rules run at total-order delivery time:

* a read is flagged (its transaction will abort) when a conflicting write of
  a concurrent transaction was delivered before it; the rule depends only on
  the item's delivery prefix and on static transaction metadata, so every
  replica of the item computes the same flag and closure carries it to every
  decider before any decision uses it;
* a write takes its intention-to-write lock by force, evicting executing
  transactions that hold the item, and collects one precedence edge from
  every earlier conflicting operation.

Decisions apply update values in per-item delivery order, and a site defers
deciding a transaction until every committing predecessor with writes stored
here has been applied here, which keeps each site's database a consistent
prefix of the equivalent serial order.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum

from . import graph as pgraph
from .locks import LockEntry, LockMode, LockTable
from .model import (
    DataItemId,
    Operation,
    OpKind,
    ReplicationMap,
    SiteId,
    Transaction,
    TransactionId,
    concurrent,
)


class UnreplicatedItem(Exception):
    pass


class ExecStatus(Enum):
    RUNNING = "running"
    WAITING = "waiting"


@dataclass
class ExecContext:
    """One transaction's initial execution at its origin site."""

    txn_id: TransactionId
    plan: list[Operation]
    start_time: int
    snapshot: frozenset[TransactionId]
    idx: int = 0
    status: ExecStatus = ExecStatus.RUNNING
    write_buffer: dict[DataItemId, bytes] = field(default_factory=dict)

    @property
    def current_op(self) -> Operation:
        return self.plan[self.idx]

    @property
    def done(self) -> bool:
        return self.idx >= len(self.plan)


class Replica:
    def __init__(self, engine, site: SiteId, rmap: ReplicationMap, cycle_cap: int) -> None:
        self.engine = engine
        self.site = site
        self.rmap = rmap
        self.cycle_cap = cycle_cap
        self.local_items = rmap.items_at(site)
        self.db: dict[DataItemId, tuple[bytes | None, TransactionId | None]] = {
            item: (None, None) for item in sorted(self.local_items)
        }
        self.locks = LockTable()
        self.graph = pgraph.PrecedenceGraph()
        self.pending: dict[str, Operation] = {}
        self.delivered: set[str] = set()
        self.dlog: dict[DataItemId, list[Operation]] = {i: [] for i in sorted(self.local_items)}
        self.committed: set[TransactionId] = set()
        self.aborted: set[TransactionId] = set()
        self.decided: dict[TransactionId, str] = {}
        self.executing: dict[TransactionId, ExecContext] = {}
        self.txn_index: dict[TransactionId, Transaction] = {}
        self._outcomes: dict[TransactionId, bool] = {}
        self._tom_epoch: dict[str, int] = {}

    # -- helpers -------------------------------------------------------------

    def _emit(self, kind: str, **payload) -> None:
        self.engine.trace.emit(self.engine.now, self.site, kind, **payload)

    @property
    def network(self):
        return self.engine.network

    # -- initial execution ------------------------------------------------------

    def start_transaction(self, txn_id: TransactionId, ops: list[Operation]) -> None:
        for op in ops:
            if op.item not in self.local_items:
                raise UnreplicatedItem(f"site {self.site} does not replicate {op.item}")
        # canonical acquisition order: by item, the write first when a
        # transaction both writes and reads one item; a global order means
        # local executions can never deadlock against each other
        plan = sorted(ops, key=lambda o: (o.item, o.is_read, o.op_id))
        ctx = ExecContext(
            txn_id=txn_id,
            plan=plan,
            start_time=self.engine.now,
            snapshot=frozenset(self.committed),
        )
        self.executing[txn_id] = ctx
        self._exec_step(ctx)

    def _continue(self, txn_id: TransactionId) -> None:
        ctx = self.executing.get(txn_id)
        if ctx is not None and ctx.status is ExecStatus.RUNNING:
            self._exec_step(ctx)

    def _exec_step(self, ctx: ExecContext) -> None:
        if ctx.done:
            self._finish_execution(ctx)
            return
        op = ctx.current_op
        if op.is_read and op.item in ctx.write_buffer:
            # reading our own buffered write takes no lock
            self._emit("txn_read", txn=ctx.txn_id, op=op.op_id, item=op.item, writer=ctx.txn_id)
            self._advance(ctx)
            return
        if self.locks.holds(op.item, op.op_id):
            self._perform(ctx, op)
            self._advance(ctx)
            return
        mode = LockMode.W if op.is_write else LockMode.R
        if self.locks.request(op.item, op.op_id, ctx.txn_id, mode):
            self._emit("lock_grant", item=op.item, op=op.op_id, txn=ctx.txn_id,
                       mode=mode.value, how="request")
            self._perform(ctx, op)
            self._advance(ctx)
        else:
            self._emit("lock_queue", item=op.item, op=op.op_id, txn=ctx.txn_id, mode=mode.value)
            ctx.status = ExecStatus.WAITING

    def _perform(self, ctx: ExecContext, op: Operation) -> None:
        if op.is_read:
            _, writer = self.db[op.item]
            self._emit("txn_read", txn=ctx.txn_id, op=op.op_id, item=op.item, writer=writer)
        else:
            ctx.write_buffer[op.item] = op.update_value

    def _advance(self, ctx: ExecContext) -> None:
        ctx.idx += 1
        self.engine.schedule(1, self.site, lambda t=ctx.txn_id: self._continue(t))

    def _finish_execution(self, ctx: ExecContext) -> None:
        granted: list[LockEntry] = []
        for op in ctx.plan:
            if op.is_read and self.locks.holds(op.item, op.op_id):
                granted += self.locks.release(op.item, op.op_id)
            elif op.is_write:
                granted += self.locks.convert_w_to_iw(op.item, op.op_id)
        del self.executing[ctx.txn_id]
        writes = [o for o in ctx.plan if o.is_write]
        if not writes:
            self._emit("txn_commit", txn=ctx.txn_id, read_only=True)
        else:
            txn = Transaction(
                txn_id=ctx.txn_id,
                ops=frozenset(ctx.plan),
                origin_site=self.site,
                exec_start=ctx.start_time,
                exec_end=self.engine.now,
                committed_at_start=ctx.snapshot,
            )
            self.network.r_multicast(self.site, self.rmap.txn_replicas(txn), txn)
        self._wake(granted)

    def _wake(self, granted: list[LockEntry]) -> None:
        for entry in granted:
            ctx = self.executing.get(entry.txn_id)
            if ctx is None or ctx.status is not ExecStatus.WAITING:
                continue
            if not ctx.done and ctx.current_op.op_id == entry.op_id:
                self._emit("lock_grant", item=ctx.current_op.item, op=entry.op_id,
                           txn=entry.txn_id, mode=entry.mode.value, how="drain")
                ctx.status = ExecStatus.RUNNING
                self.engine.schedule(1, self.site, lambda t=entry.txn_id: self._continue(t))

    def _abort_executing(self, txn_id: TransactionId, evicted_while_queued: bool) -> None:
        ctx = self.executing.pop(txn_id, None)
        if ctx is None:
            return
        self._emit("force_lock_abort", victim=txn_id, queued=evicted_while_queued)
        self._emit("txn_abort", txn=txn_id, reason="force_lock", local=True)
        self._wake(self.locks.release_transaction(txn_id))

    # -- submission --------------------------------------------------------------

    def on_r_deliver(self, txn: Transaction) -> None:
        self._emit("r_deliver", txn=txn.txn_id)
        self.txn_index[txn.txn_id] = txn
        for op in txn.sorted_ops():
            if self.site in self.rmap.replicas(op.item) and op.op_id not in self.delivered:
                self.pending[op.op_id] = op
        self.leader_pump()

    def leader_pump(self) -> None:
        """Total-order multicast every pending operation this site currently
        leads; re-issued once per leadership epoch so a dead leader's work is
        redone by its successor (replicas drop duplicate deliveries)."""
        epoch = self.engine.leadership_epoch
        for op_id in sorted(self.pending):
            op = self.pending[op_id]
            group = self.rmap.replicas(op.item)
            if self.engine.wleader.leader(group, self.site) != self.site:
                continue
            if self._tom_epoch.get(op_id) == epoch:
                continue
            self._tom_epoch[op_id] = epoch
            self.network.to_multicast(self.site, op, self.txn_index[op.txn_id])

    # -- certification -------------------------------------------------------------

    def on_to_deliver(self, op: Operation, txn: Transaction) -> None:
        if op.op_id in self.delivered:
            self._emit("to_deliver", op=op.op_id, txn=op.txn_id, item=op.item, dup=True)
            return
        self._emit("to_deliver", op=op.op_id, txn=op.txn_id, item=op.item, dup=False)
        self.delivered.add(op.op_id)
        self.pending.pop(op.op_id, None)
        self.graph.ensure_vertex(txn)
        self.graph.add_op(txn.txn_id, op.op_id)
        log = self.dlog[op.item]
        if op.is_read:
            if not self.graph.is_aborted(txn.txn_id):
                for prior in log:
                    if prior.is_write and prior.txn_id != txn.txn_id and concurrent(
                        self.graph.meta(prior.txn_id), txn
                    ):
                        self.graph.set_aborted(txn.txn_id)
                        self._emit("read_flagged", txn=txn.txn_id, op=op.op_id,
                                   conflicting_write=prior.op_id)
                        break
        else:
            holders, queued = self.locks.force_write_lock(op.item, op.op_id, txn.txn_id)
            self._emit("lock_grant", item=op.item, op=op.op_id, txn=txn.txn_id,
                       mode=LockMode.IW.value, how="force")
            for entry in holders:
                self._abort_executing(entry.txn_id, evicted_while_queued=False)
            for entry in queued:
                self._abort_executing(entry.txn_id, evicted_while_queued=True)
            for prior in log:
                if prior.txn_id != txn.txn_id:
                    self.graph.add_edge(prior.txn_id, txn.txn_id)
        log.append(op)
        self._send_neighborhood(txn.txn_id)
        self.try_commit()

    def _graph_destinations(self, txn_id: TransactionId) -> frozenset[SiteId]:
        sites: set[SiteId] = set()
        for neighbor in self.graph.out_neighbors(txn_id):
            sites |= self.rmap.txn_replicas(self.graph.meta(neighbor))
        return frozenset(sites)

    def _send_neighborhood(self, txn_id: TransactionId, exclude: frozenset[SiteId] = frozenset()) -> None:
        dests = self._graph_destinations(txn_id) - exclude - {self.site}
        if not dests:
            return
        snapshot = self.graph.predecessors(txn_id)
        stamp = frozenset(dests) | {self.site}
        for dest in sorted(dests):
            self.network.send_graph(self.site, dest, txn_id, snapshot, stamp)

    # -- closure ---------------------------------------------------------------------

    def on_receive_graph(self, incoming: pgraph.PrecedenceGraph, covered: frozenset[SiteId],
                         sender: SiteId, subject: TransactionId) -> None:
        try:
            incoming.validate()
        except ValueError as exc:
            self._emit("protocol_error", src=sender, error=str(exc))
            return
        touched: set[TransactionId] = set()
        for v in incoming.vertices():
            if not self.graph.has_vertex(v):
                touched.add(v)
                continue
            if not incoming.opg(v) <= self.graph.opg(v):
                touched.add(v)
            if incoming.is_aborted(v) and not self.graph.is_aborted(v):
                touched.add(v)
        known_edges = set(self.graph.edges())
        for a, b in incoming.edges():
            if (a, b) not in known_edges:
                touched.add(b)
        self._emit("graph_recv", src=sender, txn=subject, grew=bool(touched))
        if not touched:
            return
        self.graph.merge(incoming)
        # every vertex forward-reachable from the new information now has a
        # larger predecessor graph; push it toward that vertex's own replicas
        # unless the incoming message already covered them
        affected = set(touched)
        frontier = list(touched)
        while frontier:
            v = frontier.pop()
            for w in self.graph.out_neighbors(v):
                if w not in affected:
                    affected.add(w)
                    frontier.append(w)
        for v in sorted(affected):
            self._send_neighborhood(v, exclude=covered)
        self.try_commit()

    # -- commitment ----------------------------------------------------------------

    def _holds_iw_locks(self, txn: Transaction) -> bool:
        for op in txn.write_ops:
            if op.item in self.local_items and not self.locks.holds(op.item, op.op_id, LockMode.IW):
                return False
        return True

    def _outcome(self, txn_id: TransactionId) -> bool:
        """Deterministic commit verdict, valid once the vertex is closed."""
        if txn_id not in self._outcomes:
            if self.graph.is_aborted(txn_id):
                self._outcomes[txn_id] = False
            else:
                preds = self.graph.predecessors(txn_id)
                self._outcomes[txn_id] = pgraph.decide(txn_id, preds, self.cycle_cap)
        return self._outcomes[txn_id]

    def _predecessors_applied(self, txn_id: TransactionId) -> bool:
        for u in sorted(self.graph.predecessor_vertices(txn_id) - {txn_id}):
            if not self._outcome(u):
                continue
            meta = self.graph.meta(u)
            if self.site in self.rmap.write_replicas(meta) and u not in self.decided:
                return False
        return True

    def try_commit(self) -> None:
        progress = True
        while progress:
            progress = False
            closed = pgraph.closed_set(self.graph)
            for txn_id in sorted(closed):
                if txn_id in self.decided:
                    continue
                meta = self.graph.meta(txn_id)
                if self.site not in self.rmap.write_replicas(meta):
                    continue
                if not self._holds_iw_locks(meta):
                    continue
                if not self._predecessors_applied(txn_id):
                    continue
                if self._outcome(txn_id):
                    self._commit(txn_id, meta)
                else:
                    reason = "outdated_read" if self.graph.is_aborted(txn_id) else "cycle_break"
                    self._abort(txn_id, meta, reason)
                progress = True

    def _commit(self, txn_id: TransactionId, meta: Transaction) -> None:
        for op in sorted(meta.write_ops, key=lambda o: (o.item, o.op_id)):
            if op.item not in self.local_items:
                continue
            superseded = self._superseding_writer(op)
            if superseded is not None:
                self._emit("value_skipped", txn=txn_id, op=op.op_id, item=op.item,
                           superseded_by=superseded)
            else:
                self.db[op.item] = (op.update_value, txn_id)
                self._emit("value_applied", txn=txn_id, op=op.op_id, item=op.item)
        self.committed.add(txn_id)
        self.decided[txn_id] = "commit"
        self._emit("txn_commit", txn=txn_id, read_only=False)
        self._wake(self.locks.release_transaction(txn_id))

    def _superseding_writer(self, op: Operation) -> TransactionId | None:
        # a later committed write in the item's delivery order wins; applying
        # over it would run the version order backwards
        log = self.dlog[op.item]
        try:
            at = next(i for i, o in enumerate(log) if o.op_id == op.op_id)
        except StopIteration:
            return None
        for later in log[at + 1:]:
            if later.is_write and later.txn_id in self.committed:
                return later.txn_id
        return None

    def _abort(self, txn_id: TransactionId, meta: Transaction, reason: str) -> None:
        self.aborted.add(txn_id)
        self.decided[txn_id] = "abort"
        self._emit("txn_abort", txn=txn_id, reason=reason, local=False)
        for op_id in [o for o in sorted(self.pending) if self.pending[o].txn_id == txn_id]:
            del self.pending[op_id]
        self._wake(self.locks.release_transaction(txn_id))

    # -- end of run -----------------------------------------------------------------

    def final_snapshot(self) -> dict:
        return {
            "committed": sorted(self.committed),
            "aborted": sorted(self.aborted),
            "db": {item: writer for item, (_, writer) in sorted(self.db.items())},
            "graph": self.graph.to_canonical(),
        }
