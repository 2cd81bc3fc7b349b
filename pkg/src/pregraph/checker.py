"""Post-hoc trace oracle.

Safety is judged from the trace alone: committed writes are ordered per item
by their total-order delivery positions (every replica must agree), a
multiversion serialization graph is built over committed transactions from
read-from and version-order constraints, and the run is serializable exactly
when that graph is acyclic.  None of this consults the protocol's own
precedence graphs.

Liveness and agreement checks do look at protocol internals (final graph
snapshots) because that is what they are about: every submitted transaction
decided at every correct replica of its write set, identical outcomes
everywhere, total-order delivery at every correct replica, closure of every
final graph, and every edge justified by some item's delivery order.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from . import graph as pgraph
from .trace import Trace

INITIAL_VERSION = None  # writer id of the pre-run version of every item


@dataclass
class Verdict:
    name: str
    failures: list[str] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return not self.failures

    def fail(self, message: str) -> None:
        self.failures.append(message)

    def render(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        lines = [f"[{status}] {self.name}"]
        lines += [f"    - {f}" for f in self.failures]
        return "\n".join(lines)


class TraceIndex:
    """Everything the verdicts need, pulled out of the event stream once."""

    def __init__(self, trace: Trace) -> None:
        self.trace = trace
        meta = trace.first("meta")
        if meta is None:
            raise ValueError("trace has no meta record")
        self.scenario = meta["scenario"]
        self.placement: dict[str, list[int]] = {
            item: list(sites) for item, sites in self.scenario["placement"].items()
        }
        self.sites: list[int] = list(range(1, self.scenario["n_sites"] + 1))
        self.crashed: set[int] = {e["site"] for e in trace.by_kind("crash")}
        self.correct: list[int] = [s for s in self.sites if s not in self.crashed]

        # submitted transactions and their operations
        self.submitted: dict[str, dict] = {}
        for e in trace.by_kind("r_mcast"):
            ops = {op_id: (item, kind) for op_id, item, kind in e["ops"]}
            self.submitted[e["txn"]] = {"ops": ops, "sent_at": e["t"], "group": e["group"]}
        self.r_delivers: dict[str, list[int]] = {}
        for e in trace.by_kind("r_deliver"):
            self.r_delivers.setdefault(e["txn"], []).append(e["site"])

        # first total-order deliveries, in order, per site and item
        self.dlog: dict[int, dict[str, list[str]]] = {}
        self.delivered_ops: dict[str, dict] = {}
        for e in trace.by_kind("to_deliver"):
            if e["dup"]:
                continue
            self.dlog.setdefault(e["site"], {}).setdefault(e["item"], []).append(e["op"])
            self.delivered_ops.setdefault(e["op"], {"txn": e["txn"], "item": e["item"], "sites": []})
            self.delivered_ops[e["op"]]["sites"].append(e["site"])

        # per-site decisions for replicated transactions
        self.decisions: dict[str, dict[int, str]] = {}
        self.read_only_committed: set[str] = set()
        for e in trace.by_kind("txn_commit"):
            if e.get("read_only"):
                self.read_only_committed.add(e["txn"])
            else:
                self.decisions.setdefault(e["txn"], {})[e["site"]] = "commit"
        for e in trace.by_kind("txn_abort"):
            if not e.get("local"):
                self.decisions.setdefault(e["txn"], {})[e["site"]] = "abort"

        self.reads: list[dict] = list(trace.by_kind("txn_read"))
        self.finals: dict[int, dict] = {e["site"]: e for e in trace.by_kind("site_final")}

    def committed_updates(self) -> set[str]:
        return {t for t, by_site in self.decisions.items() if "commit" in by_site.values()}

    def op_kind(self, txn: str, op_id: str) -> str | None:
        info = self.submitted.get(txn)
        if info and op_id in info["ops"]:
            return info["ops"][op_id][1]
        return None


# -- version order ------------------------------------------------------------


def build_version_order(index: TraceIndex) -> tuple[dict[str, list[str]], Verdict]:
    """Per item: committed writer transactions by first delivery position.

    Also checks that every pair of replicas delivered any two operations of
    one item in the same relative order, committed or not.
    """
    verdict = Verdict("version order agreement")
    order: dict[str, list[str]] = {}
    committed = index.committed_updates()
    for item, replicas in sorted(index.placement.items()):
        sequences = {
            site: index.dlog.get(site, {}).get(item, []) for site in replicas
        }
        # pairwise relative-order agreement over common operations
        for a in replicas:
            for b in replicas:
                if a >= b:
                    continue
                seq_a, seq_b = sequences[a], sequences[b]
                common = set(seq_a) & set(seq_b)
                proj_a = [o for o in seq_a if o in common]
                proj_b = [o for o in seq_b if o in common]
                if proj_a != proj_b:
                    verdict.fail(
                        f"replicas {a} and {b} deliver {item} in different orders: "
                        f"{proj_a} vs {proj_b}"
                    )
        reference = max(sequences.values(), key=len, default=[])
        writers: list[str] = []
        for op_id in reference:
            info = index.delivered_ops.get(op_id)
            if info is None:
                continue
            txn = info["txn"]
            kind = index.op_kind(txn, op_id)
            if kind == "w" and txn in committed and txn not in writers:
                writers.append(txn)
        order[item] = writers
    return order, verdict


# -- multiversion serialization graph ---------------------------------------------


@dataclass
class MVSG:
    vertices: set[str]
    edges: set[tuple[str, str, str]]  # (src, dst, tag)

    def succ(self) -> dict[str, set[str]]:
        out: dict[str, set[str]] = {v: set() for v in self.vertices}
        for a, b, _ in self.edges:
            out.setdefault(a, set()).add(b)
        return out

    def find_cycle(self) -> list[str] | None:
        succ = self.succ()
        color: dict[str, int] = {}
        stack: list[str] = []

        def visit(v: str) -> list[str] | None:
            color[v] = 1
            stack.append(v)
            for w in sorted(succ.get(v, ())):
                if color.get(w, 0) == 1:
                    return stack[stack.index(w):] + [w]
                if color.get(w, 0) == 0:
                    found = visit(w)
                    if found:
                        return found
            color[v] = 2
            stack.pop()
            return None

        for v in sorted(self.vertices):
            if color.get(v, 0) == 0:
                found = visit(v)
                if found:
                    return found
        return None


def build_mvsg(index: TraceIndex, version_order: dict[str, list[str]]) -> tuple[MVSG, Verdict]:
    verdict = Verdict("read consistency")
    committed = index.committed_updates()
    vertices = set(committed) | set(index.read_only_committed)

    # which version each committed transaction read, per read operation
    reads: list[tuple[str, str, str | None]] = []  # (reader, item, writer)
    for e in index.reads:
        reader = e["txn"]
        if reader not in vertices:
            continue
        writer = e["writer"]
        if writer == reader:
            continue  # own buffered write
        if writer is not None and writer not in committed:
            verdict.fail(
                f"{reader} read a version of {e['item']} written by {writer}, "
                f"which never committed"
            )
            continue
        reads.append((reader, e["item"], writer))

    edges: set[tuple[str, str, str]] = set()
    for reader, item, writer in reads:
        if writer is not None:
            edges.add((writer, reader, "read-from"))
        versions = [INITIAL_VERSION] + version_order.get(item, [])
        if writer not in versions:
            verdict.fail(f"{reader} read unknown version of {item} by {writer}")
            continue
        at = versions.index(writer)
        for later in versions[at + 1:]:
            if later != reader:
                edges.add((reader, later, "version-order"))
    for item, writers in sorted(version_order.items()):
        for i, earlier in enumerate(writers):
            for later in writers[i + 1:]:
                edges.add((earlier, later, "version-order"))
    return MVSG(vertices=vertices, edges=edges), verdict


def assert_serializable(mvsg: MVSG) -> Verdict:
    verdict = Verdict("serializability (multiversion graph acyclic)")
    cycle = mvsg.find_cycle()
    if cycle:
        verdict.fail("cycle " + " -> ".join(cycle))
    return verdict


# -- liveness, agreement, communication contracts ------------------------------------


def assert_liveness_and_agreement(index: TraceIndex) -> Verdict:
    verdict = Verdict("liveness and decision agreement")

    # uniform reliable multicast: integrity + agreement over correct members
    for txn, sites in index.r_delivers.items():
        if txn not in index.submitted:
            verdict.fail(f"{txn} delivered without a matching reliable multicast")
        if len(sites) != len(set(sites)):
            verdict.fail(f"{txn} delivered more than once at one site")
    for txn, info in index.submitted.items():
        for member in info["group"]:
            if member in index.crashed:
                continue
            if member not in index.r_delivers.get(txn, []):
                verdict.fail(f"correct site {member} never saw the submission of {txn}")

    # every operation delivered at every correct replica of its item
    for txn, info in index.submitted.items():
        for op_id, (item, _) in sorted(info["ops"].items()):
            for site in index.placement[item]:
                if site in index.crashed:
                    continue
                if site not in index.delivered_ops.get(op_id, {}).get("sites", []):
                    verdict.fail(f"correct replica {site} never certified {op_id}")

    # decisions present and identical at every correct replica of the write set
    for txn, info in index.submitted.items():
        write_sites: set[int] = set()
        for op_id, (item, kind) in info["ops"].items():
            if kind == "w":
                write_sites |= set(index.placement[item])
        by_site = index.decisions.get(txn, {})
        for site in sorted(write_sites):
            if site in index.crashed:
                continue
            if site not in by_site:
                verdict.fail(f"correct site {site} never decided {txn}")
        outcomes = set(by_site.values())
        if len(outcomes) > 1:
            detail = ", ".join(f"{s}:{o}" for s, o in sorted(by_site.items()))
            verdict.fail(f"sites disagree on {txn}: {detail}")

    # closure of every final graph, and edge justification from delivery order
    global_order: dict[str, list[str]] = {}
    for site, per_item in index.dlog.items():
        for item, seq in per_item.items():
            if len(seq) > len(global_order.get(item, [])):
                global_order[item] = seq
    for site, final in sorted(index.finals.items()):
        g = pgraph.PrecedenceGraph.from_canonical(final["graph"])
        closed = pgraph.closed_set(g)
        for v in g.vertices():
            if v not in closed:
                verdict.fail(f"{v} never closed at correct site {site}")
        for a, b in g.edges():
            if not _edge_justified(g, a, b, global_order):
                verdict.fail(f"edge ({a},{b}) at site {site} matches no delivery order")
    return verdict


def _edge_justified(g: pgraph.PrecedenceGraph, a: str, b: str,
                    order: dict[str, list[str]]) -> bool:
    ops_a = {o.op_id: o for o in g.meta(a).ops}
    ops_b = {o.op_id: o for o in g.meta(b).ops}
    for ob in ops_b.values():
        if not ob.is_write:
            continue
        seq = order.get(ob.item, [])
        if ob.op_id not in seq:
            continue
        pos_b = seq.index(ob.op_id)
        for oa in ops_a.values():
            if oa.item == ob.item and oa.op_id in seq and seq.index(oa.op_id) < pos_b:
                return True
    return False


# -- full check -----------------------------------------------------------------------


@dataclass
class CheckReport:
    verdicts: list[Verdict]

    @property
    def passed(self) -> bool:
        return all(v.passed for v in self.verdicts)

    def render(self) -> str:
        lines = [v.render() for v in self.verdicts]
        lines.append("overall: " + ("PASS" if self.passed else "FAIL"))
        return "\n".join(lines)


def check_trace(trace: Trace) -> CheckReport:
    index = TraceIndex(trace)
    version_order, vo_verdict = build_version_order(index)
    mvsg, read_verdict = build_mvsg(index, version_order)
    return CheckReport(
        verdicts=[
            vo_verdict,
            read_verdict,
            assert_serializable(mvsg),
            assert_liveness_and_agreement(index),
        ]
    )


# -- message and delay accounting ----------------------------------------------------


@dataclass
class TxnMetrics:
    txn: str
    urm: int = 0
    tom_first: int = 0
    tom_retry: int = 0
    graph: int = 0
    critical_path: int | None = None

    @property
    def total_first_attempt(self) -> int:
        return self.urm + self.tom_first + self.graph


@dataclass
class MetricsReport:
    per_txn: dict[str, TxnMetrics]
    ops_per_txn: int
    replication_degree: int

    @property
    def bound(self) -> int:
        od = self.ops_per_txn * self.replication_degree
        return 5 * od + od * od

    def render(self) -> str:
        od = self.ops_per_txn * self.replication_degree
        header = (
            f"message accounting (o={self.ops_per_txn}, d={self.replication_degree}, "
            f"od={od}, bound 5od+(od)^2={self.bound})"
        )
        lines = [header, f"{'txn':8} {'urm':>5} {'tom':>5} {'retry':>6} {'graph':>6} "
                         f"{'total':>6} {'delay':>6}"]
        for txn in sorted(self.per_txn):
            m = self.per_txn[txn]
            delay = "-" if m.critical_path is None else str(m.critical_path)
            lines.append(
                f"{txn:8} {m.urm:>5} {m.tom_first:>5} {m.tom_retry:>6} {m.graph:>6} "
                f"{m.total_first_attempt:>6} {delay:>6}"
            )
        return "\n".join(lines)


def account_messages(trace: Trace, ops_per_txn: int, replication_degree: int) -> MetricsReport:
    per_txn: dict[str, TxnMetrics] = {}

    def metrics(txn: str) -> TxnMetrics:
        return per_txn.setdefault(txn, TxnMetrics(txn=txn))

    rmcast_at: dict[str, int] = {}
    for e in trace.by_kind("r_mcast"):
        metrics(e["txn"]).urm += 2 * len(e["group"])
        rmcast_at[e["txn"]] = e["t"]
    for e in trace.by_kind("to_mcast"):
        m = metrics(e["txn"])
        if e["attempt"] == 1:
            m.tom_first += 2 * len(e["group"])
        else:
            m.tom_retry += 2 * len(e["group"])
    for e in trace.by_kind("graph_send"):
        metrics(e["txn"]).graph += 1
    commit_at: dict[str, int] = {}
    for e in trace.by_kind("txn_commit"):
        if not e.get("read_only"):
            commit_at[e["txn"]] = max(commit_at.get(e["txn"], 0), e["t"])
    for txn, t_commit in commit_at.items():
        if txn in rmcast_at:
            metrics(txn).critical_path = t_commit - rmcast_at[txn]
    return MetricsReport(
        per_txn=per_txn,
        ops_per_txn=ops_per_txn,
        replication_degree=replication_degree,
    )
