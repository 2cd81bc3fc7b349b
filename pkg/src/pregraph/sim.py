"""Seeded discrete-event simulator: event queue, delays, crash injection,
workload synthesis and quiescence.

A run is a pure function of (scenario, seed): the single event queue orders
events by (time, insertion sequence), every set iteration that matters is
sorted, and all randomness flows through one ``random.Random``.  Two runs of
the same scenario produce byte-identical traces.
"""

from __future__ import annotations

import heapq
import random
from dataclasses import dataclass

from .comm import Network, WeakLeaderService
from .model import DataItemId, Operation, OpKind, ReplicationMap, SiteId
from .replica import Replica
from .trace import Trace


class SimError(Exception):
    pass


class InvalidScenario(SimError):
    pass


class StepCapExceeded(SimError):
    pass


@dataclass(frozen=True)
class TxnSpec:
    """One scripted transaction: where it starts, when, and what it touches."""

    txn_id: str
    origin: SiteId
    arrival: int
    ops: tuple[tuple[DataItemId, str], ...]  # (item, "r"|"w")


@dataclass(frozen=True)
class Scenario:
    n_sites: int
    placement: dict[DataItemId, tuple[SiteId, ...]]
    seed: int = 0
    # synthesized workload parameters (ignored when txns is given)
    n_txns: int = 0
    ops_min: int = 1
    ops_max: int = 2
    write_ratio: float = 0.5
    arrival_window: int = 50
    txns: tuple[TxnSpec, ...] | None = None
    faults: tuple[tuple[SiteId, int], ...] = ()
    max_delay: int = 1
    leader_strategy: str = "min-alive"
    colocate_leaders: bool = False
    cycle_cap: int = 10_000
    suspicion_delay: int = 5
    step_cap: int = 2_000_000

    def sites(self) -> list[SiteId]:
        return list(range(1, self.n_sites + 1))

    def replication_map(self) -> ReplicationMap:
        return ReplicationMap(
            sites=frozenset(self.sites()),
            placement={item: frozenset(reps) for item, reps in self.placement.items()},
        )

    def validate(self) -> None:
        if self.n_sites < 1:
            raise InvalidScenario("need at least one site")
        if not self.placement:
            raise InvalidScenario("no data items placed")
        all_sites = set(self.sites())
        crashed = {site for site, _ in self.faults}
        if crashed - all_sites:
            raise InvalidScenario("fault schedule names unknown sites")
        for item, reps in self.placement.items():
            if not reps:
                raise InvalidScenario(f"item {item} has no replicas")
            if not set(reps) <= all_sites:
                raise InvalidScenario(f"item {item} placed on unknown sites")
            if set(reps) <= crashed:
                raise InvalidScenario(f"every replica of {item} crashes; a correct one is required")
        if self.max_delay < 1:
            raise InvalidScenario("max_delay must be >= 1")
        if self.leader_strategy not in ("self", "min-alive"):
            raise InvalidScenario(f"unknown leader strategy {self.leader_strategy!r}")
        if self.txns is not None:
            seen = set()
            for spec in self.txns:
                if spec.txn_id in seen:
                    raise InvalidScenario(f"duplicate transaction id {spec.txn_id}")
                seen.add(spec.txn_id)
                if spec.origin not in all_sites:
                    raise InvalidScenario(f"{spec.txn_id} starts at unknown site {spec.origin}")
                for item, kind in spec.ops:
                    if item not in self.placement:
                        raise InvalidScenario(f"{spec.txn_id} touches unknown item {item}")
                    if spec.origin not in self.placement[item]:
                        raise InvalidScenario(
                            f"{spec.txn_id} runs at site {spec.origin}, which does not store {item}"
                        )
                    if kind not in ("r", "w"):
                        raise InvalidScenario(f"bad operation kind {kind!r}")
        elif self.n_txns < 0:
            raise InvalidScenario("negative transaction count")

    def to_dict(self) -> dict:
        d = {
            "n_sites": self.n_sites,
            "placement": {i: sorted(r) for i, r in sorted(self.placement.items())},
            "seed": self.seed,
            "faults": sorted(self.faults),
            "max_delay": self.max_delay,
            "leader_strategy": self.leader_strategy,
            "colocate_leaders": self.colocate_leaders,
            "cycle_cap": self.cycle_cap,
            "suspicion_delay": self.suspicion_delay,
        }
        if self.txns is not None:
            d["txns"] = [
                {"txn": s.txn_id, "origin": s.origin, "arrival": s.arrival,
                 "ops": [list(o) for o in s.ops]}
                for s in self.txns
            ]
        else:
            d["workload"] = {
                "n_txns": self.n_txns, "ops_min": self.ops_min, "ops_max": self.ops_max,
                "write_ratio": self.write_ratio, "arrival_window": self.arrival_window,
            }
        return d


def synthesize_workload(scenario: Scenario, rng: random.Random) -> list[TxnSpec]:
    """Derives the concrete transactions of a parameterized workload."""
    rmap = scenario.replication_map()
    homes = [s for s in scenario.sites() if rmap.items_at(s)]
    if not homes and scenario.n_txns:
        raise InvalidScenario("no site stores any item, so no transaction can run")
    drafts = []
    for k in range(scenario.n_txns):
        origin = rng.choice(homes)
        local = sorted(rmap.items_at(origin))
        width = min(rng.randint(scenario.ops_min, scenario.ops_max), len(local))
        items = rng.sample(local, width)
        ops = tuple((item, "w" if rng.random() < scenario.write_ratio else "r")
                    for item in items)
        arrival = rng.randint(0, scenario.arrival_window)
        drafts.append((arrival, k, origin, ops))
    drafts.sort(key=lambda d: (d[0], d[1]))
    return [
        TxnSpec(txn_id=f"t{i:03d}", origin=origin, arrival=arrival, ops=ops)
        for i, (arrival, _, origin, ops) in enumerate(drafts)
    ]


def _build_ops(spec: TxnSpec) -> list[Operation]:
    ops = []
    for item, kind in spec.ops:
        op_id = f"{spec.txn_id}:{item}:{kind}"
        value = f"v:{op_id}".encode() if kind == "w" else None
        ops.append(Operation(op_id, spec.txn_id, item, OpKind(kind), value))
    return ops


class Engine:
    def __init__(self, scenario: Scenario) -> None:
        scenario.validate()
        self.scenario = scenario
        self.rng = random.Random(scenario.seed)
        self.trace = Trace()
        self.now = 0
        self._seq = 0
        self._queue: list[tuple[int, int, SiteId | None, object]] = []
        self.crashed: set[SiteId] = set()
        self.suspected: set[SiteId] = set()
        self.leadership_epoch = 0
        self.rmap = scenario.replication_map()
        self.network = Network(self, self.rmap, scenario.colocate_leaders)
        self.wleader = WeakLeaderService(self, scenario.leader_strategy)
        self.replicas: dict[SiteId, Replica] = {
            s: Replica(self, s, self.rmap, scenario.cycle_cap) for s in scenario.sites()
        }

    # -- scheduling ------------------------------------------------------------

    def schedule(self, delay: int, site: SiteId | None, fn) -> None:
        heapq.heappush(self._queue, (self.now + delay, self._seq, site, fn))
        self._seq += 1

    def hops(self, n: int) -> int:
        return sum(self.rng.randint(1, self.scenario.max_delay) for _ in range(n))

    # -- fault injection ----------------------------------------------------------

    def inject_crash(self, site: SiteId) -> None:
        if site in self.crashed:
            return
        self.crashed.add(site)
        self.trace.emit(self.now, site, "crash")
        self.schedule(self.scenario.suspicion_delay, None, lambda s=site: self._suspect(s))

    def _suspect(self, site: SiteId) -> None:
        self.suspected.add(site)
        self.leadership_epoch += 1
        self.trace.emit(self.now, None, "suspected", target=site)
        for s in sorted(self.replicas):
            if s not in self.crashed:
                self.replicas[s].leader_pump()

    # -- main loop -------------------------------------------------------------------

    def run(self) -> Trace:
        scenario = self.scenario
        self.trace.emit(0, None, "meta", scenario=scenario.to_dict())
        if scenario.txns is not None:
            specs = list(scenario.txns)
        else:
            specs = synthesize_workload(scenario, self.rng)
        for spec in specs:
            ops = _build_ops(spec)
            self.schedule(
                spec.arrival, spec.origin,
                lambda s=spec, o=ops: self.replicas[s.origin].start_transaction(s.txn_id, o),
            )
        for site, when in sorted(scenario.faults):
            self.schedule(when, None, lambda s=site: self.inject_crash(s))

        steps = 0
        while self._queue:
            steps += 1
            if steps > scenario.step_cap:
                raise StepCapExceeded(
                    f"exceeded {scenario.step_cap} events at t={self.now}; "
                    f"{len(self._queue)} still queued"
                )
            t, _, site, fn = heapq.heappop(self._queue)
            self.now = t
            if site is not None and site in self.crashed:
                continue
            fn()
        for s in sorted(self.replicas):
            if s not in self.crashed:
                self.trace.emit(self.now, s, "site_final", **self.replicas[s].final_snapshot())
        return self.trace


def run(scenario: Scenario) -> Trace:
    return Engine(scenario).run()
