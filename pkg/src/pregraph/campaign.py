"""Randomized scenario campaigns: generate, run, check, aggregate.

Each campaign run derives an independent scenario from (master seed, index):
site count, item universe, replication degree, workload shape and crash
schedule are all sampled inside configurable ranges, with crashes filtered so
that every item keeps at least one correct replica.
"""

from __future__ import annotations

import random
from dataclasses import dataclass, field

from .checker import check_trace
from .sim import Engine, Scenario


@dataclass(frozen=True)
class CampaignRanges:
    sites: tuple[int, int] = (3, 9)
    items: tuple[int, int] = (2, 6)
    degree: tuple[int, int] = (1, 3)
    txns: tuple[int, int] = (5, 40)
    ops: tuple[int, int] = (1, 4)
    crashes: tuple[int, int] = (0, 2)
    write_ratio: tuple[float, float] = (0.3, 0.8)
    max_delay: tuple[int, int] = (1, 3)
    arrival_window: tuple[int, int] = (20, 80)


def generate_scenario(master_seed: int, index: int, ranges: CampaignRanges = CampaignRanges()) -> Scenario:
    rng = random.Random((master_seed, index))
    n_sites = rng.randint(*ranges.sites)
    n_items = rng.randint(*ranges.items)
    placement: dict[str, tuple[int, ...]] = {}
    for i in range(n_items):
        degree = min(rng.randint(*ranges.degree), n_sites)
        placement[f"x{i}"] = tuple(sorted(rng.sample(range(1, n_sites + 1), degree)))

    window = rng.randint(*ranges.arrival_window)
    n_crashes = rng.randint(*ranges.crashes)
    faults: list[tuple[int, int]] = []
    crashed: set[int] = set()
    candidates = list(range(1, n_sites + 1))
    rng.shuffle(candidates)
    for site in candidates:
        if len(faults) == n_crashes:
            break
        # assumption: every item keeps one correct replica
        if any(set(reps) <= crashed | {site} for reps in placement.values()):
            continue
        crashed.add(site)
        faults.append((site, rng.randint(0, int(window * 1.5))))

    ops_min = rng.randint(*ranges.ops)
    ops_max = rng.randint(ops_min, ranges.ops[1])
    return Scenario(
        n_sites=n_sites,
        placement=placement,
        seed=rng.getrandbits(32),
        n_txns=rng.randint(*ranges.txns),
        ops_min=ops_min,
        ops_max=ops_max,
        write_ratio=round(rng.uniform(*ranges.write_ratio), 3),
        arrival_window=window,
        faults=tuple(sorted(faults)),
        max_delay=rng.randint(*ranges.max_delay),
        leader_strategy="min-alive",
    )


@dataclass
class CampaignSummary:
    runs: int = 0
    failures: list[tuple[int, list[str]]] = field(default_factory=list)
    errors: list[tuple[int, str]] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return not self.failures and not self.errors

    def render(self) -> str:
        lines = [f"campaign: {self.runs} runs, {len(self.failures)} check failures, "
                 f"{len(self.errors)} run errors"]
        for index, messages in self.failures[:20]:
            for m in messages:
                lines.append(f"  run {index}: {m}")
        for index, err in self.errors[:20]:
            lines.append(f"  run {index}: error {err}")
        lines.append("overall: " + ("PASS" if self.passed else "FAIL"))
        return "\n".join(lines)


def run_campaign(count: int, master_seed: int,
                 ranges: CampaignRanges = CampaignRanges()) -> CampaignSummary:
    summary = CampaignSummary()
    for index in range(count):
        summary.runs += 1
        scenario = generate_scenario(master_seed, index, ranges)
        try:
            trace = Engine(scenario).run()
        except Exception as exc:  # a run error is a campaign failure
            summary.errors.append((index, f"{type(exc).__name__}: {exc}"))
            continue
        report = check_trace(trace)
        if not report.passed:
            messages = [f"{v.name}: {f}" for v in report.verdicts for f in v.failures]
            summary.failures.append((index, messages))
    return summary
