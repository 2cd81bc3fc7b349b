"""Scenario files: INI-style sections, human-editable, round-trip stable.

::

    [sites]
    count = 3

    [placement]
    x = 1 2
    y = 2 3

    [workload]
    n_txns = 10
    ops_min = 1
    ops_max = 2
    write_ratio = 0.5
    arrival_window = 40

    [transactions]          ; optional, replaces [workload]
    t000 = origin:1 at:0 ops:w:x,r:y

    [faults]
    crash = 3@12            ; one "site@time" token per crash

    [config]
    seed = 42
    max_delay = 1
    leader_strategy = min-alive
    colocate_leaders = false
    cycle_cap = 10000
    suspicion_delay = 5
"""

from __future__ import annotations

import configparser
from pathlib import Path

from .sim import InvalidScenario, Scenario, TxnSpec


def parse_scenario(text: str) -> Scenario:
    cp = configparser.ConfigParser(inline_comment_prefixes=(";", "#"))
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise InvalidScenario(f"unparseable scenario: {exc}") from exc
    try:
        return _build(cp)
    except (KeyError, ValueError, configparser.NoSectionError, configparser.NoOptionError) as exc:
        raise InvalidScenario(f"bad scenario: {exc}") from exc


def _build(cp: configparser.ConfigParser) -> Scenario:
    n_sites = cp.getint("sites", "count")
    placement = {
        item: tuple(int(tok) for tok in reps.split())
        for item, reps in cp.items("placement")
    }
    cfg = cp["config"] if cp.has_section("config") else {}
    faults: list[tuple[int, int]] = []
    if cp.has_section("faults"):
        for _, value in cp.items("faults"):
            for token in value.split():
                site, when = token.split("@")
                faults.append((int(site), int(when)))

    kwargs = dict(
        n_sites=n_sites,
        placement=placement,
        seed=int(cfg.get("seed", 0)),
        faults=tuple(sorted(faults)),
        max_delay=int(cfg.get("max_delay", 1)),
        leader_strategy=cfg.get("leader_strategy", "min-alive"),
        colocate_leaders=str(cfg.get("colocate_leaders", "false")).lower() in ("true", "1", "yes"),
        cycle_cap=int(cfg.get("cycle_cap", 10_000)),
        suspicion_delay=int(cfg.get("suspicion_delay", 5)),
    )

    if cp.has_section("transactions"):
        specs = []
        for txn_id, value in cp.items("transactions"):
            fields = dict(tok.split(":", 1) for tok in value.split())
            ops = tuple(
                (op.split(":")[1], op.split(":")[0])
                for op in fields["ops"].split(",")
            )
            specs.append(
                TxnSpec(txn_id=txn_id, origin=int(fields["origin"]),
                        arrival=int(fields["at"]), ops=ops)
            )
        specs.sort(key=lambda s: (s.arrival, s.txn_id))
        kwargs["txns"] = tuple(specs)
    else:
        wl = cp["workload"]
        kwargs.update(
            n_txns=wl.getint("n_txns"),
            ops_min=wl.getint("ops_min", 1),
            ops_max=wl.getint("ops_max", 2),
            write_ratio=wl.getfloat("write_ratio", 0.5),
            arrival_window=wl.getint("arrival_window", 50),
        )

    scenario = Scenario(**kwargs)
    scenario.validate()
    return scenario


def load_scenario(path: str | Path) -> Scenario:
    return parse_scenario(Path(path).read_text(encoding="utf-8"))


def format_scenario(scenario: Scenario) -> str:
    lines = ["[sites]", f"count = {scenario.n_sites}", "", "[placement]"]
    for item, reps in sorted(scenario.placement.items()):
        lines.append(f"{item} = " + " ".join(str(s) for s in sorted(reps)))
    lines.append("")
    if scenario.txns is not None:
        lines.append("[transactions]")
        for spec in scenario.txns:
            ops = ",".join(f"{kind}:{item}" for item, kind in spec.ops)
            lines.append(f"{spec.txn_id} = origin:{spec.origin} at:{spec.arrival} ops:{ops}")
    else:
        lines += [
            "[workload]",
            f"n_txns = {scenario.n_txns}",
            f"ops_min = {scenario.ops_min}",
            f"ops_max = {scenario.ops_max}",
            f"write_ratio = {scenario.write_ratio}",
            f"arrival_window = {scenario.arrival_window}",
        ]
    lines.append("")
    if scenario.faults:
        lines.append("[faults]")
        lines.append("crash = " + " ".join(f"{s}@{t}" for s, t in sorted(scenario.faults)))
        lines.append("")
    lines += [
        "[config]",
        f"seed = {scenario.seed}",
        f"max_delay = {scenario.max_delay}",
        f"leader_strategy = {scenario.leader_strategy}",
        f"colocate_leaders = {str(scenario.colocate_leaders).lower()}",
        f"cycle_cap = {scenario.cycle_cap}",
        f"suspicion_delay = {scenario.suspicion_delay}",
        "",
    ]
    return "\n".join(lines)


def save_scenario(scenario: Scenario, path: str | Path) -> None:
    Path(path).write_text(format_scenario(scenario), encoding="utf-8")
