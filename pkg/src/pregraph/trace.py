"""Run traces: one JSON record per event, append-only, stable field order.

Traces are the only thing the checker sees, and the golden-file tests diff
them byte for byte, so records are written with their keys in construction
order and never reordered.
"""

from __future__ import annotations

import json
from pathlib import Path
from typing import Iterable, Iterator


class Trace:
    def __init__(self, events: list[dict] | None = None) -> None:
        self.events: list[dict] = events if events is not None else []

    def emit(self, t: int, site: int | None, kind: str, **payload) -> None:
        record = {"t": t, "seq": len(self.events), "site": site, "kind": kind}
        record.update(payload)
        self.events.append(record)

    def by_kind(self, *kinds: str) -> Iterator[dict]:
        wanted = set(kinds)
        return (e for e in self.events if e["kind"] in wanted)

    def first(self, kind: str, **match) -> dict | None:
        for e in self.by_kind(kind):
            if all(e.get(k) == v for k, v in match.items()):
                return e
        return None

    def to_lines(self) -> list[str]:
        return [json.dumps(e, separators=(",", ":")) for e in self.events]

    def write(self, path: str | Path) -> None:
        Path(path).write_text("\n".join(self.to_lines()) + "\n", encoding="utf-8")

    @staticmethod
    def from_lines(lines: Iterable[str]) -> "Trace":
        events = [json.loads(line) for line in lines if line.strip()]
        return Trace(events)

    @staticmethod
    def read(path: str | Path) -> "Trace":
        return Trace.from_lines(Path(path).read_text(encoding="utf-8").splitlines())

    def __len__(self) -> int:
        return len(self.events)
