"""Per-site lock table: R/W/IW modes, strict FIFO wait queues, forced IW grants.

The compatibility matrix is the whole contract:

              held
            R   W   IW
  req  R    1   0   0
       W    0   0   0
       IW   0   0   1

A request is granted only if it is compatible with every holder and nothing
is already waiting (no barging).  ``force_write_lock`` is the one exception:
it never queues, evicting conflicting holders instead.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum


class LockMode(str, Enum):
    R = "R"
    W = "W"
    IW = "IW"


_COMPAT = {
    (LockMode.R, LockMode.R): True,
    (LockMode.R, LockMode.W): False,
    (LockMode.R, LockMode.IW): False,
    (LockMode.W, LockMode.R): False,
    (LockMode.W, LockMode.W): False,
    (LockMode.W, LockMode.IW): False,
    (LockMode.IW, LockMode.R): False,
    (LockMode.IW, LockMode.W): False,
    (LockMode.IW, LockMode.IW): True,
}


def compatible(requested: LockMode, held: LockMode) -> bool:
    return _COMPAT[(requested, held)]


class LockError(Exception):
    pass


class DuplicateRequest(LockError):
    pass


class NotHolding(LockError):
    pass


class NotHoldingW(LockError):
    pass


@dataclass(frozen=True)
class LockEntry:
    op_id: str
    txn_id: str
    mode: LockMode


class LockTable:
    """Lock state for the data items replicated at one site.

    Single-threaded by design: only the owning site's event handler touches it.
    """

    def __init__(self) -> None:
        self._holders: dict[str, list[LockEntry]] = {}
        self._queue: dict[str, list[LockEntry]] = {}

    # -- views ------------------------------------------------------------

    def holders(self, item: str) -> list[LockEntry]:
        return list(self._holders.get(item, []))

    def queued(self, item: str) -> list[LockEntry]:
        return list(self._queue.get(item, []))

    def holds(self, item: str, op_id: str, mode: LockMode | None = None) -> bool:
        for e in self._holders.get(item, []):
            if e.op_id == op_id:
                return mode is None or e.mode is mode
        return False

    def _present(self, item: str, op_id: str) -> bool:
        return any(e.op_id == op_id for e in self._holders.get(item, [])) or any(
            e.op_id == op_id for e in self._queue.get(item, [])
        )

    # -- operations --------------------------------------------------------

    def request(self, item: str, op_id: str, txn_id: str, mode: LockMode) -> bool:
        """Returns True when granted, False when enqueued."""
        if self._present(item, op_id):
            raise DuplicateRequest(f"{op_id} already holds or waits on {item}")
        entry = LockEntry(op_id, txn_id, mode)
        holders = self._holders.setdefault(item, [])
        queue = self._queue.setdefault(item, [])
        if not queue and all(compatible(mode, h.mode) for h in holders):
            holders.append(entry)
            return True
        queue.append(entry)
        return False

    def release(self, item: str, op_id: str) -> list[LockEntry]:
        """Drops a held lock; returns waiters granted as a result, in order."""
        holders = self._holders.get(item, [])
        for i, e in enumerate(holders):
            if e.op_id == op_id:
                del holders[i]
                return self._drain(item)
        raise NotHolding(f"{op_id} holds no lock on {item}")

    def convert_w_to_iw(self, item: str, op_id: str) -> list[LockEntry]:
        """Downgrades a W holder to IW and re-scans the queue."""
        holders = self._holders.get(item, [])
        for i, e in enumerate(holders):
            if e.op_id == op_id:
                if e.mode is not LockMode.W:
                    raise NotHoldingW(f"{op_id} holds {e.mode.value} on {item}, not W")
                holders[i] = LockEntry(e.op_id, e.txn_id, LockMode.IW)
                return self._drain(item)
        raise NotHoldingW(f"{op_id} holds no lock on {item}")

    def force_write_lock(self, item: str, op_id: str, txn_id: str) -> tuple[list[LockEntry], list[LockEntry]]:
        """Grants IW to ``op_id`` immediately, bypassing the queue.

        Conflicting holders (R or W; necessarily transactions still in their
        initial execution here) and every queued request are evicted and
        returned as ``(evicted_holders, evicted_waiters)`` so the caller can
        abort their transactions.  Never blocks.
        """
        holders = self._holders.setdefault(item, [])
        queue = self._queue.setdefault(item, [])
        evicted_holders = [h for h in holders if h.mode is not LockMode.IW]
        evicted_waiters = list(queue)
        self._holders[item] = [h for h in holders if h.mode is LockMode.IW]
        queue.clear()
        if not self.holds(item, op_id):
            self._holders[item].append(LockEntry(op_id, txn_id, LockMode.IW))
        return evicted_holders, evicted_waiters

    def release_transaction(self, txn_id: str) -> list[LockEntry]:
        """Releases every lock a transaction holds or waits for, in op_id order."""
        held = sorted(
            [(item, e) for item, hs in self._holders.items() for e in hs if e.txn_id == txn_id],
            key=lambda pair: pair[1].op_id,
        )
        for item, queue in self._queue.items():
            queue[:] = [e for e in queue if e.txn_id != txn_id]
        granted: list[LockEntry] = []
        for item, entry in held:
            granted += self.release(item, entry.op_id)
        return granted

    def _drain(self, item: str) -> list[LockEntry]:
        # grant from the head while compatible; the first blocked waiter stops
        # the scan so nobody overtakes it
        holders = self._holders.setdefault(item, [])
        queue = self._queue.setdefault(item, [])
        granted: list[LockEntry] = []
        while queue:
            head = queue[0]
            if all(compatible(head.mode, h.mode) for h in holders):
                holders.append(head)
                granted.append(head)
                queue.pop(0)
            else:
                break
        return granted
