"""Core value types: data items, operations, transactions, replication map.

Everything here is immutable and shared freely between sites. All identifiers
are totally ordered (ints for sites, strings compared lexicographically for
items, operations and transactions) so tie-breaks are stable everywhere.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum

SiteId = int
DataItemId = str
TransactionId = str
OpId = str


class OpKind(str, Enum):
    READ = "r"
    WRITE = "w"


@dataclass(frozen=True)
class Operation:
    """A read or write of a single data item; writes carry their update value."""

    op_id: OpId
    txn_id: TransactionId
    item: DataItemId
    kind: OpKind
    update_value: bytes | None = None

    def __post_init__(self) -> None:
        if self.kind is OpKind.WRITE and self.update_value is None:
            raise ValueError(f"write {self.op_id} needs an update value")
        if self.kind is OpKind.READ and self.update_value is not None:
            raise ValueError(f"read {self.op_id} cannot carry an update value")

    @property
    def is_read(self) -> bool:
        return self.kind is OpKind.READ

    @property
    def is_write(self) -> bool:
        return self.kind is OpKind.WRITE

    def to_dict(self) -> dict:
        d = {"op": self.op_id, "txn": self.txn_id, "item": self.item, "kind": self.kind.value}
        if self.update_value is not None:
            d["value"] = self.update_value.decode("utf-8")
        return d

    @staticmethod
    def from_dict(d: dict) -> "Operation":
        value = d.get("value")
        return Operation(
            op_id=d["op"],
            txn_id=d["txn"],
            item=d["item"],
            kind=OpKind(d["kind"]),
            update_value=value.encode("utf-8") if value is not None else None,
        )


@dataclass(frozen=True)
class Transaction:
    """A uniquely identified set of operations plus execution metadata.

    ``exec_start``/``exec_end`` are the logical times of the initial execution
    window at the origin site.  ``committed_at_start`` is the set of update
    transactions already committed at the origin when execution began; two
    transactions are concurrent exactly when neither appears in the other's
    snapshot.
    """

    txn_id: TransactionId
    ops: frozenset[Operation]
    origin_site: SiteId
    exec_start: int
    exec_end: int
    committed_at_start: frozenset[TransactionId] = field(default_factory=frozenset)

    def __post_init__(self) -> None:
        if not self.ops:
            raise ValueError(f"transaction {self.txn_id} has no operations")
        if self.exec_start >= self.exec_end:
            raise ValueError(f"transaction {self.txn_id} has an empty execution interval")
        for op in self.ops:
            if op.txn_id != self.txn_id:
                raise ValueError(f"operation {op.op_id} does not belong to {self.txn_id}")

    @property
    def read_ops(self) -> list[Operation]:
        return sorted((o for o in self.ops if o.is_read), key=lambda o: o.op_id)

    @property
    def write_ops(self) -> list[Operation]:
        return sorted((o for o in self.ops if o.is_write), key=lambda o: o.op_id)

    @property
    def items(self) -> frozenset[DataItemId]:
        return frozenset(o.item for o in self.ops)

    @property
    def written_items(self) -> frozenset[DataItemId]:
        return frozenset(o.item for o in self.ops if o.is_write)

    @property
    def is_update(self) -> bool:
        return any(o.is_write for o in self.ops)

    def sorted_ops(self) -> list[Operation]:
        return sorted(self.ops, key=lambda o: o.op_id)

    def to_dict(self) -> dict:
        return {
            "txn": self.txn_id,
            "ops": [o.to_dict() for o in self.sorted_ops()],
            "origin": self.origin_site,
            "start": self.exec_start,
            "end": self.exec_end,
            "snapshot": sorted(self.committed_at_start),
        }

    @staticmethod
    def from_dict(d: dict) -> "Transaction":
        return Transaction(
            txn_id=d["txn"],
            ops=frozenset(Operation.from_dict(o) for o in d["ops"]),
            origin_site=d["origin"],
            exec_start=d["start"],
            exec_end=d["end"],
            committed_at_start=frozenset(d["snapshot"]),
        )


@dataclass(frozen=True)
class ReplicationMap:
    """Which sites store which data items."""

    sites: frozenset[SiteId]
    placement: dict[DataItemId, frozenset[SiteId]]

    def __post_init__(self) -> None:
        for item, reps in self.placement.items():
            if not reps:
                raise ValueError(f"item {item} has no replicas")
            if not reps <= self.sites:
                raise ValueError(f"item {item} placed on unknown sites")

    def replicas(self, item: DataItemId) -> frozenset[SiteId]:
        try:
            return self.placement[item]
        except KeyError:
            raise KeyError(f"unknown data item {item}") from None

    def op_replicas(self, op: Operation) -> frozenset[SiteId]:
        return self.replicas(op.item)

    def txn_replicas(self, txn: Transaction) -> frozenset[SiteId]:
        out: set[SiteId] = set()
        for item in txn.items:
            out |= self.replicas(item)
        return frozenset(out)

    def items_at(self, site: SiteId) -> frozenset[DataItemId]:
        return frozenset(i for i, reps in self.placement.items() if site in reps)

    def write_replicas(self, txn: Transaction) -> frozenset[SiteId]:
        out: set[SiteId] = set()
        for item in txn.written_items:
            out |= self.replicas(item)
        return frozenset(out)


def conflict(a: Operation, b: Operation) -> bool:
    """Two operations conflict when they touch the same item and one writes."""
    return a.item == b.item and (a.is_write or b.is_write)


def concurrent(a: Transaction, b: Transaction) -> bool:
    """Concurrency relation used by read certification.

    A transaction is never concurrent with itself.  Two distinct transactions
    are sequential only when one had already committed at the other's origin
    site before that other transaction started executing; the start-time
    snapshots carried by each transaction record exactly that.
    """
    if a.txn_id == b.txn_id:
        return False
    if a.txn_id in b.committed_at_start or b.txn_id in a.committed_at_start:
        return False
    return True
