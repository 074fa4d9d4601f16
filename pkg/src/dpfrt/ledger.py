"""Privacy-budget accounting under sequential composition.

A ledger is an append-only record of (mechanism, epsilon) charges against one
dataset.  The total spend of accepted entries never exceeds the cap: the
check-and-append is atomic, which is the single synchronization point for
concurrent releases.
"""

from __future__ import annotations

import json
import threading
import uuid
from dataclasses import asdict, dataclass
from datetime import datetime, timezone
from typing import Callable, Iterable

from .errors import BudgetExhaustedError, DomainError


@dataclass(frozen=True)
class LedgerEntry:
    dataset_id: str
    mechanism: str
    epsilon: float
    timestamp: str
    release_id: str


class BudgetLedger:
    """Tracks cumulative privacy spend for one dataset, with an optional cap.

    ``sink``, when given, is called with each accepted entry (as a dict)
    while the ledger lock is held, so persisted order matches charge order.
    """

    def __init__(
        self,
        dataset_id: str,
        cap: float | None = None,
        sink: Callable[[dict], None] | None = None,
    ):
        if cap is not None and cap <= 0:
            raise DomainError(f"budget cap must be positive, got {cap}")
        self.dataset_id = dataset_id
        self.cap = cap
        self._entries: list[LedgerEntry] = []
        self._sink = sink
        self._lock = threading.Lock()

    @property
    def entries(self) -> tuple[LedgerEntry, ...]:
        return tuple(self._entries)

    @property
    def spent(self) -> float:
        return sum(e.epsilon for e in self._entries)

    @property
    def remaining(self) -> float:
        return float("inf") if self.cap is None else self.cap - self.spent

    def charge(
        self, mechanism: str, epsilon: float, release_id: str | None = None
    ) -> LedgerEntry:
        """Append a charge iff it fits under the cap; raise otherwise."""
        if epsilon <= 0:
            raise DomainError(f"epsilon must be positive, got {epsilon}")
        with self._lock:
            remaining = self.remaining
            if epsilon > remaining + 1e-12:
                raise BudgetExhaustedError(requested=epsilon, remaining=remaining)
            entry = LedgerEntry(
                dataset_id=self.dataset_id,
                mechanism=mechanism,
                epsilon=float(epsilon),
                timestamp=datetime.now(timezone.utc).isoformat(),
                release_id=release_id or uuid.uuid4().hex,
            )
            self._entries.append(entry)
            if self._sink is not None:
                self._sink(asdict(entry))
        return entry

    def to_records(self) -> list[dict]:
        return [asdict(e) for e in self._entries]

    @classmethod
    def from_records(
        cls,
        dataset_id: str,
        records: Iterable[dict],
        cap: float | None = None,
        sink: Callable[[dict], None] | None = None,
    ) -> "BudgetLedger":
        ledger = cls(dataset_id, cap=cap, sink=None)
        for rec in records:
            if rec["dataset_id"] != dataset_id:
                continue
            ledger._entries.append(LedgerEntry(**rec))
        if ledger.cap is not None and ledger.spent > ledger.cap + 1e-12:
            raise DomainError(
                f"replayed ledger overspends cap: {ledger.spent} > {ledger.cap}"
            )
        ledger._sink = sink
        return ledger


def compose_budget(ledger: BudgetLedger, epsilon: float, mechanism: str = "release"):
    """Spec-level alias: append a charge or raise BudgetExhaustedError."""
    return ledger.charge(mechanism, epsilon)


def append_jsonl(path, record: dict):
    with open(path, "a", encoding="utf-8") as fh:
        fh.write(json.dumps(record) + "\n")


def read_jsonl(path) -> list[dict]:
    records = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line:
                records.append(json.loads(line))
    return records
