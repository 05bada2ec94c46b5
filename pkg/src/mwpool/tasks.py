"""Task identity and the master-side ledger with exactly-once accounting."""

from __future__ import annotations

import heapq
from dataclasses import dataclass, field
from enum import Enum
from typing import Optional


class TaskState(Enum):
    PENDING = "pending"
    ASSIGNED = "assigned"
    DONE = "done"


class LedgerError(Exception):
    pass


@dataclass(frozen=True)
class TaskSpec:
    id: int
    parent: Optional[int]
    payload: bytes


@dataclass(frozen=True)
class TaskOutcome:
    id: int
    result_payload: bytes
    children_payloads: tuple[bytes, ...] = ()


@dataclass
class _Entry:
    spec: TaskSpec
    state: TaskState = TaskState.PENDING
    worker: Optional[int] = None
    attempts: int = 1


@dataclass
class TaskLedger:
    """Authoritative Pending/Assigned/Done bookkeeping for one epoch.

    Pending tasks are dispatched lowest id first. A completion for a task
    that is already Done is dropped and counted in ``duplicates``. Ids start
    at ``id_base`` so that ledgers of successive epochs never share an id.
    """

    id_base: int = 0
    tasks: dict[int, _Entry] = field(default_factory=dict)
    created: int = 0
    completed: int = 0
    reassigned: int = 0
    duplicates: int = 0
    _pending: list[int] = field(default_factory=list, repr=False)
    _pending_set: set[int] = field(default_factory=set, repr=False)

    def submit(self, payload: bytes, parent: Optional[int] = None) -> int:
        if parent is not None:
            if parent not in self.tasks:
                raise LedgerError(f"unknown parent task {parent}")
        tid = self.id_base + self.created
        self.tasks[tid] = _Entry(TaskSpec(tid, parent, bytes(payload)))
        self.created += 1
        self._push(tid)
        return tid

    def _push(self, tid: int) -> None:
        heapq.heappush(self._pending, tid)
        self._pending_set.add(tid)

    def _pop_pending(self) -> Optional[int]:
        while self._pending:
            tid = heapq.heappop(self._pending)
            if tid in self._pending_set:
                self._pending_set.discard(tid)
                return tid
        return None

    def next_assignable(self, worker: int) -> Optional[TaskSpec]:
        tid = self._pop_pending()
        if tid is None:
            return None
        entry = self.tasks[tid]
        entry.state = TaskState.ASSIGNED
        entry.worker = worker
        return entry.spec

    def complete(self, outcome: TaskOutcome) -> list[int]:
        """Mark ``outcome.id`` Done and spawn its children in order.

        First completion wins: a result for a Pending task (its worker was
        declared dead) is accepted too, since task execution is deterministic.
        """
        entry = self.tasks.get(outcome.id)
        if entry is None:
            raise LedgerError(f"completion for unknown task {outcome.id}")
        if entry.state is TaskState.DONE:
            self.duplicates += 1
            return []
        if entry.state is TaskState.PENDING:
            self._pending_set.discard(outcome.id)
        entry.state = TaskState.DONE
        entry.worker = None
        self.completed += 1
        return [self.submit(p, parent=outcome.id) for p in outcome.children_payloads]

    def requeue_task(self, tid: int) -> None:
        entry = self.tasks[tid]
        if entry.state is not TaskState.ASSIGNED:
            return
        entry.state = TaskState.PENDING
        entry.worker = None
        entry.attempts += 1
        self.reassigned += 1
        self._push(tid)

    def requeue_worker(self, worker: int) -> list[int]:
        held = sorted(
            tid
            for tid, e in self.tasks.items()
            if e.state is TaskState.ASSIGNED and e.worker == worker
        )
        for tid in held:
            self.requeue_task(tid)
        return held

    def all_done(self) -> bool:
        return self.created > 0 and self.created == self.completed

    def state(self, tid: int) -> TaskState:
        return self.tasks[tid].state

    def holder(self, tid: int) -> Optional[int]:
        return self.tasks[tid].worker

    def attempts(self, tid: int) -> int:
        return self.tasks[tid].attempts

    def spec(self, tid: int) -> TaskSpec:
        return self.tasks[tid].spec

    @property
    def pending_ids(self) -> list[int]:
        return sorted(self._pending_set)

    def assigned_to(self, worker: int) -> list[int]:
        return sorted(
            tid for tid, e in self.tasks.items() if e.state is TaskState.ASSIGNED and e.worker == worker
        )

    def snapshot(self) -> str:
        counts = {s: 0 for s in TaskState}
        for e in self.tasks.values():
            counts[e.state] += 1
        return (
            f"created={self.created} completed={self.completed} reassigned={self.reassigned} "
            f"duplicates={self.duplicates} pending={counts[TaskState.PENDING]} "
            f"assigned={counts[TaskState.ASSIGNED]} done={counts[TaskState.DONE]}"
        )


# A TaskDone whose result starts with this marker reports an application
# failure; the master counts it as a failed attempt and requeues the task.
APP_ERROR = b"\xffMW-APP-ERROR\xff"


def is_app_error(result: bytes) -> bool:
    return result.startswith(APP_ERROR)
