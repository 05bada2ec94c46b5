"""Shared builders for the test suite."""

from __future__ import annotations

import math
import random

from mwpool.protocol import AssignTask, Heartbeat, Hello, InitData, Resume, Shutdown, Suspend, TaskDone
from mwpool.radtrans import Grid, PhysicsParams

U64 = 2**64 - 1


def _blob(rng: random.Random, cap: int = 64) -> bytes:
    n = rng.choice((0, 0, 1, rng.randrange(cap)))
    return rng.randbytes(n)


def _float(rng: random.Random) -> float:
    pick = rng.randrange(6)
    if pick == 0:
        return 0.0
    if pick == 1:
        return rng.choice((math.inf, -math.inf, 5e-324, -0.0, 1.7976931348623157e308))
    if pick == 2:
        # arbitrary bit patterns, NaN payloads included
        import struct

        return struct.unpack("<d", rng.randbytes(8))[0]
    return rng.uniform(-1e6, 1e6)


def random_message(rng: random.Random):
    kind = rng.randrange(8)
    if kind == 0:
        return Hello(rng.randrange(256))
    if kind == 1:
        return InitData(rng.choice((0, U64, rng.randrange(U64))), _float(rng), _blob(rng, 512))
    if kind == 2:
        parent = rng.choice((None, 0, U64, rng.randrange(U64)))
        return AssignTask(rng.randrange(U64), parent, _blob(rng))
    if kind == 3:
        kids = tuple(_blob(rng) for _ in range(rng.choice((0, 4, rng.randrange(9)))))
        return TaskDone(rng.randrange(U64), _blob(rng), kids)
    if kind == 4:
        return Heartbeat(rng.randrange(U64), _float(rng))
    return (Suspend(), Resume(), Shutdown())[kind - 5]


def stromgren_setup(n: int, r_s_cells: float, **params) -> tuple[Grid, PhysicsParams]:
    """Uniform unit-density grid, sigma = alpha = 1, Q giving ``R_s = r_s_cells``."""
    q = 4 * math.pi / 3 * r_s_cells**3
    p = dict(Q=q, sigma=1.0, alpha=1.0, tol=1e-4)
    p.update(params)
    return Grid.uniform(n, 1.0, 1.0), PhysicsParams(**p)


class LedgerModel:
    """Plain-dict reference for the ledger: lists and linear scans only."""

    def __init__(self):
        self.state: dict[int, str] = {}
        self.holder: dict[int, object] = {}
        self.attempts: dict[int, int] = {}
        self.created = self.completed = self.reassigned = self.duplicates = 0

    def submit(self) -> int:
        tid = self.created
        self.created += 1
        self.state[tid] = "pending"
        self.attempts[tid] = 1
        return tid

    def next_assignable(self, worker):
        pending = [t for t, s in self.state.items() if s == "pending"]
        if not pending:
            return None
        tid = min(pending)
        self.state[tid] = "assigned"
        self.holder[tid] = worker
        return tid

    def complete(self, tid: int, n_children: int) -> list[int]:
        if self.state[tid] == "done":
            self.duplicates += 1
            return []
        self.state[tid] = "done"
        self.holder.pop(tid, None)
        self.completed += 1
        return [self.submit() for _ in range(n_children)]

    def requeue_worker(self, worker) -> list[int]:
        held = sorted(t for t, s in self.state.items() if s == "assigned" and self.holder[t] == worker)
        for t in held:
            self.state[t] = "pending"
            del self.holder[t]
            self.attempts[t] += 1
            self.reassigned += 1
        return held


def ledger_scenario(rng: random.Random, steps: int = 60) -> None:
    """Drive a real ledger and the model with the same random calls; assert agreement."""
    from mwpool.tasks import TaskLedger, TaskOutcome, TaskState

    ledger, model = TaskLedger(), LedgerModel()
    workers = list(range(rng.randrange(1, 5)))
    completions = []  # (tid, worker) pairs a worker might still report
    for _ in range(steps):
        op = rng.randrange(10)
        if op < 2 or not model.created:
            assert ledger.submit(b"p") == model.submit()
        elif op < 5:
            w = rng.choice(workers)
            spec = ledger.next_assignable(w)
            got = None if spec is None else spec.id
            assert got == model.next_assignable(w)
            if got is not None:
                completions.append(got)
        elif op < 8 and completions:
            tid = completions.pop(rng.randrange(len(completions)))
            kids = rng.choice((0, 0, 1, 4))
            if rng.random() < 0.2:
                completions.append(tid)  # a stale copy may be delivered again later
            before = ledger.created
            ids = ledger.complete(TaskOutcome(tid, b"r", (b"c",) * kids))
            assert ids == model.complete(tid, kids)
            assert all(c > tid for c in ids)
            assert ids == list(range(before, before + len(ids)))
        else:
            w = rng.choice(workers)
            assert ledger.requeue_worker(w) == model.requeue_worker(w)
            assert ledger.assigned_to(w) == []
        # invariants after every step
        for k in ("created", "completed", "reassigned", "duplicates"):
            assert getattr(ledger, k) == getattr(model, k), k
        states = {t: ledger.state(t).value for t in ledger.tasks}
        assert states == model.state
        assert ledger.pending_ids == sorted(t for t, s in model.state.items() if s == "pending")
        assert sum(1 for s in states.values() if s == "done") == ledger.completed <= ledger.created
        for t, s in model.state.items():
            assert ledger.attempts(t) == model.attempts[t]
            if s == "assigned":
                assert ledger.holder(t) == model.holder[t]
    # drain: everything eventually completes exactly once
    while True:
        spec = ledger.next_assignable(0)
        if spec is None:
            break
        ledger.complete(TaskOutcome(spec.id, b"r"))
        model.next_assignable(0)
        model.complete(spec.id, 0)
    for t in [t for t, s in model.state.items() if s == "assigned"]:
        ledger.complete(TaskOutcome(t, b"r"))
        model.complete(t, 0)
    assert ledger.created == ledger.completed == model.completed
    assert all(ledger.state(t) is TaskState.DONE for t in ledger.tasks)


ACCEPTANCE: dict[int, str] = {}


def verdict(number: int, ok: bool, detail: str) -> None:
    """Record and print one line per acceptance criterion, then assert it."""
    line = f"criterion {number}: {'PASS' if ok else 'FAIL'} - {detail}"
    ACCEPTANCE[number] = line
    print(line)
    assert ok, line
