"""The driver side of the pool: registration, dispatch, liveness and epochs.

:class:`Master` is a pure state machine over a serialized stream of events.
It never touches sockets or clocks itself; a transport (or the simulator in
:mod:`mwpool.churn`) feeds it :class:`Event` and :class:`Tick` objects and
ships the returned ``(conn, message)`` pairs.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Hashable, Optional, Sequence, Union

from .protocol import (
    AssignTask,
    Heartbeat,
    Hello,
    InitData,
    Message,
    Resume,
    Shutdown,
    Suspend,
    TaskDone,
)
from .tasks import TaskLedger, TaskOutcome, TaskSpec, TaskState, is_app_error

log = logging.getLogger(__name__)


class AppHooks:
    """Application callbacks. Subclass and override what the app needs.

    Master side: ``setup_initial_tasks``, ``pack_worker_init_data``,
    ``act_on_completed_task``, ``epoch_done`` and ``next_epoch``.
    Worker side: ``execute_task``. Simulation only: ``task_cost``.
    """

    def setup_initial_tasks(self) -> list[bytes]:
        raise NotImplementedError

    def pack_worker_init_data(self) -> bytes:
        return b""

    def act_on_completed_task(self, spec: TaskSpec, outcome: TaskOutcome) -> Sequence[bytes]:
        """Fold a result into the app state and return the payloads to spawn."""
        return outcome.children_payloads

    def execute_task(self, init_data: bytes, payload: bytes) -> tuple[bytes, Sequence[bytes]]:
        raise NotImplementedError

    def task_cost(self, payload: bytes) -> float:
        return 1.0

    def epoch_done(self) -> bool:
        """Called once every task of an epoch is Done. True ends the run."""
        return True

    def next_epoch(self) -> list[bytes]:
        return []


@dataclass(frozen=True)
class MasterConfig:
    min_workers: int = 1
    heartbeat_s: float = 1.0
    death_multiplier: float = 3.0
    max_attempts: Optional[int] = None
    stall_timeout_s: float = 600.0
    listen: tuple[str, int] = ("127.0.0.1", 7477)

    def __post_init__(self):
        if self.min_workers < 1:
            raise ValueError("min_workers must be >= 1")
        if not self.heartbeat_s > 0:
            raise ValueError("heartbeat_s must be > 0")
        if not self.death_multiplier > 1:
            raise ValueError("death_multiplier must be > 1 so the timeout exceeds the heartbeat interval")
        if self.max_attempts is not None and self.max_attempts < 1:
            raise ValueError("max_attempts must be >= 1 when set")

    @property
    def death_timeout(self) -> float:
        return self.death_multiplier * self.heartbeat_s


class WorkerState(Enum):
    IDLE = "idle"
    BUSY = "busy"
    SUSPENDED = "suspended"
    DEAD = "dead"


@dataclass
class WorkerRecord:
    id: int
    conn: Hashable
    state: WorkerState
    last_heartbeat: Any
    task: Optional[int] = None


@dataclass(frozen=True)
class Event:
    """A decoded message from connection ``conn`` observed at ``time``."""

    time: Any
    conn: Hashable
    msg: Message


@dataclass(frozen=True)
class Tick:
    time: Any


class RunAborted(RuntimeError):
    pass


class PoolStarved(RunAborted):
    pass


class PoisonTask(RunAborted):
    pass


REPORT_KEYS = (
    "epochs",
    "created",
    "completed",
    "reassigned",
    "duplicates",
    "makespan_s",
    "workers_seen",
    "workers_died",
)


def format_value(v) -> str:
    if isinstance(v, float):
        return repr(v)
    return str(v)


@dataclass
class RunReport:
    epochs: int = 0
    created: int = 0
    completed: int = 0
    reassigned: int = 0
    duplicates: int = 0
    makespan_s: float = 0.0
    workers_seen: int = 0
    workers_died: int = 0
    tasks_per_worker: dict[int, int] = field(default_factory=dict)
    dropped: int = 0

    def to_text(self) -> str:
        return "".join(f"{k}={format_value(getattr(self, k))}\n" for k in REPORT_KEYS)

    def to_dict(self) -> dict:
        d = {k: getattr(self, k) for k in REPORT_KEYS}
        d["tasks_per_worker"] = {str(k): v for k, v in sorted(self.tasks_per_worker.items())}
        d["dropped"] = self.dropped
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)


Outbound = list[tuple[Hashable, Message]]


class Master:
    def __init__(self, config: MasterConfig, hooks: AppHooks):
        self.config = config
        self.hooks = hooks
        self.workers: dict[int, WorkerRecord] = {}
        self._by_conn: dict[Hashable, int] = {}
        self._next_worker = 0
        self.ledger = TaskLedger()
        self.init_blob = b""
        self.threshold_met = False
        self.finished = False
        self.epochs = 0
        self._closed = dict(created=0, completed=0, reassigned=0, duplicates=0)
        self.stale = 0
        self.dropped = 0
        self.workers_died = 0
        self.tasks_per_worker: dict[int, int] = {}
        self.first_dispatch = None
        self.last_completion = None
        self._starved_since = None
        self._started = False

    # -- lifecycle ---------------------------------------------------------

    def start(self, now) -> Outbound:
        self._started = True
        self.init_blob = self.hooks.pack_worker_init_data()
        for p in self.hooks.setup_initial_tasks():
            self.ledger.submit(p)
        out: Outbound = []
        if self.ledger.created == 0:
            out += self._end_epoch(now)
        return out

    def _live(self) -> list[WorkerRecord]:
        return [w for _, w in sorted(self.workers.items()) if w.state is not WorkerState.DEAD]

    def _end_epoch(self, now) -> Outbound:
        out: Outbound = []
        while True:
            self.epochs += 1
            for k in self._closed:
                self._closed[k] += getattr(self.ledger, k)
            if self.hooks.epoch_done():
                self.finished = True
                return out + [(w.conn, Shutdown()) for w in self._live()]
            payloads = self.hooks.next_epoch()
            self.init_blob = self.hooks.pack_worker_init_data()
            base = self.ledger.id_base + self.ledger.created
            self.ledger = TaskLedger(id_base=base)
            for p in payloads:
                self.ledger.submit(p)
            out += [
                (w.conn, InitData(w.id, float(self.config.heartbeat_s), self.init_blob))
                for w in self._live()
            ]
            if self.ledger.created:
                return out

    # -- event handling ----------------------------------------------------

    def on_event(self, ev: Union[Event, Tick]) -> Outbound:
        if not self._started:
            raise RuntimeError("Master.start() must be called before events are fed")
        if self.finished:
            return []
        if isinstance(ev, Tick):
            self.sweep_dead(ev.time)
            out = self._dispatch(ev.time)
            self._check_stall(ev.time)
            return out

        msg, now = ev.msg, ev.time
        if isinstance(msg, Hello):
            if ev.conn in self._by_conn:
                self.dropped += 1
                return []
            return self._register(ev.conn, now)

        wid = self._by_conn.get(ev.conn)
        if wid is None:
            self.dropped += 1
            return []
        w = self.workers[wid]
        if w.state is not WorkerState.DEAD:
            w.last_heartbeat = now

        if isinstance(msg, Heartbeat):
            return []
        if isinstance(msg, TaskDone):
            return self._on_done(w, msg, now)
        if isinstance(msg, Suspend):
            if w.state is not WorkerState.DEAD:
                w.state = WorkerState.SUSPENDED
            return []
        if isinstance(msg, Resume):
            if w.state is WorkerState.SUSPENDED:
                w.state = WorkerState.BUSY if w.task is not None else WorkerState.IDLE
            return self._dispatch(now)
        self.dropped += 1
        return []

    def _register(self, conn, now) -> Outbound:
        wid = self._next_worker
        self._next_worker += 1
        self.workers[wid] = WorkerRecord(wid, conn, WorkerState.IDLE, now)
        self._by_conn[conn] = wid
        log.debug("worker %d registered", wid)
        out: Outbound = [(conn, InitData(wid, float(self.config.heartbeat_s), self.init_blob))]
        return out + self._dispatch(now)

    def _on_done(self, w: WorkerRecord, msg: TaskDone, now) -> Outbound:
        tid = msg.task_id
        if w.task == tid:
            w.task = None
            if w.state is WorkerState.BUSY:
                w.state = WorkerState.IDLE
        try:
            state = self.ledger.state(tid)
        except KeyError:
            # result for a task of an earlier epoch
            self.stale += 1
            return self._dispatch(now)

        out: Outbound = []
        if is_app_error(msg.result):
            if state is TaskState.ASSIGNED and self.ledger.holder(tid) == w.id:
                self.ledger.requeue_task(tid)
                self._check_poison(tid)
        elif state is TaskState.DONE:
            self.ledger.complete(TaskOutcome(tid, msg.result, msg.children))
        else:
            spec = self.ledger.spec(tid)
            kids = self.hooks.act_on_completed_task(spec, TaskOutcome(tid, msg.result, tuple(msg.children)))
            self.ledger.complete(TaskOutcome(tid, msg.result, tuple(kids)))
            self.tasks_per_worker[w.id] = self.tasks_per_worker.get(w.id, 0) + 1
            self.last_completion = now
            if self.ledger.all_done():
                out += self._end_epoch(now)
                if self.finished:
                    return out
        return out + self._dispatch(now)

    def _dispatch(self, now) -> Outbound:
        live = self._live()
        if not self.threshold_met:
            if len(live) < self.config.min_workers:
                return []
            self.threshold_met = True
        out: Outbound = []
        for w in live:
            if w.state is not WorkerState.IDLE:
                continue
            spec = self.ledger.next_assignable(w.id)
            if spec is None:
                break
            w.state = WorkerState.BUSY
            w.task = spec.id
            if self.first_dispatch is None:
                self.first_dispatch = now
            out.append((w.conn, AssignTask(spec.id, spec.parent, spec.payload)))
        return out

    def sweep_dead(self, now) -> list[int]:
        """Declare dead every worker silent for at least the death timeout."""
        timeout = self.config.death_timeout
        dead = []
        for wid, w in sorted(self.workers.items()):
            if w.state is WorkerState.DEAD:
                continue
            if now - w.last_heartbeat >= timeout:
                w.state = WorkerState.DEAD
                w.task = None
                dead.append(wid)
        for wid in dead:
            self.workers_died += 1
            requeued = self.ledger.requeue_worker(wid)
            log.info("worker %d declared dead, requeued %s", wid, requeued)
            for tid in requeued:
                self._check_poison(tid)
        return dead

    def _check_poison(self, tid: int) -> None:
        limit = self.config.max_attempts
        if limit is not None and self.ledger.attempts(tid) > limit:
            raise PoisonTask(
                f"task {tid} exceeded max_attempts={limit}; ledger: {self.ledger.snapshot()}"
            )

    def _check_stall(self, now) -> None:
        if self.finished:
            return
        live = self._live()
        starved = not live or (not self.threshold_met and len(live) < self.config.min_workers)
        if not starved:
            self._starved_since = None
            return
        if self._starved_since is None:
            self._starved_since = now
        elif now - self._starved_since >= self.config.stall_timeout_s:
            raise PoolStarved(
                f"no usable workers for {float(now - self._starved_since)} s "
                f"(live={len(live)}, min_workers={self.config.min_workers}); "
                f"ledger: {self.ledger.snapshot()}"
            )

    # -- reporting ---------------------------------------------------------

    def totals(self) -> dict[str, int]:
        t = dict(self._closed)
        if not self.finished:
            for k in t:
                t[k] += getattr(self.ledger, k)
        t["duplicates"] += self.stale
        return t

    def report(self) -> RunReport:
        t = self.totals()
        makespan = 0.0
        if self.first_dispatch is not None and self.last_completion is not None:
            makespan = float(self.last_completion - self.first_dispatch)
        return RunReport(
            epochs=self.epochs,
            created=t["created"],
            completed=t["completed"],
            reassigned=t["reassigned"],
            duplicates=t["duplicates"],
            makespan_s=makespan,
            workers_seen=len(self.workers),
            workers_died=self.workers_died,
            tasks_per_worker=dict(self.tasks_per_worker),
            dropped=self.dropped,
        )


def run_master(config: MasterConfig, hooks: AppHooks, transport) -> RunReport:
    """Drive a :class:`Master` from ``transport`` until the run is finished.

    ``transport`` provides ``now()``, ``events()`` (an iterator of
    :class:`Event`/:class:`Tick`) and ``send(conn, msg)``.
    """
    master = Master(config, hooks)
    for conn, msg in master.start(transport.now()):
        transport.send(conn, msg)
    if not master.finished:
        for ev in transport.events():
            for conn, msg in master.on_event(ev):
                transport.send(conn, msg)
            if master.finished:
                break
    return master.report()
