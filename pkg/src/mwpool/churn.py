"""Deterministic discrete-event simulation of an opportunistic worker pool.

A trace of join/suspend/resume/evict events drives simulated workers that
talk to a real :class:`~mwpool.master.Master` under a virtual clock. Times
are :class:`fractions.Fraction` values advanced by addition only, so event
ordering is exact and platform independent.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from enum import Enum
from fractions import Fraction
from typing import Optional

from .master import (
    AppHooks,
    Event,
    Master,
    MasterConfig,
    PoolStarved,
    REPORT_KEYS,
    RunReport,
    Tick,
    format_value,
)
from .protocol import AssignTask, Heartbeat, Hello, InitData, Message, Resume, Shutdown, Suspend, TaskDone
from .tasks import TaskSpec
from .transport import EventQueue, wire
from .worker import execute_task


class Kind(Enum):
    JOIN = "join"
    SUSPEND = "suspend"
    RESUME = "resume"
    EVICT = "evict"


class TraceError(ValueError):
    def __init__(self, line: int, message: str):
        super().__init__(f"line {line}: {message}")
        self.line = line


class SimulationStalled(RuntimeError):
    pass


@dataclass(frozen=True)
class AvailabilityEvent:
    time_s: Fraction
    worker_label: str
    kind: Kind
    line: int = 0


@dataclass(frozen=True)
class AvailabilityTrace:
    events: tuple[AvailabilityEvent, ...]

    def labels(self) -> list[str]:
        return sorted({e.worker_label for e in self.events})

    def to_csv(self) -> str:
        return "".join(f"{_fmt_time(e.time_s)},{e.worker_label},{e.kind.value}\n" for e in self.events)


def _fmt_time(t: Fraction) -> str:
    if t.denominator == 1:
        return str(t.numerator)
    return _decimal(t)


def _decimal(t: Fraction) -> str:
    # trace times come from decimal text or dyadic floats, so this terminates
    digits = 0
    scaled = t
    while scaled.denominator != 1:
        scaled *= 10
        digits += 1
    sign = "-" if scaled < 0 else ""
    s = str(abs(scaled.numerator)).rjust(digits + 1, "0")
    return f"{sign}{s[:-digits]}.{s[-digits:]}"


def _parse_time(text: str) -> Fraction:
    t = Fraction(text.strip())
    if t < 0:
        raise ValueError("negative time")
    return t


def validate(events: list[AvailabilityEvent]) -> AvailabilityTrace:
    """Sort by (time, line order) and check per-label sequencing."""
    ordered = sorted(events, key=lambda e: (e.time_s, e.line))
    status: dict[str, str] = {}
    for e in ordered:
        st = status.get(e.worker_label)
        if e.kind is Kind.JOIN:
            if st is not None:
                raise TraceError(e.line, f"{e.worker_label} joins twice")
            status[e.worker_label] = "up"
        elif st is None:
            raise TraceError(e.line, f"{e.kind.value} for {e.worker_label} before its join")
        elif st == "gone":
            raise TraceError(e.line, f"{e.kind.value} for {e.worker_label} after its eviction")
        elif e.kind is Kind.SUSPEND:
            if st == "suspended":
                raise TraceError(e.line, f"{e.worker_label} suspended twice")
            status[e.worker_label] = "suspended"
        elif e.kind is Kind.RESUME:
            if st != "suspended":
                raise TraceError(e.line, f"resume for {e.worker_label} without a suspend")
            status[e.worker_label] = "up"
        else:
            status[e.worker_label] = "gone"
    return AvailabilityTrace(tuple(ordered))


def load_trace(text: str) -> AvailabilityTrace:
    """Parse ``time_s,worker_label,kind`` CSV lines; ``#`` starts a comment."""
    events = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = [p.strip() for p in line.split(",")]
        if len(parts) != 3:
            raise TraceError(lineno, f"expected 3 fields, got {len(parts)}")
        t, label, kind = parts
        try:
            time_s = _parse_time(t)
        except ValueError:
            raise TraceError(lineno, f"bad time {t!r}") from None
        if not label:
            raise TraceError(lineno, "empty worker label")
        try:
            k = Kind(kind.lower())
        except ValueError:
            raise TraceError(lineno, f"unknown event kind {kind!r}") from None
        events.append(AvailabilityEvent(time_s, label, k, lineno))
    return validate(events)


class SplitMix64:
    """The SplitMix64 generator (Steele, Lea & Flood), chosen for stable output across platforms."""

    MASK = (1 << 64) - 1

    def __init__(self, seed: int):
        self.state = seed & self.MASK

    def next_u64(self) -> int:
        self.state = (self.state + 0x9E3779B97F4A7C15) & self.MASK
        z = self.state
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & self.MASK
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & self.MASK
        return z ^ (z >> 31)

    def uniform(self) -> float:
        """Uniform in [0, 1) with 53 random bits."""
        return (self.next_u64() >> 11) * (1.0 / (1 << 53))


def _micro(t: float) -> Fraction:
    return Fraction(round(t * 1_000_000), 1_000_000)


def synth_trace(n_workers: int, join_spread_s: float, mean_uptime_s: float, seed: int) -> AvailabilityTrace:
    """Pseudo-random churn trace.

    Worker ``wNNN`` joins at a uniform time in ``[0, join_spread_s)`` and is
    evicted after an exponentially distributed uptime with the given mean.
    ``mean_uptime_s == 0`` means workers never leave. Times are rounded to
    the microsecond.
    """
    if n_workers < 0 or join_spread_s < 0 or mean_uptime_s < 0:
        raise ValueError("synth_trace parameters must be non-negative")
    rng = SplitMix64(seed)
    width = max(3, len(str(max(n_workers - 1, 0))))
    events = []
    line = 0
    for i in range(n_workers):
        label = f"w{i:0{width}d}"
        join = _micro(rng.uniform() * join_spread_s)
        line += 1
        events.append(AvailabilityEvent(join, label, Kind.JOIN, line))
        u = rng.uniform()
        if mean_uptime_s > 0:
            up = _micro(-mean_uptime_s * math.log1p(-u))
            line += 1
            events.append(AvailabilityEvent(join + max(up, Fraction(1, 1_000_000)), label, Kind.EVICT, line))
    return validate(events)


@dataclass
class SimReport:
    run: RunReport
    busy_s: dict[str, float] = field(default_factory=dict)

    @property
    def makespan_s(self) -> float:
        return self.run.makespan_s

    @property
    def tasks_completed(self) -> int:
        return self.run.completed

    @property
    def tasks_reassigned(self) -> int:
        return self.run.reassigned

    @property
    def duplicates(self) -> int:
        return self.run.duplicates

    def to_text(self) -> str:
        lines = self.run.to_text()
        lines += f"tasks_completed={self.tasks_completed}\ntasks_reassigned={self.tasks_reassigned}\n"
        lines += "".join(f"busy_s.{k}={format_value(v)}\n" for k, v in sorted(self.busy_s.items()))
        return lines

    def to_json(self) -> str:
        d = self.run.to_dict()
        d["tasks_completed"] = self.tasks_completed
        d["tasks_reassigned"] = self.tasks_reassigned
        d["busy_s"] = dict(sorted(self.busy_s.items()))
        return json.dumps(d, sort_keys=True)


_RANK = {Kind.JOIN: 0, "deliver": 1, "finish": 1, "heartbeat": 2, Kind.SUSPEND: 3, Kind.RESUME: 3, Kind.EVICT: 3}


@dataclass
class _SimWorker:
    label: str
    alive: bool = True
    suspended: bool = False
    worker_id: int = 0
    init_data: bytes = b""
    task: Optional[TaskSpec] = None
    task_init: bytes = b""
    remaining: Fraction = Fraction(0)
    started: Optional[Fraction] = None
    token: int = 0
    busy: Fraction = Fraction(0)
    heartbeats: list = field(default_factory=list)


class _Simulation:
    def __init__(self, config: MasterConfig, hooks: AppHooks, trace: AvailabilityTrace,
                 latency_s: float = 0.0, record_heartbeats: bool = False):
        self.config = config
        self.hooks = hooks
        self.master = Master(config, hooks)
        self.queue = EventQueue()
        self.workers: dict[str, _SimWorker] = {}
        self.h = Fraction(config.heartbeat_s)
        self.latency = Fraction(latency_s)
        self.record_heartbeats = record_heartbeats
        self.now = Fraction(0)
        for e in trace.events:
            self.queue.enqueue(e.time_s, (0, e.worker_label, _RANK[e.kind], e.line), ("trace", e))

    # master <-> worker plumbing

    def _to_master(self, label: str, msg: Message) -> None:
        if self.latency:
            self.queue.enqueue(self.now + self.latency, (0, label, 1, 0), ("to_master", label, msg))
        else:
            self._master_event(Event(self.now, label, wire(msg)))

    def _master_event(self, ev) -> None:
        for conn, msg in self.master.on_event(ev):
            self._to_worker(conn, msg)

    def _to_worker(self, label: str, msg: Message) -> None:
        if self.latency:
            self.queue.enqueue(self.now + self.latency, (0, label, 1, 0), ("to_worker", label, msg))
        else:
            self._worker_receive(self.workers[label], wire(msg))

    def _worker_receive(self, w: _SimWorker, msg: Message) -> None:
        if not w.alive:
            return
        if isinstance(msg, InitData):
            w.worker_id = msg.worker_id
            w.init_data = msg.blob
        elif isinstance(msg, AssignTask):
            w.task = TaskSpec(msg.task_id, msg.parent, msg.payload)
            w.task_init = w.init_data
            w.remaining = Fraction(self.hooks.task_cost(msg.payload))
            w.token += 1
            if not w.suspended:
                self._start(w)
        elif isinstance(msg, Shutdown):
            w.alive = False

    def _start(self, w: _SimWorker) -> None:
        w.started = self.now
        self.queue.enqueue(self.now + w.remaining, (0, w.label, _RANK["finish"], 0), ("finish", w.label, w.token))

    def _pause(self, w: _SimWorker) -> None:
        if w.task is not None and w.started is not None:
            ran = self.now - w.started
            w.busy += ran
            w.remaining -= ran
            w.started = None
            w.token += 1

    # event handlers

    def _trace(self, e: AvailabilityEvent) -> None:
        label = e.worker_label
        if e.kind is Kind.JOIN:
            w = self.workers[label] = _SimWorker(label)
            self._to_master(label, Hello())
            self._schedule_heartbeat(w)
            return
        w = self.workers[label]
        if not w.alive:
            return
        if e.kind is Kind.SUSPEND:
            w.suspended = True
            self._pause(w)
            self._to_master(label, Suspend())
        elif e.kind is Kind.RESUME:
            w.suspended = False
            self._to_master(label, Resume())
            if w.task is not None:
                self._start(w)
        else:
            self._pause(w)
            w.alive = False

    def _schedule_heartbeat(self, w: _SimWorker) -> None:
        self.queue.enqueue(self.now + self.h, (0, w.label, _RANK["heartbeat"], 0), ("heartbeat", w.label))

    def _heartbeat(self, label: str) -> None:
        w = self.workers[label]
        if not w.alive:
            return
        if self.record_heartbeats:
            w.heartbeats.append(self.now)
        self._to_master(label, Heartbeat(w.worker_id, float(self.now)))
        self._schedule_heartbeat(w)

    def _finish(self, label: str, token: int) -> None:
        w = self.workers[label]
        if not w.alive or token != w.token or w.task is None:
            return
        w.busy += self.now - w.started
        w.started = None
        out = execute_task(self.hooks, w.task_init, w.task)
        w.task = None
        self._to_master(label, TaskDone(out.id, out.result_payload, out.children_payloads))

    def run(self) -> SimReport:
        for conn, msg in self.master.start(self.now):
            self._to_worker(conn, msg)
        self.queue.enqueue(self.h, (1, "", 0, 0), ("tick",))
        while not self.master.finished:
            if not len(self.queue):
                raise SimulationStalled(f"event queue drained at t={float(self.now)}; ledger: {self.master.ledger.snapshot()}")
            t, _, item = self.queue.dequeue()
            self.now = t
            kind = item[0]
            try:
                if kind == "trace":
                    self._trace(item[1])
                elif kind == "heartbeat":
                    self._heartbeat(item[1])
                elif kind == "finish":
                    self._finish(item[1], item[2])
                elif kind == "tick":
                    self._master_event(Tick(self.now))
                    self.queue.enqueue(self.now + self.h, (1, "", 0, 0), ("tick",))
                elif kind == "to_master":
                    self._master_event(Event(self.now, item[1], wire(item[2])))
                elif kind == "to_worker":
                    self._worker_receive(self.workers[item[1]], wire(item[2]))
            except PoolStarved as exc:
                raise SimulationStalled(f"t={float(self.now)}: {exc}") from exc
        busy = {label: float(w.busy) for label, w in self.workers.items()}
        return SimReport(self.master.report(), busy)


def simulate(config: MasterConfig, hooks: AppHooks, trace: AvailabilityTrace,
             latency_s: float = 0.0) -> SimReport:
    """Replay ``trace`` against a master running ``hooks`` under a virtual clock."""
    return _Simulation(config, hooks, trace, latency_s).run()


def fixed_pool(n_workers: int, at: float = 0.0) -> AvailabilityTrace:
    """Trace in which ``n_workers`` workers join at ``at`` and never leave."""
    width = max(3, len(str(max(n_workers - 1, 0))))
    t = Fraction(at)
    return validate([AvailabilityEvent(t, f"w{i:0{width}d}", Kind.JOIN, i + 1) for i in range(n_workers)])


__all__ = [
    "AvailabilityEvent",
    "AvailabilityTrace",
    "Kind",
    "REPORT_KEYS",
    "SimReport",
    "SimulationStalled",
    "SplitMix64",
    "TraceError",
    "fixed_pool",
    "load_trace",
    "simulate",
    "synth_trace",
]
