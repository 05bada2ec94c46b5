"""Worker runtime: register, receive init data, execute tasks, heartbeat."""

from __future__ import annotations

import logging
import os
import threading
import time
from typing import Optional

from .master import AppHooks
from .protocol import AssignTask, Heartbeat, Hello, InitData, Shutdown, TaskDone
from .tasks import APP_ERROR, TaskOutcome, TaskSpec
from .transport import SocketChannel, parse_endpoint

log = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_RETRIABLE = 3
HEARTBEAT_ENV = "MW_HEARTBEAT_OVERRIDE_S"


def execute_task(hooks: AppHooks, init_data: bytes, spec: TaskSpec) -> TaskOutcome:
    """Run one task through the application hook.

    Any failure inside the hook becomes an outcome whose result carries the
    application-error marker; the master treats it as a failed attempt.
    """
    try:
        result, children = hooks.execute_task(init_data, spec.payload)
    except Exception as exc:  # noqa: BLE001 - reported to the master, not raised
        log.warning("task %d failed: %s", spec.id, exc)
        return TaskOutcome(spec.id, APP_ERROR + repr(exc).encode("utf-8", "replace"))
    return TaskOutcome(spec.id, bytes(result), tuple(bytes(c) for c in children))


class WorkerRuntime:
    def __init__(self, channel, hooks: AppHooks, heartbeat_override: Optional[float] = None):
        self.channel = channel
        self.hooks = hooks
        self.worker_id: Optional[int] = None
        self.init_data = b""
        self.heartbeat_s: Optional[float] = None
        self.current: Optional[TaskSpec] = None
        self.tasks_done = 0
        self.heartbeats_sent = 0
        self._override = heartbeat_override
        self._stop = threading.Event()
        self._hb_thread: Optional[threading.Thread] = None
        self._t0 = time.monotonic()

    def _heartbeat_loop(self) -> None:
        while not self._stop.wait(self.heartbeat_s):
            try:
                self.channel.send(Heartbeat(self.worker_id, time.monotonic() - self._t0))
            except OSError:
                return
            self.heartbeats_sent += 1

    def _start_heartbeats(self) -> None:
        if self._hb_thread is not None:
            return
        self._hb_thread = threading.Thread(target=self._heartbeat_loop, name="mw-heartbeat", daemon=True)
        self._hb_thread.start()

    def run(self) -> int:
        try:
            self.channel.send(Hello())
            while True:
                msg = self.channel.recv()
                if isinstance(msg, InitData):
                    self.worker_id = msg.worker_id
                    self.init_data = msg.blob
                    self.heartbeat_s = self._override or msg.heartbeat_s
                    self._start_heartbeats()
                elif isinstance(msg, AssignTask):
                    self.current = TaskSpec(msg.task_id, msg.parent, msg.payload)
                    out = execute_task(self.hooks, self.init_data, self.current)
                    self.channel.send(TaskDone(out.id, out.result_payload, out.children_payloads))
                    self.current = None
                    self.tasks_done += 1
                elif isinstance(msg, Shutdown):
                    return EXIT_OK
                else:
                    log.warning("ignoring unexpected %s", type(msg).__name__)
        except (ConnectionError, OSError) as exc:
            log.warning("connection lost: %s", exc)
            return EXIT_RETRIABLE
        finally:
            self._stop.set()
            if self._hb_thread is not None:
                self._hb_thread.join(timeout=5)


def run_worker(endpoint, hooks: AppHooks) -> int:
    """Connect to a master at ``endpoint`` ("HOST:PORT" or a tuple) and serve tasks."""
    host, port = parse_endpoint(endpoint) if isinstance(endpoint, str) else endpoint
    override = os.environ.get(HEARTBEAT_ENV)
    try:
        channel = SocketChannel.connect(host, port)
    except OSError as exc:
        log.error("cannot connect to %s:%s: %s", host, port, exc)
        return EXIT_RETRIABLE
    try:
        return WorkerRuntime(channel, hooks, float(override) if override else None).run()
    finally:
        channel.close()
