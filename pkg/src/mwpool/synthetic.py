"""Synthetic workload: equal-cost tasks with optional fan-out and epochs."""

from __future__ import annotations

import hashlib
import struct

from .master import AppHooks
from .tasks import TaskOutcome, TaskSpec

_TASK = struct.Struct("<IIB")  # epoch, index, depth


class SyntheticApp(AppHooks):
    """``n_tasks`` root tasks per epoch; each spawns ``fanout`` children down to ``depth``.

    Results are a digest of the payload, and the master keeps every result
    keyed by payload so runs under different schedules can be compared.
    """

    def __init__(self, n_tasks: int = 4, cost_s: float = 1.0, fanout: int = 0, depth: int = 0,
                 epochs: int = 1, fail_index: int = -1):
        self.n_tasks = n_tasks
        self.cost_s = cost_s
        self.fanout = fanout
        self.depth = depth
        self.epochs = epochs
        self.fail_index = fail_index
        self.epoch = 0
        self.results: dict[bytes, bytes] = {}

    def _roots(self) -> list[bytes]:
        return [_TASK.pack(self.epoch, i, 0) for i in range(self.n_tasks)]

    def setup_initial_tasks(self) -> list[bytes]:
        return self._roots()

    def pack_worker_init_data(self) -> bytes:
        return struct.pack("<I", self.epoch)

    def execute_task(self, init_data: bytes, payload: bytes):
        epoch, index, depth = _TASK.unpack(payload)
        if index == self.fail_index:
            raise ValueError(f"task index {index} is configured to fail")
        result = hashlib.sha256(init_data + payload).digest()
        children = []
        if depth < self.depth:
            children = [_TASK.pack(epoch, index * self.fanout + k, depth + 1) for k in range(self.fanout)]
        return result, children

    def act_on_completed_task(self, spec: TaskSpec, outcome: TaskOutcome):
        self.results[spec.payload] = outcome.result_payload
        return outcome.children_payloads

    def task_cost(self, payload: bytes) -> float:
        return self.cost_s

    def epoch_done(self) -> bool:
        self.epoch += 1
        return self.epoch >= self.epochs

    def next_epoch(self) -> list[bytes]:
        return self._roots()
