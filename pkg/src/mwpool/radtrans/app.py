"""Photoionization equilibrium as a master-worker application."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from ..master import AppHooks, MasterConfig
from ..tasks import TaskOutcome, TaskSpec
from .equilibrium import apply_deltas, equilibrium_update, ionized_radius, stromgren_radius
from .grid import Grid, PhysicsParams, Snapshot, decode_snapshot, encode_snapshot
from .tracing import GridDelta, RaySegmentTask, base_tasks, trace_segment

log = logging.getLogger(__name__)


class PhotoionizationApp(AppHooks):
    """Master side owns ``grid``; worker side only needs the init blob.

    Each epoch casts every base ray against the epoch-start grid, folds the
    sparse deltas in ray-address order and solves the per-cell balance.
    """

    def __init__(self, grid: Optional[Grid] = None, params: Optional[PhysicsParams] = None,
                 task_cost_s: float = 1.0):
        self.grid = grid
        self.params = params
        self.task_cost_s = task_cost_s
        self.epoch = 0
        self.converged = False
        self.history: list[float] = []
        self.hits: Optional[np.ndarray] = None
        self.degenerate = 0
        self.delta_bytes: list[int] = []
        self._deltas: dict[tuple, np.ndarray] = {}
        self._blob: Optional[bytes] = None
        self._snap_cache: tuple[bytes, Snapshot] | None = None

    # master side

    def _base_payloads(self) -> list[bytes]:
        return [t.encode() for t in base_tasks(self.grid, self.params)]

    def setup_initial_tasks(self) -> list[bytes]:
        return self._base_payloads()

    def pack_worker_init_data(self) -> bytes:
        if self._blob is None:
            self._blob = encode_snapshot(self.grid, self.params)
        return self._blob

    def act_on_completed_task(self, spec: TaskSpec, outcome: TaskOutcome):
        task = RaySegmentTask.decode(spec.payload)
        arr = GridDelta.decode_array(outcome.result_payload)
        if not len(arr) and not outcome.children_payloads and task.photons > 0:
            self.degenerate += 1
        self._deltas[task.addr] = arr
        self.delta_bytes.append(len(outcome.result_payload))
        return outcome.children_payloads

    def epoch_done(self) -> bool:
        absorbed, self.hits = apply_deltas(self.grid.n, self._deltas.items())
        self._deltas = {}
        x_new, change = equilibrium_update(self.grid, absorbed, self.params)
        self.grid.neutral = x_new
        self._blob = None
        self.epoch += 1
        self.history.append(change)
        log.info("epoch %d: max |dx| = %.3g", self.epoch, change)
        self.converged = change < self.params.tol
        return self.converged or self.epoch >= self.params.max_epochs

    def next_epoch(self) -> list[bytes]:
        self.delta_bytes = []
        return self._base_payloads()

    def task_cost(self, payload: bytes) -> float:
        return self.task_cost_s

    # worker side

    def snapshot(self, init_data: bytes) -> Snapshot:
        cached = self._snap_cache
        if cached is None or cached[0] != init_data:
            cached = self._snap_cache = (init_data, decode_snapshot(init_data))
        return cached[1]

    def execute_task(self, init_data: bytes, payload: bytes):
        snap = self.snapshot(init_data)
        delta, kids = trace_segment(snap, snap.params, RaySegmentTask.decode(payload))
        return delta.encode(), [k.encode() for k in kids]


@dataclass
class IterationReport:
    epochs: int
    converged: bool
    max_change: list[float]
    ionized_radius: float
    stromgren_radius: Optional[float]
    pool: object = None
    extra: dict = field(default_factory=dict)

    def to_text(self) -> str:
        lines = [
            f"converged={int(self.converged)}",
            f"physics_epochs={self.epochs}",
            f"final_max_change={self.max_change[-1]!r}" if self.max_change else "final_max_change=nan",
            f"ionized_radius={self.ionized_radius!r}",
        ]
        if self.stromgren_radius is not None:
            lines.append(f"stromgren_radius={self.stromgren_radius!r}")
        return "\n".join(lines) + "\n"


Driver = Callable[[AppHooks], object]


def default_driver(hooks: AppHooks):
    from ..churn import fixed_pool, simulate

    return simulate(MasterConfig(), hooks, fixed_pool(1))


def run_photoionization(grid: Grid, params: PhysicsParams, driver: Driver = default_driver,
                        task_cost_s: float = 1.0) -> tuple[Grid, IterationReport, PhotoionizationApp]:
    """Iterate ray casting and equilibrium updates until converged or ``max_epochs``.

    ``driver`` runs the app over a pool (simulated, or a socket master) and
    returns its report. The input grid is not modified.
    """
    app = PhotoionizationApp(grid.copy(), params, task_cost_s)
    pool = driver(app)
    final = app.grid
    density = final.density
    rs = None
    if density.size and np.all(density == density.flat[0]) and density.flat[0] > 0 and params.Q > 0:
        rs = stromgren_radius(params.Q, params.alpha, float(density.flat[0]))
    if not app.converged:
        log.warning("no convergence after %d epochs (last max change %.3g)", app.epoch, app.history[-1])
    report = IterationReport(app.epoch, app.converged, list(app.history), ionized_radius(final), rs, pool)
    return final, report, app
