"""Adaptive ray-traced photoionization equilibrium on a 3D grid."""

from .app import IterationReport, PhotoionizationApp, run_photoionization
from .equilibrium import (
    apply_deltas,
    equilibrium_update,
    ionized_radius,
    solve_neutral_fraction,
    stromgren_radius,
)
from .geometry import RayAddress, children, pixel_direction, pixel_solid_angle, split_check
from .grid import Grid, PhysicsParams
from .tracing import GridDelta, RaySegmentTask, trace_segment

__all__ = [
    "Grid",
    "GridDelta",
    "IterationReport",
    "PhotoionizationApp",
    "PhysicsParams",
    "RayAddress",
    "RaySegmentTask",
    "apply_deltas",
    "children",
    "equilibrium_update",
    "ionized_radius",
    "pixel_direction",
    "pixel_solid_angle",
    "run_photoionization",
    "solve_neutral_fraction",
    "split_check",
    "stromgren_radius",
    "trace_segment",
]
