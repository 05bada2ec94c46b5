"""Master-worker computing on an opportunistic pool of workstations."""

from .master import AppHooks, Master, MasterConfig, RunReport, run_master
from .tasks import TaskLedger, TaskOutcome, TaskSpec

__version__ = "0.1.0"

__all__ = [
    "AppHooks",
    "Master",
    "MasterConfig",
    "RunReport",
    "TaskLedger",
    "TaskOutcome",
    "TaskSpec",
    "run_master",
]
