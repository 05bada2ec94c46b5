"""Run configuration: ``key = value`` files with flag overrides.

The defaults table below is the single source of defaults; ``mwpool
--print-defaults`` prints it. Command-line overrides always win over the
file. A line ``uniform density=<v>`` is accepted as a synonym for
``density = <v>``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping, Optional

from .master import MasterConfig
from .radtrans.grid import Grid, PhysicsParams
from .radtrans.io import read_density
from .transport import parse_endpoint

REQUIRED = object()

# key: (type, default, description)
DEFAULTS: dict[str, tuple[str, object, str]] = {
    "n": ("int", REQUIRED, "cells per grid axis"),
    "dx": ("float", 1.0, "cell edge length"),
    "source": ("vec3", None, "source position 'x y z' (default: grid center)"),
    "density": ("float", 1.0, "uniform hydrogen density"),
    "density_file": ("str", "", "raw little-endian binary64 density array (overrides density)"),
    "Q": ("float", REQUIRED, "ionizing photon rate of the source"),
    "sigma": ("float", REQUIRED, "photoionization cross-section"),
    "alpha": ("float", REQUIRED, "recombination coefficient"),
    "eps_cut": ("float", 1e-6, "ray cutoff as a fraction of the base-ray photon rate"),
    "f_split": ("float", 1.0, "footprint splitting factor"),
    "base_level": ("int", 1, "cube-map level of the base rays"),
    "tol": ("float", 1e-4, "convergence tolerance on max |dx|"),
    "max_epochs": ("int", 100, "epoch cap"),
    "min_workers": ("int", 1, "workers required before the first dispatch"),
    "heartbeat_s": ("float", 1.0, "heartbeat interval H"),
    "death_multiplier": ("float", 3.0, "death timeout in units of H"),
    "max_attempts": ("int", 0, "abort when a task is attempted more often (0: unlimited)"),
    "stall_timeout_s": ("float", 600.0, "abort after this long without usable workers"),
    "listen": ("str", "127.0.0.1:7477", "master endpoint HOST:PORT"),
    "latency_s": ("float", 0.0, "simulated per-message latency"),
    "task_cost_s": ("float", 1.0, "simulated cost of one ray-segment task"),
    "trace": ("str", "", "availability trace CSV for simulate"),
    "report": ("str", "", "report output path"),
    "output": ("str", "", "neutral-fraction binary64 output path"),
    "csv": ("str", "", "neutral-fraction CSV output path"),
}


class ConfigError(ValueError):
    def __init__(self, key: Optional[str], message: str, line: Optional[int] = None):
        where = f"line {line}: " if line is not None else ""
        super().__init__(f"{where}{message}")
        self.key = key
        self.line = line


def _convert(kind: str, text: str):
    if kind == "int":
        return int(text)
    if kind == "float":
        return float(text)
    if kind == "vec3":
        if not text:
            return None
        parts = text.replace(",", " ").split()
        if len(parts) != 3:
            raise ValueError("expected three numbers")
        return tuple(float(p) for p in parts)
    return text


def _format(kind: str, value) -> str:
    if value is None:
        return ""
    if kind == "float":
        return repr(float(value))
    if kind == "vec3":
        return " ".join(repr(float(v)) for v in value)
    return str(value)


@dataclass(frozen=True)
class RunConfig:
    """Merged configuration; build it with :func:`parse_config` so defaults apply."""

    n: int
    Q: float
    sigma: float
    alpha: float
    dx: float
    source: Optional[tuple[float, float, float]]
    density: float
    density_file: str
    eps_cut: float
    f_split: float
    base_level: int
    tol: float
    max_epochs: int
    min_workers: int
    heartbeat_s: float
    death_multiplier: float
    max_attempts: int
    stall_timeout_s: float
    listen: str
    latency_s: float
    task_cost_s: float
    trace: str
    report: str
    output: str
    csv: str

    def to_text(self) -> str:
        return "".join(
            f"{k} = {_format(DEFAULTS[k][0], getattr(self, k))}\n" for k in DEFAULTS
        )

    def master_config(self) -> MasterConfig:
        return MasterConfig(
            min_workers=self.min_workers,
            heartbeat_s=self.heartbeat_s,
            death_multiplier=self.death_multiplier,
            max_attempts=self.max_attempts or None,
            stall_timeout_s=self.stall_timeout_s,
            listen=parse_endpoint(self.listen),
        )

    def physics(self) -> PhysicsParams:
        return PhysicsParams(self.Q, self.sigma, self.alpha, self.eps_cut, self.f_split,
                             self.base_level, self.tol, self.max_epochs)

    def grid(self) -> Grid:
        if self.density_file:
            density = read_density(self.density_file, self.n)
        else:
            density = self.density
        return Grid(self.n, self.dx, density, source=self.source)


def _assign(values: dict, key: str, text: str, line) -> None:
    if key not in DEFAULTS:
        raise ConfigError(key, f"unknown key {key!r}", line)
    kind = DEFAULTS[key][0]
    try:
        values[key] = _convert(kind, text.strip())
    except ValueError:
        raise ConfigError(key, f"bad {kind} value for {key!r}: {text.strip()!r}", line) from None


def parse_config(text: str, overrides: Optional[Mapping[str, str]] = None) -> RunConfig:
    values: dict = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("uniform ") and "=" in line:
            line = line[len("uniform "):].strip()
        key, sep, value = line.partition("=")
        key = key.strip()
        if not sep or not key:
            raise ConfigError(None, f"expected 'key = value', got {raw.strip()!r}", lineno)
        if key in values:
            raise ConfigError(key, f"duplicate key {key!r}", lineno)
        _assign(values, key, value, lineno)
    for key, value in (overrides or {}).items():
        _assign(values, key, value, None)
    for key, (_, default, _) in DEFAULTS.items():
        if key not in values:
            if default is REQUIRED:
                raise ConfigError(key, f"missing required key {key!r}")
            values[key] = default
    try:
        return RunConfig(**values)
    except TypeError as exc:  # pragma: no cover - DEFAULTS and RunConfig out of sync
        raise ConfigError(None, str(exc)) from exc


def load_config(path: str, overrides: Optional[Mapping[str, str]] = None) -> RunConfig:
    with open(path, encoding="utf-8") as fh:
        return parse_config(fh.read(), overrides)


def defaults_text() -> str:
    rows = []
    for key, (kind, default, doc) in DEFAULTS.items():
        shown = "(required)" if default is REQUIRED else _format(kind, default) or "(unset)"
        rows.append(f"{key:<18} {kind:<6} {shown:<16} {doc}")
    return "\n".join(rows) + "\n"

