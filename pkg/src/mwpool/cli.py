"""Command-line entry points.

Exit codes: 0 success, 1 usage, 2 configuration error, 3 runtime failure,
4 physics did not converge.
"""

from __future__ import annotations

import argparse
import json
import logging
import math
import sys
from typing import Optional, Sequence

from .churn import (
    AvailabilityTrace,
    SimulationStalled,
    TraceError,
    fixed_pool,
    load_trace,
    simulate,
    synth_trace,
    validate,
)
from .config import ConfigError, RunConfig, defaults_text, load_config, parse_config
from .master import RunAborted, run_master
from .radtrans import PhotoionizationApp, run_photoionization
from .radtrans.io import write_array, write_csv
from .synthetic import SyntheticApp
from .transport import SocketMasterTransport, parse_endpoint
from .worker import run_worker

EXIT_OK, EXIT_USAGE, EXIT_CONFIG, EXIT_RUNTIME, EXIT_NOCONVERGE = 0, 1, 2, 3, 4

APPS = {"stromgren": PhotoionizationApp, "synthetic": SyntheticApp}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _parse_synth(text: str) -> dict:
    keys = {"n": int, "spread": float, "uptime": float, "seed": int}
    out = {}
    for part in text.split(","):
        key, sep, value = part.partition("=")
        key = key.strip()
        if not sep or key not in keys:
            raise ConfigError(key or None, f"bad --synth item {part!r}; expected n=,spread=,uptime=,seed=")
        try:
            out[key] = keys[key](value)
        except ValueError:
            raise ConfigError(key, f"bad --synth value for {key!r}: {value!r}") from None
    missing = set(keys) - set(out)
    if missing:
        raise ConfigError(sorted(missing)[0], f"--synth is missing {', '.join(sorted(missing))}")
    return out


def _overrides(args) -> dict[str, str]:
    out = {}
    for item in getattr(args, "set", None) or []:
        key, sep, value = item.partition("=")
        if not sep:
            raise UsageError(f"--set expects key=value, got {item!r}")
        out[key.strip()] = value
    for flag in ("listen", "trace", "report", "output", "csv"):
        value = getattr(args, flag, None)
        if value:
            out[flag] = value
    return out


def _write_outputs(cfg: RunConfig, grid, text: str, json_text: Optional[str], want_json: bool) -> None:
    if cfg.output:
        write_array(cfg.output, grid.neutral)
    if cfg.csv:
        write_csv(cfg.csv, grid)
    if cfg.report:
        with open(cfg.report, "w", encoding="utf-8") as fh:
            fh.write(text)
        if want_json and json_text is not None:
            with open(cfg.report + ".json", "w", encoding="utf-8") as fh:
                fh.write(json_text + "\n")
    elif want_json and json_text is not None:
        print(json_text)
    else:
        sys.stdout.write(text)


def _physics_run(cfg: RunConfig, driver, want_json: bool) -> int:
    grid = cfg.grid()
    final, report, _ = run_photoionization(grid, cfg.physics(), driver, cfg.task_cost_s)
    pool = report.pool
    text = pool.to_text() + report.to_text()
    json_text = None
    if want_json:
        d = json.loads(pool.to_json())
        d.update(converged=report.converged, physics_epochs=report.epochs,
                 ionized_radius=report.ionized_radius, stromgren_radius=report.stromgren_radius)
        json_text = json.dumps(d, sort_keys=True)
    _write_outputs(cfg, final, text, json_text, want_json)
    return EXIT_OK if report.converged else EXIT_NOCONVERGE


def cmd_simulate(args) -> int:
    cfg = load_config(args.config, _overrides(args))
    if args.synth:
        s = _parse_synth(args.synth)
        trace = synth_trace(s["n"], s["spread"], s["uptime"], s["seed"])
    elif cfg.trace:
        with open(cfg.trace, encoding="utf-8") as fh:
            trace = load_trace(fh.read())
    else:
        raise ConfigError("trace", "simulate needs --trace FILE, --synth ..., or a 'trace' key")
    mc = cfg.master_config()
    return _physics_run(cfg, lambda hooks: simulate(mc, hooks, trace, cfg.latency_s), args.json)


def cmd_master(args) -> int:
    cfg = load_config(args.config, _overrides(args))
    mc = cfg.master_config()
    host, port = mc.listen

    def driver(hooks):
        transport = SocketMasterTransport(host, port, tick_s=mc.heartbeat_s)
        logging.getLogger(__name__).info("master listening on %s:%d", *transport.address)
        try:
            return run_master(mc, hooks, transport)
        finally:
            transport.close()

    return _physics_run(cfg, driver, args.json)


def cmd_worker(args) -> int:
    return run_worker(parse_endpoint(args.connect), APPS[args.app]())


def demo_trace(workers: int, churn_seed: Optional[int]) -> AvailabilityTrace:
    """Fixed pool, or churning workers plus one permanent anchor worker.

    The anchor guarantees the run terminates whatever the random trace does.
    """
    if churn_seed is None:
        return fixed_pool(workers)
    churny = synth_trace(workers * 100, 20_000.0, 200.0, churn_seed)
    anchor = fixed_pool(1).events[0]
    events = list(churny.events) + [type(anchor)(anchor.time_s, "anchor", anchor.kind, len(churny.events) + 1)]
    return validate(events)


def demo_config(n: int) -> RunConfig:
    r_s = n / 4
    q = 4 * math.pi / 3 * r_s**3
    return parse_config(f"n = {n}\nQ = {q!r}\nsigma = 1.0\nalpha = 1.0\ntol = 1e-4\n")


def cmd_demo(args) -> int:
    if args.scenario != "stromgren":
        raise UsageError(f"unknown demo {args.scenario!r}")
    if args.n < 4 or args.workers < 1:
        raise UsageError("demo needs --n >= 4 and --workers >= 1")
    cfg = demo_config(args.n)
    trace = demo_trace(args.workers, args.churn)
    mc = cfg.master_config()
    return _physics_run(cfg, lambda hooks: simulate(mc, hooks, trace), args.json)


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="mwpool", description=__doc__.splitlines()[0])
    p.add_argument("--print-defaults", action="store_true", help="print the configuration defaults table")
    p.add_argument("-v", "--verbose", action="count", default=0)
    sub = p.add_subparsers(dest="command", parser_class=_Parser)

    m = sub.add_parser("master", help="run a master over TCP")
    m.add_argument("--config", required=True)
    m.add_argument("--listen")
    m.add_argument("--report")
    m.add_argument("--output")
    m.add_argument("--csv")
    m.add_argument("--set", action="append", metavar="KEY=VALUE")
    m.add_argument("--json", action="store_true")
    m.set_defaults(func=cmd_master)

    w = sub.add_parser("worker", help="run a worker connected to a master")
    w.add_argument("--connect", required=True, metavar="HOST:PORT")
    w.add_argument("--app", choices=sorted(APPS), default="stromgren")
    w.set_defaults(func=cmd_worker)

    s = sub.add_parser("simulate", help="replay an availability trace under a virtual clock")
    s.add_argument("--config", required=True)
    g = s.add_mutually_exclusive_group()
    g.add_argument("--trace")
    g.add_argument("--synth", metavar="n=..,spread=..,uptime=..,seed=..")
    s.add_argument("--app", choices=["stromgren"], default="stromgren")
    s.add_argument("--report")
    s.add_argument("--output")
    s.add_argument("--csv")
    s.add_argument("--set", action="append", metavar="KEY=VALUE")
    s.add_argument("--json", action="store_true")
    s.set_defaults(func=cmd_simulate)

    d = sub.add_parser("demo", help="run a bundled scenario in simulation")
    d.add_argument("scenario", choices=["stromgren"])
    d.add_argument("--n", type=int, default=32)
    d.add_argument("--workers", type=int, default=8)
    d.add_argument("--churn", type=int, metavar="SEED")
    d.add_argument("--json", action="store_true")
    d.set_defaults(func=cmd_demo)
    return p


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        logging.basicConfig(level=logging.WARNING - 10 * args.verbose, format="%(levelname)s %(name)s: %(message)s")
        if args.print_defaults:
            sys.stdout.write(defaults_text())
            return EXIT_OK
        if not args.command:
            raise UsageError("a subcommand is required: master, worker, simulate or demo")
        return args.func(args)
    except UsageError as exc:
        print(f"mwpool: usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (ConfigError, TraceError) as exc:
        print(f"mwpool: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (SimulationStalled, RunAborted) as exc:
        print(f"mwpool: runtime failure: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    except (OSError, ValueError) as exc:
        print(f"mwpool: runtime failure: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
