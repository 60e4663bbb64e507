"""Command-line front end.

    evcruise simulate    --scenario sc2 --controller nn --out runs/nn
    evcruise tune        --scenario sc1 --seed 3 --out runs/ga
    evcruise build-table --grid "0,10,20,30/-10,0,10/-10,0,15" --out runs/table
    evcruise sweep       --h 4 10 --lr 0.01 0.8 --gains "GA-PID(Sc1)=runs/ga/gains.csv"

Exit codes: 0 success, 1 configuration or usage error, 2 simulation error,
3 gain-table node failure.  Diagnostics go to stderr, data to files.
"""

from __future__ import annotations

import argparse
import logging
import sys
from dataclasses import replace
from pathlib import Path

from . import __version__
from .config import CONTROLLERS, ConfigError, RunConfig, load_config, parse_grid, resolve_scenario
from .ga import (
    GAINS_HEADER,
    build_gain_table,
    optimize,
    read_gains,
    scenario_evaluator,
    write_gains,
    write_history,
)
from .harness import (
    Metrics,
    Scenario,
    SimulationError,
    run_closed_loop,
    scenario_metrics,
    write_metrics,
    write_nn_trace,
    write_trace,
)
from .table import TABLE_HEADER, read_gain_table, write_gain_table

log = logging.getLogger("evcruise")

EXIT_CONFIG = 1
EXIT_SIMULATION = 2
EXIT_NODE_FAILURE = 3


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", type=Path, help="TOML run configuration")
    p.add_argument("--seed", type=int, help="random seed (GA, or NN weight init)")
    p.add_argument("--out", type=Path, help="output directory")
    p.add_argument("--ts", type=float, help="control period in seconds")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="evcruise", description=__doc__.split("\n")[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="run one closed-loop scenario")
    _common(p)
    p.add_argument("--scenario", help="built-in scenario name (default: config, else sc1)")
    p.add_argument("--controller", choices=CONTROLLERS, help="controller variant")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("tune", help="GA-tune a fixed PID on one scenario")
    _common(p)
    p.add_argument("--scenario", help="built-in scenario name (default: config, else sc1)")
    p.set_defaults(func=cmd_tune)

    p = sub.add_parser("build-table", help="GA-tune a disturbance-indexed gain table")
    _common(p)
    p.add_argument("--grid", help="'V,../T,../W,..': set-points m/s / slopes deg / winds m/s")
    p.set_defaults(func=cmd_build_table)

    p = sub.add_parser("sweep", help="compare NN-PID settings (and GA gains) on one scenario")
    _common(p)
    p.add_argument("--scenario", help="built-in scenario name (default: config, else step)")
    p.add_argument("--h", type=int, nargs="+", required=True, help="hidden layer sizes")
    p.add_argument("--lr", type=float, nargs="+", required=True, help="learning rates")
    p.add_argument(
        "--gains",
        action="append",
        default=[],
        metavar="LABEL=PATH",
        help="extra fixed-gain or gain-table CSV to include (repeatable)",
    )
    p.set_defaults(func=cmd_sweep)
    return parser


def _config(args) -> RunConfig:
    cfg = load_config(args.config)
    if args.ts is not None:
        cfg = replace(cfg, ts=args.ts)
    if args.out is not None:
        cfg.output = args.out
    if args.seed is not None:
        if args.seed < 0:
            raise ConfigError("--seed must be non-negative")
        cfg.ga = replace(cfg.ga, rng_seed=args.seed)
        cfg.nn = replace(cfg.nn, init_seed=args.seed)
    return cfg


def _scenario(cfg: RunConfig, name: str | None, default: str) -> Scenario:
    sc = resolve_scenario(name if name is not None else cfg.scenario, default)
    if cfg.duration is not None:
        try:
            sc = replace(sc, duration_s=cfg.duration)
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
    return sc


def _controller(cfg: RunConfig, variant: str):
    if variant == "fixed":
        return cfg.gains
    if variant == "nn":
        return cfg.nn
    if cfg.table_path is None:
        raise ConfigError("the table controller needs [controller] table = <gain table CSV>")
    return _read_table(cfg.table_path)


def _read_table(path):
    try:
        return read_gain_table(path)
    except (OSError, ValueError) as exc:
        raise ConfigError(f"cannot read gain table {path}: {exc}") from exc


def cmd_simulate(args) -> int:
    cfg = _config(args)
    sc = _scenario(cfg, args.scenario, "sc1")
    variant = args.controller or cfg.controller or sc.controller or "fixed"
    controller = _controller(cfg, variant)
    record = run_closed_loop(controller, sc, cfg.vehicle, cfg.ts, cfg.initial_soc)
    write_trace(record, cfg.output / "trace.csv")
    write_metrics([(f"{variant}:{sc.label}", scenario_metrics(record, sc))], cfg.output / "metrics.csv")
    if record.sign is not None:
        write_nn_trace(record, cfg.output / "nn_trace.csv")
    log.info("wrote %d rows to %s", len(record), cfg.output)
    return 0


def cmd_tune(args) -> int:
    cfg = _config(args)
    sc = _scenario(cfg, args.scenario, "sc1")
    result = optimize(cfg.ga, scenario_evaluator(sc, cfg.vehicle, cfg.ts, cfg.ga.fitness_cap))
    write_gains(result.best, cfg.output / "gains.csv")
    write_history(result.history, cfg.output / "fitness_history.csv")
    log.info("best %s, fitness %.6g", result.best, result.best_fitness)
    return 0


def cmd_build_table(args) -> int:
    cfg = _config(args)
    grid = parse_grid(args.grid) if args.grid else cfg.grid
    table = build_gain_table(
        cfg.ga, grid, cfg.vehicle, cfg.ts, duration=cfg.node_duration, step_time=cfg.node_step_time
    )
    write_gain_table(table, cfg.output / "gain_table.csv")
    if table.failures:
        log.error("%d grid node(s) failed: %s", len(table.failures), table.failures)
        return EXIT_NODE_FAILURE
    return 0


def _extra_controller(spec: str):
    label, sep, path = spec.partition("=")
    if not sep or not label or not path:
        raise ConfigError(f"--gains expects LABEL=PATH, got {spec!r}")
    path = Path(path)
    try:
        with path.open() as fh:
            header = tuple(fh.readline().strip().split(","))
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from exc
    if header == GAINS_HEADER:
        try:
            return label, read_gains(path)
        except (ValueError, StopIteration) as exc:
            raise ConfigError(f"cannot read gains {path}: {exc}") from exc
    if header == TABLE_HEADER:
        return label, _read_table(path)
    raise ConfigError(f"{path} is neither a gains nor a gain-table CSV")


def cmd_sweep(args) -> int:
    cfg = _config(args)
    sc = _scenario(cfg, args.scenario, "step")
    extras = [_extra_controller(s) for s in args.gains]
    rows: list[tuple[str, Metrics]] = []
    for h in args.h:
        for lr in args.lr:
            try:
                nn = replace(cfg.nn, n_hidden=h, learning_rate=lr)
            except ValueError as exc:
                raise ConfigError(str(exc)) from exc
            record = run_closed_loop(nn, sc, cfg.vehicle, cfg.ts, cfg.initial_soc)
            rows.append((f"NN-PID h={h} lr={lr:g}", scenario_metrics(record, sc)))
    for label, controller in extras:
        record = run_closed_loop(controller, sc, cfg.vehicle, cfg.ts, cfg.initial_soc)
        rows.append((label, scenario_metrics(record, sc)))
    write_metrics(rows, cfg.output / "metrics.csv")
    return 0


def main(argv: list[str] | None = None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except SystemExit as exc:  # argparse uses 2 for usage errors; ours means a failed run
        return EXIT_CONFIG if exc.code == 2 else (exc.code or 0)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"evcruise: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except SimulationError as exc:
        print(f"evcruise: {exc}", file=sys.stderr)
        return EXIT_SIMULATION


if __name__ == "__main__":
    sys.exit(main())
