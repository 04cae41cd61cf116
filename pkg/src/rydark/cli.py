"""Command-line front end: parse configs, dispatch runs, write CSV bundles.

Output contract: CSV files are UTF-8 with LF line endings, a header row,
comma separators, the time column first on trajectories, and every number
printed with 17 significant digits so values round-trip exactly.  Reruns
with identical config produce byte-identical CSV bodies at any
parallelism.  Each run also writes a <name>_meta.txt mirroring the
resolved config plus version, wall time, and integrator statistics.
"""

from __future__ import annotations

import argparse
import configparser
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import __version__
from .dynamics import steady_state
from .model import (ConfigError, ResourceLimitError, ScenarioConfig,
                    denormalize_units, normalize_units)
from .scenarios import (
    SCENARIO_NAMES,
    ScenarioResult,
    Table,
    build_system,
    run_scenario,
    sweep,
)

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_CONFIG = 2


def fmt(value) -> str:
    """17 significant digits: enough for exact float round-trip."""
    if isinstance(value, (float, np.floating)):
        return format(float(value), ".17g")
    return str(value)


def read_config(path: str | Path) -> ScenarioConfig:
    parser = configparser.ConfigParser()
    parser.optionxform = str  # keep key case
    found = parser.read(path)
    if not found:
        raise ConfigError(f"config file {path} not found or unreadable")
    raw = {section: dict(parser[section]) for section in parser.sections()}
    return normalize_units(raw)


def apply_flag_overrides(config: ScenarioConfig, args) -> ScenarioConfig:
    updates = {}
    if args.method is not None:
        updates["method"] = args.method
    if args.tolerance_rel is not None:
        updates["rtol"] = args.tolerance_rel
    if args.tolerance_abs is not None:
        updates["atol"] = args.tolerance_abs
    return replace(config, **updates) if updates else config


def write_trajectory_csv(path: Path, trajectory) -> None:
    names = list(trajectory.observables)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(",".join(["time_us"] + names) + "\n")
        for i, t in enumerate(trajectory.times):
            row = [fmt(t)] + [fmt(trajectory.observables[name][i]) for name in names]
            fh.write(",".join(row) + "\n")


def write_table_csv(path: Path, table: Table) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(",".join(table.columns) + "\n")
        for row in table.rows:
            fh.write(",".join(fmt(x) for x in row) + "\n")


def _flatten(prefix: str, value, lines: list) -> None:
    if isinstance(value, dict):
        for key in sorted(value):
            _flatten(f"{prefix}.{key}" if prefix else str(key), value[key], lines)
    else:
        lines.append(f"{prefix} = {fmt(value)}")


def write_meta(path: Path, result_config: dict, meta: dict) -> None:
    lines: list = [f"rydark_version = {__version__}"]
    _flatten("config", result_config, lines)
    _flatten("meta", meta, lines)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")


def write_bundle(result: ScenarioResult, out_dir: Path) -> list:
    out_dir.mkdir(parents=True, exist_ok=True)
    prefix = result.scenario.replace("-", "_")
    written = []
    for name, trajectory in result.trajectories.items():
        path = out_dir / f"{prefix}_{name}.csv" if name != prefix else out_dir / f"{prefix}.csv"
        write_trajectory_csv(path, trajectory)
        written.append(path)
    for name, table in result.tables.items():
        path = out_dir / f"{name}.csv" if name.startswith(prefix) else out_dir / f"{prefix}_{name}.csv"
        write_table_csv(path, table)
        written.append(path)
    meta_path = out_dir / f"{prefix}_meta.txt"
    write_meta(meta_path, result.config, result.meta)
    written.append(meta_path)
    return written


def cmd_run(args) -> int:
    config = None
    if args.config is not None:
        config = apply_flag_overrides(read_config(args.config), args)
    elif args.scenario == "custom":
        raise ConfigError("custom scenario requires --config")
    result = run_scenario(args.scenario, config)
    written = write_bundle(result, Path(args.out))
    print(f"{args.scenario}: wrote {len(written)} files to {args.out}")
    return EXIT_OK


def cmd_steady(args) -> int:
    config = apply_flag_overrides(read_config(args.config), args)
    system = build_system(config)
    rho, info = steady_state(system.l_op)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    rows = [(name, fn(rho.matrix)) for name, fn in system.observables.items()]
    write_table_csv(out_dir / "steady.csv", Table(["observable", "value"], rows))
    write_meta(out_dir / "steady_meta.txt", denormalize_units(config), {
        "kernel_dim": info.kernel_dim,
        "degenerate": info.degenerate,
        "residual": info.residual,
    })
    note = " (degenerate kernel)" if info.degenerate else ""
    print(f"steady: kernel_dim={info.kernel_dim}{note}, wrote steady.csv to {args.out}")
    return EXIT_OK


def cmd_sweep(args) -> int:
    config = apply_flag_overrides(read_config(args.config), args)
    table, failures = sweep(config, parallelism=args.parallelism)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    write_table_csv(out_dir / "sweep.csv", table)
    write_meta(out_dir / "sweep_meta.txt", denormalize_units(config), {
        "cells_total": len(table.rows) + len(failures),
        "cells_failed": len(failures),
        "parallelism": args.parallelism,
    })
    if failures:
        write_table_csv(out_dir / "sweep_failures.csv",
                        Table(["axis_values", "error"],
                              [(";".join(fmt(v) for v in key), msg) for key, msg in failures]))
    print(f"sweep: {len(table.rows)} cells ok, {len(failures)} failed; wrote {args.out}/sweep.csv")
    return EXIT_OK if table.rows else EXIT_FAILURE


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="rydark",
        description="Dissipative dark-state preparation in driven Rydberg ensembles",
    )
    parser.add_argument("--version", action="version", version=f"rydark {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--out", default="results", help="output directory")
    common.add_argument("--method", choices=("adaptive", "fixed", "expm"), default=None,
                        help="override the integrator method")
    common.add_argument("--tolerance-rel", type=float, default=None, dest="tolerance_rel")
    common.add_argument("--tolerance-abs", type=float, default=None, dest="tolerance_abs")

    p_run = sub.add_parser("run", parents=[common], help="run a named scenario")
    p_run.add_argument("scenario", choices=SCENARIO_NAMES)
    p_run.add_argument("--config", default=None, help="config file (required for custom)")
    p_run.set_defaults(fn=cmd_run)

    p_steady = sub.add_parser("steady", parents=[common], help="steady state of a configured model")
    p_steady.add_argument("--config", required=True)
    p_steady.set_defaults(fn=cmd_steady)

    p_sweep = sub.add_parser("sweep", parents=[common], help="run the [sweep] section of a config")
    p_sweep.add_argument("--config", required=True)
    p_sweep.add_argument("--parallelism", type=int, default=1)
    p_sweep.set_defaults(fn=cmd_sweep)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ResourceLimitError as exc:
        print(f"resource limit: {exc}", file=sys.stderr)
        return EXIT_FAILURE
    except Exception as exc:  # surfaced verbatim, nonzero exit
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_FAILURE


if __name__ == "__main__":
    sys.exit(main())
