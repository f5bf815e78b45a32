"""Command-line entry point: run, report, fit, and selftest.

Configuration is one JSON file with dotted-path overrides (`--set a.b=v`);
common fields also have direct flags. Every run directory is self-describing:
the resolved config snapshot, per-seed run records, reward traces, and best
expressions are all written there. Exit codes: 0 success, 2 invalid
configuration or data, 3 unsatisfiable constraint set.

The default output root is ./runs, overridable with SYMOPT_OUTPUT_ROOT.
"""

from __future__ import annotations

import argparse
import copy
import csv
import json
import os
import sys
from pathlib import Path

import numpy as np

from .bench import (
    RunRecord,
    SearchSettings,
    get_benchmark,
    list_benchmarks,
    run_experiment,
    summarize,
)
from .dataset import load_csv
from .errors import ConfigError, ContractViolationError
from .gp import GPConfig
from .priors import build_adjusters
from .reward import nmse as compute_nmse
from .tokens import make_library
from .train import TraceRow, TrainerConfig, train_loop
from .traversal import render_infix

DEFAULT_CONFIG = {
    "benchmark": None,
    "dataset": None,
    "library": ["add", "sub", "mul", "div", "sin", "cos", "exp", "log"],
    "constraints": ["length", "no_const_children", "inverse", "trig"],
    "min_length": 4,
    "max_length": 30,
    "hidden_size": 32,
    "include_const": False,
    "const_budget": 200,
    "holdout_fraction": 0.2,
    "seeds": 10,
    "seed_start": 0,
    "jobs": 1,
    "output_dir": None,
    "trainer": {
        "kind": "rspg",
        "learning_rate": 5e-4,
        "entropy_coef": 0.005,
        "epsilon": 0.05,
        "batch_size": 1000,
        "queue_size": 10,
        "baseline_decay": 0.99,
        "max_evaluations": 500_000,
        "optimizer": "adam",
    },
    "gp": {
        "enabled": False,
        "generations": 25,
        "elites": 25,
        "tournament_size": 5,
        "crossover_prob": 0.5,
        "mutation_prob": 0.5,
        "repair_attempts": 8,
    },
}


def _config_line(path: str | None, field: str) -> str:
    """Best-effort line number of a field inside the config file."""
    if not path:
        return ""
    key = field.split(".")[-1]
    try:
        with open(path, encoding="utf-8") as fh:
            for i, line in enumerate(fh, start=1):
                if f'"{key}"' in line:
                    return f"{path}:{i}: "
    except OSError:
        pass
    return f"{path}: "


def load_config(path: str | None, overrides) -> dict:
    config = copy.deepcopy(DEFAULT_CONFIG)
    if path:
        try:
            with open(path, encoding="utf-8") as fh:
                user = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}:{exc.lineno}: {exc.msg}") from exc
        except OSError as exc:
            raise ConfigError(f"cannot read config: {exc}") from exc
        _merge(config, user, path)
    for item in overrides or ():
        if "=" not in item:
            raise ConfigError(f"--set needs key=value, got {item!r}")
        dotted, raw = item.split("=", 1)
        try:
            value = json.loads(raw)
        except json.JSONDecodeError:
            value = raw
        node = config
        parts = dotted.split(".")
        for part in parts[:-1]:
            if part not in node or not isinstance(node[part], dict):
                raise ConfigError(f"unknown config section {dotted!r}", field=dotted)
            node = node[part]
        if parts[-1] not in node:
            raise ConfigError(f"unknown config field {dotted!r}", field=dotted)
        node[parts[-1]] = value
    return config


def _merge(base: dict, user: dict, path: str, prefix: str = "") -> None:
    for key, value in user.items():
        dotted = f"{prefix}{key}"
        if key not in base:
            raise ConfigError(
                f"{_config_line(path, dotted)}unknown config field {dotted!r}", field=dotted
            )
        if isinstance(base[key], dict):
            if not isinstance(value, dict):
                raise ConfigError(
                    f"{_config_line(path, dotted)}{dotted} must be an object", field=dotted
                )
            _merge(base[key], value, path, prefix=f"{dotted}.")
        else:
            base[key] = value


def settings_from_config(config: dict) -> SearchSettings:
    trainer = TrainerConfig(**config["trainer"])
    gp = GPConfig(**config["gp"])
    settings = SearchSettings(
        trainer=trainer,
        gp=gp,
        constraints=tuple(config["constraints"]),
        min_length=int(config["min_length"]),
        max_length=int(config["max_length"]),
        hidden_size=int(config["hidden_size"]),
        include_const=bool(config["include_const"]),
        const_budget=int(config["const_budget"]),
    )
    settings.validate()
    return settings


def seeds_from_config(config: dict) -> list[int]:
    seeds = config["seeds"]
    if isinstance(seeds, list):
        return [int(s) for s in seeds]
    start = int(config["seed_start"])
    return list(range(start, start + int(seeds)))


def _output_root() -> Path:
    return Path(os.environ.get("SYMOPT_OUTPUT_ROOT", "runs"))


def _write_csv(path: Path, header, rows, append: bool = False) -> None:
    exists = path.exists()
    mode = "a" if append and exists else "w"
    with open(path, mode, newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        if mode == "w":
            writer.writerow(header)
        writer.writerows(rows)


def _print_summary(summary) -> None:
    header = ("benchmark", "trainer", "runs", "recovery", "+/-", "mean steps",
              "censored", "invalid")
    row = summary.table_row()
    widths = [max(len(str(h)), len(str(v))) for h, v in zip(header, row)]
    line = "  ".join(str(h).ljust(w) for h, w in zip(header, widths))
    print(line)
    print("  ".join(str(v).ljust(w) for v, w in zip(row, widths)))
    if summary.n_numeric_only:
        print(f"note: {summary.n_numeric_only} recovered run(s) matched only "
              "numerically, not canonically")


def cmd_run(args) -> int:
    config = load_config(args.config, args.set)
    if args.benchmark:
        config["benchmark"] = args.benchmark
    if args.trainer:
        config["trainer"]["kind"] = args.trainer
    if args.seeds is not None:
        config["seeds"] = args.seeds
    if args.jobs is not None:
        config["jobs"] = args.jobs
    if args.gp is not None:
        config["gp"]["enabled"] = args.gp
    if args.output:
        config["output_dir"] = args.output
    if not config["benchmark"]:
        raise ConfigError(
            f"{_config_line(args.config, 'benchmark')}missing required field "
            "'benchmark' (or pass --benchmark)",
            field="benchmark",
        )
    settings = settings_from_config(config)
    seeds = seeds_from_config(config)
    spec = get_benchmark(config["benchmark"])

    trainer_tag = settings.trainer.kind + ("+gp" if settings.gp.enabled else "")
    out_dir = Path(config["output_dir"] or (_output_root() / f"{spec.name}-{trainer_tag}"))
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "config.json").write_text(json.dumps(config, indent=2) + "\n", encoding="utf-8")

    runs_path = out_dir / "runs.csv"
    done_seeds: set[int] = set()
    if args.resume and runs_path.exists():
        with open(runs_path, newline="", encoding="utf-8") as fh:
            done_seeds = {int(row["seed"]) for row in csv.DictReader(fh)}
    pending = [s for s in seeds if s not in done_seeds]
    if done_seeds:
        print(f"resume: skipping {len(done_seeds)} completed seed(s)")
    if pending:
        records, traces, _ = run_experiment(spec, settings, pending, jobs=int(config["jobs"]))
        _write_csv(runs_path, RunRecord.CSV_HEADER,
                   [r.as_csv_row() for r in records], append=True)
        for record, trace in zip(records, traces):
            _write_csv(out_dir / f"trace_seed{record.seed}.csv",
                       TraceRow.CSV_HEADER, [t.as_csv_row() for t in trace])
            best_path = out_dir / f"best_seed{record.seed}.txt"
            best_path.write_text(
                f"{record.best_expression}\nreward {record.best_reward}\n",
                encoding="utf-8",
            )
    all_records = _read_records(runs_path)
    if all_records:
        _print_summary(summarize(all_records))
    print(f"artifacts in {out_dir}")
    return 0


def _read_records(runs_path: Path) -> list[RunRecord]:
    if not runs_path.exists():
        return []
    records = []
    with open(runs_path, newline="", encoding="utf-8") as fh:
        for row in csv.DictReader(fh):
            records.append(
                RunRecord(
                    benchmark=row["benchmark"],
                    trainer=row["trainer"],
                    seed=int(row["seed"]),
                    recovered=bool(int(row["recovered"])),
                    equiv_method=row["equiv_method"],
                    steps_to_solve=int(row["steps_to_solve"]),
                    censored=bool(int(row["censored"])),
                    evals_used=int(row["evals_used"]),
                    invalid_fraction=float(row["invalid_fraction"]),
                    best_reward=float(row["best_reward"]),
                    best_expression=row["best_expression"],
                    test_nmse=float(row["test_nmse"]),
                    wall_time=float(row["wall_time"]),
                )
            )
    return records


def cmd_report(args) -> int:
    out_dir = Path(args.directory)
    records = _read_records(out_dir / "runs.csv")
    if not records:
        print(f"warning: no run records in {out_dir}")
        return 0
    by_key: dict[tuple[str, str], list[RunRecord]] = {}
    for r in records:
        by_key.setdefault((r.benchmark, r.trainer), []).append(r)
    for key in sorted(by_key):
        _print_summary(summarize(by_key[key]))
    merged = []
    for trace_file in sorted(out_dir.glob("trace_seed*.csv")):
        seed = trace_file.stem.removeprefix("trace_seed")
        with open(trace_file, newline="", encoding="utf-8") as fh:
            for row in csv.DictReader(fh):
                merged.append((seed, row["iter"], row["evals"], row["mean_R"],
                               row["top_eps_mean_R"], row["best_R"], row["invalid_frac"]))
    if merged:
        _write_csv(out_dir / "report_traces.csv",
                   ("seed",) + TraceRow.CSV_HEADER, merged)
        print(f"trace columns exported to {out_dir / 'report_traces.csv'}")
    return 0


def cmd_fit(args) -> int:
    config = load_config(args.config, args.set)
    data = load_csv(args.dataset)
    settings = settings_from_config(config)
    seed = seeds_from_config(config)[0]
    rng = np.random.default_rng(np.random.SeedSequence([seed, 0xF17]))
    train_set, test_set = data.split(float(config["holdout_fraction"]), rng)
    lib = make_library(
        tuple(config["library"]), data.n_variables, include_const=settings.include_const
    )
    adjusters = build_adjusters(settings.constraints, lib,
                                settings.min_length, settings.max_length)
    result = train_loop(
        settings.trainer, lib, train_set, adjusters, rng,
        hidden_size=settings.hidden_size, max_len=settings.max_length,
        const_budget=settings.const_budget,
    )
    if result.best_ids is None:
        print("no expression found (zero evaluation budget?)")
        return 0
    from .evaluate import INVALID, evaluate_ids

    expression = render_infix(result.best_ids, lib, result.best_const_values)
    y_train = evaluate_ids(result.best_ids, lib, train_set.X,
                           const_values=result.best_const_values or None)
    y_test = evaluate_ids(result.best_ids, lib, test_set.X,
                          const_values=result.best_const_values or None)
    train_err = float("inf") if y_train is INVALID else compute_nmse(y_train, train_set.y)
    test_err = float("inf") if y_test is INVALID else compute_nmse(y_test, test_set.y)
    print(f"best expression: {expression}")
    print(f"train NMSE: {train_err:.6e}")
    print(f"test NMSE:  {test_err:.6e}")
    return 0


def cmd_selftest(args) -> int:
    from .selftest import run_all

    failures = 0
    for name, ok, detail in run_all():
        status = "PASS" if ok else "FAIL"
        suffix = f" ({detail})" if detail else ""
        print(f"{status}  {name}{suffix}")
        failures += 0 if ok else 1
    return 1 if failures else 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="symopt",
        description="Search for symbolic expressions that fit data.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run a benchmark experiment across seeds")
    p_run.add_argument("--config", help="JSON config file")
    p_run.add_argument("--benchmark", help=f"one of: {', '.join(list_benchmarks())}")
    p_run.add_argument("--trainer", choices=("vpg", "rspg", "pqt"))
    p_run.add_argument("--seeds", type=int, help="number of seeds")
    p_run.add_argument("--jobs", type=int, help="parallel seed workers")
    p_run.add_argument("--gp", action=argparse.BooleanOptionalAction,
                       help="enable the GP inner loop")
    p_run.add_argument("--output", help="output directory")
    p_run.add_argument("--resume", action="store_true",
                       help="skip seeds already present in runs.csv")
    p_run.add_argument("--set", action="append", metavar="KEY=VALUE",
                       help="dotted-path config override")
    p_run.set_defaults(func=cmd_run)

    p_report = sub.add_parser("report", help="aggregate a run directory")
    p_report.add_argument("directory")
    p_report.set_defaults(func=cmd_report)

    p_fit = sub.add_parser("fit", help="fit an expression to a CSV dataset")
    p_fit.add_argument("dataset", help="CSV with feature columns then target")
    p_fit.add_argument("--config", help="JSON config file")
    p_fit.add_argument("--set", action="append", metavar="KEY=VALUE")
    p_fit.set_defaults(func=cmd_fit)

    p_self = sub.add_parser("selftest", help="run the built-in verification suite")
    p_self.set_defaults(func=cmd_selftest)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except ContractViolationError as exc:
        print(f"constraint error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
