"""Command-line driver: ``snnhpo run`` and ``snnhpo report``.

Precedence for run settings is flag, then environment variable, then config
file. Environment variables use the ``SNNHPO_`` prefix: ``SNNHPO_CONFIG``,
``SNNHPO_SEED``, ``SNNHPO_WORKERS``, ``SNNHPO_MAX_TRIALS``,
``SNNHPO_MAX_SECONDS``, ``SNNHPO_OUT`` for ``run`` and ``SNNHPO_LOG`` for
``report``.
"""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path
from typing import List, Mapping, Optional

from . import report, scheduler
from .config import ExperimentConfig, load_config
from .exceptions import ConfigError, ValidationError
from .scheduler import ExperimentBudget, TrialLog, trial_to_dict
from .snnsim.blackbox import SNNBlackBox

ENV_PREFIX = "SNNHPO_"
EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_USAGE = 2

LOG_NAME = "trials.jsonl"
CONFIG_NAME = "config.json"
SUMMARY_NAME = "summary.json"
BEST_NAME = "best_so_far.csv"
INTERVALS_NAME = "intervals.csv"

log = logging.getLogger("snnhpo")


def _env(env: Mapping[str, str], name: str, kind, errors: List[str]):
    raw = env.get(ENV_PREFIX + name)
    if raw is None or raw == "":
        return None
    try:
        return kind(raw)
    except ValueError:
        errors.append(f"{ENV_PREFIX}{name}: cannot parse {raw!r} as {kind.__name__}")
        return None


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="snnhpo", description="Constrained BO for spiking network hyperparameters.")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run an optimization experiment")
    run.add_argument("--config", help="config file, or a bundled profile name such as exp1-desk")
    run.add_argument("--seed", type=int)
    run.add_argument("--workers", type=int)
    run.add_argument("--max-trials", type=int)
    run.add_argument("--max-seconds", type=float)
    run.add_argument("--out", help="output directory")

    rep = sub.add_parser("report", help="summarize a trial log")
    rep.add_argument("--log", help="trial log (JSON lines)")
    rep.add_argument("--out", help="directory for summary and CSV exports (default: next to the log)")
    return parser


def resolve_run_config(args: argparse.Namespace, env: Mapping[str, str]) -> ExperimentConfig:
    errors: List[str] = []
    ref = args.config or env.get(ENV_PREFIX + "CONFIG")
    if not ref:
        raise ConfigError(["--config is required (or set SNNHPO_CONFIG)"])
    overrides = {
        "seed": _env(env, "SEED", int, errors),
        "workers": _env(env, "WORKERS", int, errors),
        "max_trials": _env(env, "MAX_TRIALS", int, errors),
        "max_seconds": _env(env, "MAX_SECONDS", float, errors),
        "out": env.get(ENV_PREFIX + "OUT") or None,
    }
    if errors:
        raise ConfigError(errors)
    for key in overrides:
        flag = getattr(args, key)
        if flag is not None:
            overrides[key] = flag
    cfg = load_config(ref)
    try:
        return cfg.with_overrides(**overrides)
    except ValidationError as exc:
        raise ConfigError([f"overrides: {exc}"]) from exc


def run_command(cfg: ExperimentConfig) -> report.RunSummary:
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    log_path = out / LOG_NAME
    if log_path.exists() and log_path.stat().st_size > 0:
        raise FileExistsError(f"{log_path} already exists; choose a fresh --out directory")
    with open(out / CONFIG_NAME, "w", encoding="utf-8") as fh:
        json.dump(cfg.to_dict(), fh, indent=2, sort_keys=True)
        fh.write("\n")
    blackbox = SNNBlackBox(cfg.simulator, cfg.criteria)
    with TrialLog(log_path) as sink:
        trials = scheduler.run(cfg.space, cfg.scbo, blackbox, len(cfg.criteria), cfg.budget,
                               cfg.seed, sink=sink, executor=cfg.executor)
    # summarize exactly what a reader of the log will see
    records = [json.loads(json.dumps(trial_to_dict(t), sort_keys=True)) for t in trials]
    summary = report.summarize(records)
    report.write_summary(out / SUMMARY_NAME, summary)
    return summary


def report_command(log_path, out_dir=None) -> report.RunSummary:
    records, corrupt = report.read_log(log_path)
    if corrupt:
        log.warning("skipped %d corrupt line(s) in %s", corrupt, log_path)
    summary = report.summarize(records)
    out = Path(out_dir) if out_dir is not None else Path(log_path).parent
    out.mkdir(parents=True, exist_ok=True)
    report.write_summary(out / SUMMARY_NAME, summary)
    report.write_csv(out / BEST_NAME, report.best_so_far(records))
    report.write_csv(out / INTERVALS_NAME, report.intervals(records))
    return summary


def _print_summary(summary: report.RunSummary) -> None:
    print(f"trials            {summary.trials}")
    print(f"stopped fraction  {summary.stopped_fraction:.3f}")
    print(f"stopped time      {summary.stopped_time_share:.3f}")
    print(f"best objective    {summary.best_objective:.4f} (trial {summary.best_trial_id}, "
          f"{'feasible' if summary.best_feasible else 'infeasible'})")
    print(f"restarts          {summary.restarts}")
    if summary.errors:
        print(f"errors            {summary.errors}")


def main(argv: Optional[List[str]] = None, env: Optional[Mapping[str, str]] = None) -> int:
    env = os.environ if env is None else env
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "run":
            cfg = resolve_run_config(args, env)
            summary = run_command(cfg)
            print(f"wrote {Path(cfg.out) / LOG_NAME}")
        else:
            log_path = args.log or env.get(ENV_PREFIX + "LOG")
            if not log_path:
                raise ConfigError(["--log is required (or set SNNHPO_LOG)"])
            summary = report_command(log_path, args.out)
        _print_summary(summary)
        return EXIT_OK
    except ConfigError as exc:
        print("invalid configuration:", file=sys.stderr)
        for problem in exc.problems:
            print(f"  {problem}", file=sys.stderr)
        return EXIT_USAGE
    except (OSError, ValidationError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAILURE


if __name__ == "__main__":
    sys.exit(main())
