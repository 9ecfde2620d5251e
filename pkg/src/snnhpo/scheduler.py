"""Asynchronous evaluation loop feeding a fixed worker pool.

A single coordinator owns the optimizer and the trial log. Whenever a worker
slot is free and budget remains it asks the optimizer for one configuration
and dispatches it immediately; each completion is logged and fed back via
``SCBO.update`` before the freed slot is refilled.
"""
from __future__ import annotations

import json
import logging
import math
import os
import time
import traceback
from concurrent.futures import FIRST_COMPLETED, Executor, ProcessPoolExecutor, ThreadPoolExecutor, wait
from dataclasses import dataclass, field
from datetime import datetime, timezone
from typing import Any, Callable, Dict, List, Optional, Sequence

import numpy as np

from .exceptions import ValidationError
from .optimizer import SCBO, SCBOConfig, TrialRecord
from .searchspace import Configuration, SearchSpace

log = logging.getLogger(__name__)

EXECUTORS = ("thread", "process")
# fields that legitimately differ between otherwise identical runs
TIMING_FIELDS = ("start_time", "end_time", "train_seconds", "eval_seconds")


@dataclass
class Evaluation:
    """What a black box returns for one configuration."""

    objective: float
    violations: List[float]
    stopped: bool
    samples_processed: int = 0
    train_seconds: float = 0.0
    eval_seconds: float = 0.0


BlackBox = Callable[[Configuration, int], Evaluation]


@dataclass(frozen=True)
class ExperimentBudget:
    max_trials: Optional[int] = None
    max_wall_seconds: Optional[float] = None
    n_workers: int = 1

    def __post_init__(self):
        if self.n_workers < 1:
            raise ValidationError("n_workers must be >= 1")
        trials_finite = self.max_trials is not None
        seconds_finite = self.max_wall_seconds is not None and math.isfinite(self.max_wall_seconds)
        if not (trials_finite or seconds_finite):
            raise ValidationError("budget needs max_trials or a finite max_wall_seconds")
        if trials_finite and self.max_trials < 0:
            raise ValidationError("max_trials must be >= 0")
        if self.max_wall_seconds is not None and self.max_wall_seconds < 0:
            raise ValidationError("max_wall_seconds must be >= 0")


@dataclass
class WorkerReport:
    trial_id: int
    worker_id: int
    seed: int
    start_time: datetime
    end_time: datetime
    payload: Optional[Evaluation] = None
    error: Optional[str] = None


def trial_seed(master_seed: int, trial_id: int) -> int:
    """Per-trial simulator seed, independent of completion order."""
    return int(np.random.SeedSequence([master_seed, trial_id]).generate_state(1, dtype=np.uint32)[0])


def _evaluate(blackbox: BlackBox, config: Configuration, seed: int, trial_id: int,
              worker_id: int) -> WorkerReport:
    start = datetime.now(timezone.utc)
    try:
        result = blackbox(config, seed)
        error = None
    except Exception as exc:  # a failing trial must not take the pool down
        result = None
        error = f"{type(exc).__name__}: {exc}"
        log.warning("trial %d failed on worker %d: %s", trial_id, worker_id, error)
        log.debug("%s", traceback.format_exc())
    end = datetime.now(timezone.utc)
    return WorkerReport(trial_id, worker_id, seed, start, end, result, error)


def _to_record(report: WorkerReport, config: Configuration, unit: np.ndarray, source: str,
               n_constraints: int) -> TrialRecord:
    ev = report.payload
    if report.error is not None or ev is None:
        return TrialRecord(
            trial_id=report.trial_id, config=config, unit=unit, objective=0.0,
            violations=[1.0] * n_constraints, stopped=True, start_time=report.start_time,
            end_time=report.end_time, worker_id=report.worker_id, seed=report.seed, source=source,
            error=report.error or "no result",
        )
    return TrialRecord(
        trial_id=report.trial_id, config=config, unit=unit, objective=ev.objective,
        violations=list(ev.violations), stopped=bool(ev.stopped), train_seconds=ev.train_seconds,
        eval_seconds=ev.eval_seconds, start_time=report.start_time, end_time=report.end_time,
        worker_id=report.worker_id, seed=report.seed, samples_processed=int(ev.samples_processed),
        source=source,
    )


# -- trial log -------------------------------------------------------------

def rfc3339(t: datetime) -> str:
    return t.astimezone(timezone.utc).isoformat(timespec="microseconds").replace("+00:00", "Z")


def parse_rfc3339(s: str) -> datetime:
    return datetime.fromisoformat(s.replace("Z", "+00:00"))


def _plain(value):
    if isinstance(value, np.integer):
        return int(value)
    if isinstance(value, np.floating):
        return float(value)
    return value


def trial_to_dict(trial: TrialRecord) -> Dict[str, Any]:
    return {
        "trial_id": trial.trial_id,
        "worker_id": trial.worker_id,
        "config": {k: _plain(v) for k, v in trial.config.items()},
        "objective": trial.objective,
        "violations": list(trial.violations),
        "stopped": trial.stopped,
        "samples_processed": trial.samples_processed,
        "train_seconds": trial.train_seconds,
        "eval_seconds": trial.eval_seconds,
        "start_time": rfc3339(trial.start_time),
        "end_time": rfc3339(trial.end_time),
        "seed": trial.seed,
        "source": trial.source,
        "restarts": trial.restarts,
        "error": trial.error,
    }


class TrialLog:
    """Append-only newline-delimited JSON sink, synced to disk per record."""

    def __init__(self, path):
        self.path = os.fspath(path)
        try:
            self._fh = open(self.path, "a", encoding="utf-8")
        except OSError as exc:
            raise OSError(f"cannot open trial log {self.path}: {exc.strerror}") from exc

    def record(self, trial: TrialRecord) -> None:
        line = json.dumps(trial_to_dict(trial), sort_keys=True)
        try:
            self._fh.write(line + "\n")
            self._fh.flush()
            os.fsync(self._fh.fileno())
        except OSError as exc:
            raise OSError(f"cannot append to trial log {self.path}: {exc.strerror}") from exc

    def close(self) -> None:
        self._fh.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def record(trial: TrialRecord, sink: TrialLog) -> None:
    sink.record(trial)


# -- coordinator -----------------------------------------------------------

@dataclass
class _InFlight:
    trial_id: int
    worker_id: int
    config: Configuration
    unit: np.ndarray
    source: str
    dispatched: float


@dataclass
class RunStats:
    """Coordinator bookkeeping, mainly for liveness checks."""

    dispatch_latencies: List[float] = field(default_factory=list)
    refits_per_completion: List[int] = field(default_factory=list)


def _make_executor(kind: str, n_workers: int) -> Executor:
    if kind == "thread":
        return ThreadPoolExecutor(max_workers=n_workers)
    if kind == "process":
        return ProcessPoolExecutor(max_workers=n_workers)
    raise ValidationError(f"executor must be one of {EXECUTORS}, got {kind!r}")


def run(space: SearchSpace, scbo_config: SCBOConfig, blackbox: BlackBox, n_constraints: int,
        budget: ExperimentBudget, seed: int, sink: Optional[TrialLog] = None,
        executor: str = "thread", stats: Optional[RunStats] = None) -> List[TrialRecord]:
    """Optimize ``blackbox`` over ``space`` until the budget runs out.

    Returns trials in completion order (the order they were logged). Trial
    ``i`` is simulated with ``trial_seed(seed, i)``.
    """
    rng = np.random.default_rng(seed)
    opt = SCBO(space, scbo_config, n_constraints, rng)
    stats = RunStats() if stats is None else stats
    trials: List[TrialRecord] = []
    free = list(range(budget.n_workers))
    inflight: Dict[Any, _InFlight] = {}
    next_id = 0
    t0 = time.monotonic()
    freed_at = {w: t0 for w in free}

    def budget_left() -> bool:
        if budget.max_trials is not None and next_id >= budget.max_trials:
            return False
        if budget.max_wall_seconds is not None and time.monotonic() - t0 >= budget.max_wall_seconds:
            return False
        return True

    pool = _make_executor(executor, budget.n_workers)
    try:
        while True:
            while free and budget_left():
                config, source = opt.suggest()
                worker = free.pop(0)
                tid = next_id
                next_id += 1
                s = trial_seed(seed, tid)
                fut = pool.submit(_evaluate, blackbox, config, s, tid, worker)
                now = time.monotonic()
                stats.dispatch_latencies.append(now - freed_at[worker])
                inflight[fut] = _InFlight(tid, worker, config, space.to_unit(config), source, now)
            if not inflight:
                break
            done, _ = wait(list(inflight), return_when=FIRST_COMPLETED)
            for fut in sorted(done, key=lambda f: inflight[f].trial_id):
                job = inflight.pop(fut)
                try:
                    report = fut.result()
                except Exception as exc:  # e.g. a worker process died
                    now = datetime.now(timezone.utc)
                    report = WorkerReport(job.trial_id, job.worker_id, trial_seed(seed, job.trial_id),
                                          now, now, None, f"{type(exc).__name__}: {exc}")
                trial = _to_record(report, job.config, job.unit, job.source, n_constraints)
                refits = opt.refits
                opt.update(trial)
                stats.refits_per_completion.append(opt.refits - refits)
                trials.append(trial)
                if sink is not None:
                    sink.record(trial)
                free.append(job.worker_id)
                free.sort()
                freed_at[job.worker_id] = time.monotonic()
    except BaseException:
        pool.shutdown(wait=False, cancel_futures=True)
        raise
    pool.shutdown(wait=True)
    return trials
