"""Run summaries and CSV exports computed from a trial log."""
from __future__ import annotations

import csv
import json
import os
import warnings
from dataclasses import asdict, dataclass
from typing import Any, Dict, List, Mapping, Sequence, Tuple

from .exceptions import ValidationError
from .scheduler import parse_rfc3339

REQUIRED_FIELDS = {
    "trial_id": int, "worker_id": int, "config": dict, "objective": (int, float),
    "violations": list, "stopped": bool, "train_seconds": (int, float),
    "eval_seconds": (int, float), "start_time": str, "end_time": str, "seed": int,
}


@dataclass(frozen=True)
class RunSummary:
    trials: int
    stopped_fraction: float
    stopped_time_share: float
    best_objective: float
    best_trial_id: int
    best_feasible: bool
    best_config: Dict[str, Any]
    restarts: int
    errors: int

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True, indent=2) + "\n"


def _valid(record: Any) -> bool:
    if not isinstance(record, dict):
        return False
    for key, kind in REQUIRED_FIELDS.items():
        value = record.get(key)
        if not isinstance(value, kind) or (kind is int and isinstance(value, bool)):
            return False
    try:
        parse_rfc3339(record["start_time"])
        parse_rfc3339(record["end_time"])
    except ValueError:
        return False
    return all(isinstance(v, (int, float)) and not isinstance(v, bool) for v in record["violations"])


def read_log(path) -> Tuple[List[Dict[str, Any]], int]:
    """Parsed records in file order, and how many lines were skipped as corrupt."""
    records, corrupt = [], 0
    try:
        fh = open(path, "r", encoding="utf-8")
    except OSError as exc:
        raise OSError(f"cannot read trial log {os.fspath(path)}: {exc.strerror}") from exc
    with fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                record = json.loads(line)
            except ValueError:
                record = None
            if not _valid(record):
                corrupt += 1
                warnings.warn(f"{os.fspath(path)}:{lineno}: skipping corrupt trial record")
                continue
            records.append(record)
    return records, corrupt


def _total_violation(record: Mapping[str, Any]) -> float:
    return float(sum(record["violations"]))


def _incumbent_key(record: Mapping[str, Any]):
    return (_total_violation(record), -float(record["objective"]), int(record["trial_id"]))


def summarize(records: Sequence[Mapping[str, Any]]) -> RunSummary:
    if not records:
        raise ValidationError("trial log is empty; nothing to summarize")
    stopped = [r for r in records if r["stopped"]]
    total_time = sum(r["train_seconds"] + r["eval_seconds"] for r in records)
    stopped_time = sum(r["train_seconds"] + r["eval_seconds"] for r in stopped)
    best = min(records, key=_incumbent_key)
    return RunSummary(
        trials=len(records),
        stopped_fraction=len(stopped) / len(records),
        stopped_time_share=stopped_time / total_time if total_time > 0 else 0.0,
        best_objective=float(best["objective"]),
        best_trial_id=int(best["trial_id"]),
        best_feasible=_total_violation(best) == 0,
        best_config=dict(best["config"]),
        restarts=max(int(r.get("restarts", 0)) for r in records),
        errors=sum(1 for r in records if r.get("error")),
    )


def best_so_far(records: Sequence[Mapping[str, Any]]) -> List[Dict[str, Any]]:
    """Incumbent after each completed trial, in log order."""
    rows, best = [], None
    for i, r in enumerate(records):
        if best is None or _incumbent_key(r) < _incumbent_key(best):
            best = r
        rows.append({
            "completed": i + 1,
            "trial_id": r["trial_id"],
            "objective": r["objective"],
            "feasible": _total_violation(r) == 0,
            "best_trial_id": best["trial_id"],
            "best_objective": best["objective"],
            "best_feasible": _total_violation(best) == 0,
        })
    return rows


def intervals(records: Sequence[Mapping[str, Any]]) -> List[Dict[str, Any]]:
    """Per-trial start/end (absolute and relative to the first start) with outcome."""
    t0 = min(parse_rfc3339(r["start_time"]) for r in records)
    rows = []
    for r in records:
        start, end = parse_rfc3339(r["start_time"]), parse_rfc3339(r["end_time"])
        rows.append({
            "trial_id": r["trial_id"],
            "worker_id": r["worker_id"],
            "start_time": r["start_time"],
            "end_time": r["end_time"],
            "start_seconds": (start - t0).total_seconds(),
            "end_seconds": (end - t0).total_seconds(),
            "objective": r["objective"],
            "stopped": r["stopped"],
        })
    return rows


def write_csv(path, rows: Sequence[Mapping[str, Any]]) -> None:
    if not rows:
        raise ValidationError("no rows to write")
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.DictWriter(fh, fieldnames=list(rows[0]))
        writer.writeheader()
        writer.writerows(rows)


def write_summary(path, summary: RunSummary) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(summary.to_json())
