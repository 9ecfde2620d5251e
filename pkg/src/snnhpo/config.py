"""Experiment configuration files.

A config is a TOML document (JSON is accepted too, which is how resolved
configs are frozen next to a run). Top-level layout::

    seed = 0
    out = "runs/exp1"

    [budget]      max_trials, max_wall_seconds, workers, executor
    [scbo]        n_init, n_candidates, length_init, length_min, length_max,
                  success_tolerance, failure_tolerance, feasibility_margin,
                  fit_restarts, include_stopped_objectives, perturb_probability
    [simulator]   any SNNProfile field
    [[criteria]]  layer, alpha, beta
    [[space]]     name, kind, lower, upper, choices, sampler, group

Every problem found is reported at once, prefixed with its location, and
unknown keys are errors.
"""
from __future__ import annotations

import dataclasses
import json
import math
import os
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Any, Dict, List, Mapping, Optional, Tuple

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from .earlystop import LAYERS, StopCriterion
from .exceptions import ConfigError, ValidationError
from .optimizer import SCBOConfig
from .scheduler import EXECUTORS, ExperimentBudget
from .searchspace import ParamSpec, SearchSpace, param_from_dict
from .snnsim.blackbox import SNNProfile

BUNDLED_PROFILES = ("exp1-desk",)
TOP_LEVEL_KEYS = ("seed", "out", "budget", "scbo", "simulator", "criteria", "space")
BUDGET_KEYS = {"max_trials": int, "max_wall_seconds": float, "workers": int, "executor": str}


@dataclass(frozen=True)
class ExperimentConfig:
    space: SearchSpace
    scbo: SCBOConfig
    criteria: Tuple[StopCriterion, ...]
    simulator: SNNProfile
    budget: ExperimentBudget
    seed: int = 0
    out: str = "runs/experiment"
    executor: str = "thread"

    def with_overrides(self, seed: Optional[int] = None, workers: Optional[int] = None,
                       max_trials: Optional[int] = None, max_seconds: Optional[float] = None,
                       out: Optional[str] = None) -> "ExperimentConfig":
        budget = self.budget
        changes = {}
        if workers is not None:
            changes["n_workers"] = workers
        if max_trials is not None:
            changes["max_trials"] = max_trials
        if max_seconds is not None:
            changes["max_wall_seconds"] = max_seconds
        if changes:
            budget = dataclasses.replace(budget, **changes)
        return dataclasses.replace(
            self, budget=budget,
            seed=self.seed if seed is None else seed,
            out=self.out if out is None else out,
        )

    def to_dict(self) -> Dict[str, Any]:
        """Fully resolved form; loading it back gives an equal config."""
        def param(p: ParamSpec):
            d = {"name": p.name, "kind": p.kind, "sampler": p.sampler, "group": p.group}
            if p.kind == "categorical":
                d["choices"] = list(p.choices)
            else:
                d["lower"], d["upper"] = p.lower, p.upper
            return d

        budget = {"workers": self.budget.n_workers, "executor": self.executor}
        if self.budget.max_trials is not None:
            budget["max_trials"] = self.budget.max_trials
        if self.budget.max_wall_seconds is not None:
            budget["max_wall_seconds"] = self.budget.max_wall_seconds
        return {
            "seed": self.seed,
            "out": self.out,
            "budget": budget,
            "scbo": {k: v for k, v in dataclasses.asdict(self.scbo).items() if v is not None},
            "simulator": {k: v for k, v in dataclasses.asdict(self.simulator).items() if v is not None},
            "criteria": [{"layer": c.layer, "alpha": c.alpha, "beta": c.beta} for c in self.criteria],
            "space": [param(p) for p in self.space.params],
        }


# -- field checking --------------------------------------------------------

def _type_ok(value, kind) -> bool:
    if kind is int:
        return isinstance(value, int) and not isinstance(value, bool)
    if kind is float:
        return isinstance(value, (int, float)) and not isinstance(value, bool)
    if kind is bool:
        return isinstance(value, bool)
    if kind is str:
        return isinstance(value, str)
    return True


def _typename(kind) -> str:
    return {int: "an integer", float: "a number", bool: "a boolean", str: "a string"}.get(kind, str(kind))


def _read_section(section: Any, where: str, schema: Mapping[str, Any], problems: List[str]) -> Dict[str, Any]:
    """Type-checked copy of ``section``; unknown keys and bad types are collected."""
    if section is None:
        return {}
    if not isinstance(section, Mapping):
        problems.append(f"{where}: must be a table")
        return {}
    out = {}
    for key, value in section.items():
        if key not in schema:
            problems.append(f"{where}.{key}: unknown key (allowed: {', '.join(sorted(schema))})")
        elif value is not None and not _type_ok(value, schema[key]):
            problems.append(f"{where}.{key}: must be {_typename(schema[key])}, got {value!r}")
        else:
            out[key] = float(value) if schema[key] is float and value is not None else value
    return out


def _schema_of(cls) -> Dict[str, Any]:
    hints = {int: int, float: float, bool: bool, str: str}
    schema = {}
    for f in dataclasses.fields(cls):
        t = f.type if not isinstance(f.type, str) else f.type.replace("Optional[", "").rstrip("]")
        schema[f.name] = next((v for k, v in hints.items() if t in (k, k.__name__)), None)
    return schema


def _build(cls, kwargs: Dict[str, Any], where: str, problems: List[str]):
    try:
        return cls(**kwargs)
    except (ValidationError, ValueError, TypeError) as exc:
        problems.append(f"{where}: {exc}")
        return None


def parse_config(raw: Mapping[str, Any]) -> ExperimentConfig:
    """Validate a parsed document, raising :class:`ConfigError` with every problem."""
    problems: List[str] = []
    if not isinstance(raw, Mapping):
        raise ConfigError(["config: top level must be a table"])
    for key in raw:
        if key not in TOP_LEVEL_KEYS:
            problems.append(f"{key}: unknown key (allowed: {', '.join(TOP_LEVEL_KEYS)})")

    seed = raw.get("seed", 0)
    if not _type_ok(seed, int) or seed < 0:
        problems.append(f"seed: must be a non-negative integer, got {seed!r}")
    out = raw.get("out", "runs/experiment")
    if not isinstance(out, str) or not out:
        problems.append(f"out: must be a non-empty string, got {out!r}")

    b = _read_section(raw.get("budget"), "budget", BUDGET_KEYS, problems)
    executor = b.pop("executor", "thread")
    if executor not in EXECUTORS:
        problems.append(f"budget.executor: must be one of {EXECUTORS}, got {executor!r}")
    max_seconds = b.get("max_wall_seconds")
    budget = _build(ExperimentBudget, {
        "max_trials": b.get("max_trials"),
        "max_wall_seconds": None if max_seconds is None or math.isinf(max_seconds) else max_seconds,
        "n_workers": b.get("workers", 1),
    }, "budget", problems)

    scbo = _build(SCBOConfig, _read_section(raw.get("scbo"), "scbo", _schema_of(SCBOConfig), problems),
                  "scbo", problems)
    sim = _build(SNNProfile, _read_section(raw.get("simulator"), "simulator", _schema_of(SNNProfile), problems),
                 "simulator", problems)

    criteria = []
    raw_criteria = raw.get("criteria", [])
    if not isinstance(raw_criteria, list):
        problems.append("criteria: must be an array of tables")
        raw_criteria = []
    for i, entry in enumerate(raw_criteria):
        where = f"criteria[{i}]"
        c = _read_section(entry, where, {"layer": str, "alpha": int, "beta": float}, problems)
        missing = [k for k in ("layer", "alpha", "beta") if k not in c]
        if missing:
            problems.append(f"{where}: missing {', '.join(missing)}")
            continue
        if c["layer"] not in LAYERS:
            problems.append(f"{where}.layer: must be one of {LAYERS}, got {c['layer']!r}")
            continue
        crit = _build(StopCriterion, c, where, problems)
        if crit is not None:
            criteria.append(crit)
    layers = [c.layer for c in criteria]
    if len(set(layers)) != len(layers):
        problems.append("criteria: each layer may appear at most once")

    params = []
    raw_space = raw.get("space")
    if not isinstance(raw_space, list) or not raw_space:
        problems.append("space: must be a non-empty array of parameter tables")
        raw_space = []
    for i, entry in enumerate(raw_space):
        name = entry.get("name", f"#{i}") if isinstance(entry, Mapping) else f"#{i}"
        try:
            params.append(param_from_dict(entry))
        except (ValidationError, TypeError) as exc:
            problems.append(f"space[{name}]: {exc}")
    space = None
    if params and len(params) == len(raw_space):
        try:
            space = SearchSpace(tuple(params))
        except ValidationError as exc:
            problems.append(f"space: {exc}")

    if problems:
        raise ConfigError(problems)
    return ExperimentConfig(space=space, scbo=scbo, criteria=tuple(criteria), simulator=sim,
                            budget=budget, seed=seed, out=out, executor=executor)


def bundled_profile_path(name: str) -> Path:
    if name not in BUNDLED_PROFILES:
        raise ConfigError([f"config: no bundled profile named {name!r}"])
    return Path(str(resources.files("snnhpo") / "profiles" / f"{name}.toml"))


def resolve_config_path(ref: str) -> Path:
    """A filesystem path, or the name of a bundled profile."""
    p = Path(ref)
    if p.exists() or ref not in BUNDLED_PROFILES:
        return p
    return bundled_profile_path(ref)


def load_config(ref) -> ExperimentConfig:
    path = resolve_config_path(os.fspath(ref))
    try:
        data = path.read_bytes()
    except OSError as exc:
        raise OSError(f"cannot read config {path}: {exc.strerror}") from exc
    try:
        if path.suffix == ".json":
            raw = json.loads(data.decode("utf-8"))
        else:
            raw = tomllib.loads(data.decode("utf-8"))
    except (ValueError, UnicodeDecodeError) as exc:
        raise ConfigError([f"{path}: parse error: {exc}"]) from exc
    return parse_config(raw)
