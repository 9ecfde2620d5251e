"""Scalable constrained Bayesian optimization over a :class:`SearchSpace`.

One trust region is kept around the incumbent. Candidates are drawn inside
it, one joint Thompson sample is taken from the objective model and from each
constraint model, and the best sample-feasible candidate is proposed. Each
call draws fresh samples, so proposals can be requested asynchronously while
other evaluations are still running.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from datetime import datetime, timezone
from typing import Any, Dict, List, Optional, Sequence

import numpy as np

from . import surrogate
from .exceptions import FitError, ValidationError
from .searchspace import Configuration, SearchSpace, sample_prior


def _utcnow() -> datetime:
    return datetime.now(timezone.utc)


@dataclass
class TrialRecord:
    trial_id: int
    config: Configuration
    unit: np.ndarray
    objective: float
    violations: List[float]
    stopped: bool
    train_seconds: float = 0.0
    eval_seconds: float = 0.0
    start_time: datetime = field(default_factory=_utcnow)
    end_time: datetime = field(default_factory=_utcnow)
    worker_id: int = 0
    seed: int = 0
    samples_processed: int = 0
    source: str = "scbo"
    error: Optional[str] = None
    restarts: int = 0

    def __post_init__(self):
        self.unit = np.asarray(self.unit, dtype=float)
        self.violations = [float(v) for v in self.violations]
        self.objective = float(self.objective)
        if any(v < 0 for v in self.violations):
            raise ValidationError(f"trial {self.trial_id}: violations must be >= 0")
        if not 0.0 <= self.objective <= 1.0:
            raise ValidationError(f"trial {self.trial_id}: objective {self.objective} outside [0, 1]")
        if self.end_time < self.start_time:
            raise ValidationError(f"trial {self.trial_id}: end_time precedes start_time")

    @property
    def total_violation(self) -> float:
        return float(sum(self.violations))

    @property
    def feasible(self) -> bool:
        return all(v == 0 for v in self.violations)


def incumbent_key(trial: TrialRecord):
    # feasible trials all have total violation 0, so one ordering covers both regimes
    return (trial.total_violation, -trial.objective, trial.trial_id)


def incumbent(history: Sequence[TrialRecord]) -> Optional[TrialRecord]:
    """Best feasible trial, else the least-violating one."""
    if not history:
        return None
    return min(history, key=incumbent_key)


@dataclass
class TrustRegionState:
    center: np.ndarray
    length: float = 0.8
    success_count: int = 0
    failure_count: int = 0
    succ_tol: int = 3
    fail_tol: int = 5
    length_init: float = 0.8
    length_min: float = 0.5 ** 7
    length_max: float = 1.6

    def __post_init__(self):
        if not 0 < self.length_min <= self.length_init <= self.length_max:
            raise ValidationError("trust region lengths must satisfy 0 < L_min <= L_init <= L_max")
        if self.succ_tol < 1 or self.fail_tol < 1:
            raise ValidationError("trust region tolerances must be >= 1")

    def record(self, success: bool) -> bool:
        """Advance the counters; returns True when the region restarted."""
        if success:
            self.success_count += 1
            self.failure_count = 0
        else:
            self.failure_count += 1
            self.success_count = 0
        if self.success_count == self.succ_tol:
            self.length = min(2.0 * self.length, self.length_max)
            self.success_count = 0
        elif self.failure_count == self.fail_tol:
            self.length = self.length / 2.0
            self.failure_count = 0
        if self.length < self.length_min:
            self.length = self.length_init
            self.success_count = 0
            self.failure_count = 0
            return True
        return False


@dataclass
class SCBOConfig:
    n_init: int = 10
    n_candidates: Optional[int] = None
    length_init: float = 0.8
    length_min: float = 0.5 ** 7
    length_max: float = 1.6
    success_tolerance: int = 3
    failure_tolerance: Optional[int] = None
    feasibility_margin: float = 0.01
    fit_restarts: int = 4
    include_stopped_objectives: bool = True
    perturb_probability: Optional[float] = None

    def __post_init__(self):
        if self.n_init < 2:
            raise ValidationError("n_init must be >= 2")
        if self.n_candidates is not None and self.n_candidates < 1:
            raise ValidationError("n_candidates must be >= 1")
        if self.fit_restarts < 0:
            raise ValidationError("fit_restarts must be >= 0")
        if self.perturb_probability is not None and not 0 <= self.perturb_probability <= 1:
            raise ValidationError("perturb_probability must lie in [0, 1]")

    def candidates_for(self, dim: int) -> int:
        return self.n_candidates if self.n_candidates is not None else min(5000, 100 * dim)

    def fail_tol_for(self, dim: int) -> int:
        return self.failure_tolerance if self.failure_tolerance is not None else max(dim, 5)


def select_from_draws(objective_draw: np.ndarray, constraint_draws: np.ndarray, q: int) -> List[int]:
    """Indices of the ``q`` chosen candidates given one joint draw per model.

    Sample-feasible candidates (every constraint draw ``<= 0``) come first by
    descending objective draw; the rest are filled by ascending sum of positive
    constraint draws.
    """
    obj = np.asarray(objective_draw, dtype=float)
    cons = np.asarray(constraint_draws, dtype=float).reshape(-1, obj.shape[0])
    feasible = np.all(cons <= 0, axis=0)
    idx = np.arange(obj.shape[0])
    feas_idx = idx[feasible][np.argsort(-obj[feasible], kind="stable")]
    chosen = list(feas_idx[:q])
    if len(chosen) < q:
        excess = np.clip(cons, 0, None).sum(0)
        rest = idx[~feasible][np.argsort(excess[~feasible], kind="stable")]
        chosen.extend(rest[: q - len(chosen)])
    return [int(i) for i in chosen]


class SCBO:
    """Optimizer state: history, fitted models and the trust region."""

    def __init__(self, space: SearchSpace, config: SCBOConfig, n_constraints: int,
                 rng: np.random.Generator):
        if n_constraints < 0:
            raise ValidationError("n_constraints must be >= 0")
        self.space = space
        self.config = config
        self.n_constraints = n_constraints
        self.rng = rng
        self.history: List[TrialRecord] = []
        self.objective_model: Optional[surrogate.GPModel] = None
        self.constraint_models: List[Optional[surrogate.GPModel]] = [None] * n_constraints
        self.region = TrustRegionState(
            center=np.full(space.dim, 0.5),
            length=config.length_init,
            succ_tol=config.success_tolerance,
            fail_tol=config.fail_tol_for(space.dim),
            length_init=config.length_init,
            length_min=config.length_min,
            length_max=config.length_max,
        )
        self.pending: List[np.ndarray] = []
        self.restarts = 0
        self.refits = 0
        self.init_queue: List[Configuration] = sample_prior(space, config.n_init, rng)
        self._ids = set()

    # -- proposals ---------------------------------------------------------

    @property
    def fitted(self) -> bool:
        return self.objective_model is not None and all(m is not None for m in self.constraint_models)

    def incumbent(self) -> Optional[TrialRecord]:
        return incumbent(self.history)

    def generate_candidates(self, n_cand: int, rng: np.random.Generator,
                            perturb_probability: Optional[float] = None) -> np.ndarray:
        d = self.space.dim
        center = self.region.center
        if self.objective_model is not None:
            ls = self.objective_model.kernel.lengthscales
            weights = ls / math.exp(float(np.mean(np.log(ls))))
        else:
            weights = np.ones(d)
        half = 0.5 * self.region.length * weights
        lb = np.clip(center - half, 0.0, 1.0)
        ub = np.clip(center + half, 0.0, 1.0)
        prob = perturb_probability
        if prob is None:
            prob = self.config.perturb_probability
        if prob is None:
            prob = min(1.0, 20.0 / d)
        pert = lb + (ub - lb) * rng.random((n_cand, d))
        mask = rng.random((n_cand, d)) < prob
        return np.where(mask, pert, center)

    def select_batch(self, q: int = 1, n_cand: Optional[int] = None,
                     rng: Optional[np.random.Generator] = None) -> List[Configuration]:
        if not self.fitted:
            raise ValidationError("select_batch requires fitted models")
        if q < 1:
            raise ValidationError("q must be >= 1")
        rng = self.rng if rng is None else rng
        n_cand = self.config.candidates_for(self.space.dim) if n_cand is None else n_cand
        cands = self.generate_candidates(max(n_cand, q), rng)
        obj = surrogate.thompson_draw(self.objective_model, cands, rng)
        cons = np.array([surrogate.thompson_draw(m, cands, rng) for m in self.constraint_models])
        cons = cons.reshape(self.n_constraints, cands.shape[0])
        chosen = select_from_draws(obj, cons, q)
        configs = [self.space.to_config(cands[i]) for i in chosen]
        self.pending.extend(self.space.to_unit(c) for c in configs)
        return configs

    def suggest(self) -> tuple:
        """Next configuration to dispatch and where it came from."""
        if self.init_queue:
            config = self.init_queue.pop(0)
            source = "prior"
        elif not self.fitted:
            config = sample_prior(self.space, 1, self.rng)[0]
            source = "prior"
        else:
            return self.select_batch(1)[0], "scbo"
        self.pending.append(self.space.to_unit(config))
        return config, source

    # -- feedback ----------------------------------------------------------

    def _drop_pending(self, unit: np.ndarray) -> None:
        for i, p in enumerate(self.pending):
            if np.allclose(p, unit, rtol=0, atol=1e-12):
                del self.pending[i]
                return

    def update(self, trial: TrialRecord) -> bool:
        """Append a finished trial, adapt the region and refit the models.

        Returns True when the trial became the new incumbent.
        """
        if trial.trial_id in self._ids:
            raise ValidationError(f"duplicate trial_id {trial.trial_id}")
        if len(trial.violations) != self.n_constraints:
            raise ValidationError(
                f"trial {trial.trial_id} has {len(trial.violations)} violations, expected {self.n_constraints}")
        self._drop_pending(trial.unit)
        self.history.append(trial)
        self._ids.add(trial.trial_id)

        best = self.incumbent()
        success = best is not None and best.trial_id == trial.trial_id
        if trial.source == "scbo":
            if self.region.record(success):
                self.restarts += 1
                self.init_queue.extend(sample_prior(self.space, self.config.n_init, self.rng))
        self.region.center = best.unit.copy()
        trial.restarts = self.restarts
        self.fit_models()
        return success

    def fit_models(self) -> None:
        if len(self.history) < 2:
            return
        self.refits += 1
        X = np.array([t.unit for t in self.history])
        restarts = self.config.fit_restarts
        if self.config.include_stopped_objectives:
            obj_rows = np.ones(len(self.history), dtype=bool)
        else:
            obj_rows = np.array([not t.stopped for t in self.history])
        y = np.array([t.objective for t in self.history])
        self.objective_model = self._fit_or_none(X[obj_rows], y[obj_rows], self.objective_model, restarts)
        V = np.array([t.violations for t in self.history]).reshape(len(self.history), self.n_constraints)
        margin = self.config.feasibility_margin
        self.constraint_models = [
            self._fit_or_none(X, V[:, j] - margin, self.constraint_models[j], restarts)
            for j in range(self.n_constraints)
        ]

    def _fit_or_none(self, X, y, previous, restarts):
        if X.shape[0] < 2 or len(surrogate.dedupe(X, y)[0]) < 2:
            return None
        warm = previous.kernel if previous is not None else None
        if warm is not None:
            # the previous optimum is usually close; one random start guards against drift
            restarts = min(restarts, 1)
        try:
            return surrogate.fit(X, y, rng=self.rng, restarts=restarts, warm_start=warm)
        except FitError:
            # one retry from scratch before giving up
            return surrogate.fit(X, y, rng=self.rng, restarts=restarts + 4)
