"""Cheap synthetic black boxes with a planted silent (infeasible) region."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Tuple

import numpy as np

from .scheduler import Evaluation
from .searchspace import ParamSpec, SearchSpace


@dataclass(frozen=True)
class PlantedSilentBenchmark:
    """Accuracy-like objective on ``[0, 1]^dim`` with a silent half-space.

    The fraction of "silent samples" grows linearly as ``x0 + x1`` drops below
    ``threshold``; the emitted constraint value is the excess of that fraction
    over ``beta``, so the infeasible set is ``x0 + x1 < threshold``. With the
    default threshold of 1.2 it holds 68% of the uniform prior mass.
    """

    dim: int = 10
    threshold: float = 1.2
    beta: float = 0.1
    optimum: Tuple[float, ...] = field(
        default=(0.75, 0.7, 0.3, 0.65, 0.5, 0.2, 0.6, 0.4, 0.55, 0.45))
    width: float = 0.35
    chance: float = 1.0 / 3.0

    def space(self) -> SearchSpace:
        return SearchSpace(tuple(
            ParamSpec(f"x{i}", "continuous", "Uniform", "G1", 0.0, 1.0) for i in range(self.dim)
        ))

    def silent_fraction(self, x: np.ndarray) -> float:
        return float(np.clip(self.beta + 0.5 * (self.threshold - x[0] - x[1]), 0.0, 1.0))

    def violation(self, x: np.ndarray) -> float:
        return max(self.silent_fraction(x) - self.beta, 0.0)

    def objective(self, x: np.ndarray) -> float:
        c = np.resize(np.asarray(self.optimum, dtype=float), self.dim)
        bump = np.exp(-float(((x - c) ** 2).sum()) / (2 * self.width ** 2))
        return float(self.chance + (1.0 - self.chance) * bump)

    def feasible_fraction(self, n: int, rng: np.random.Generator) -> float:
        X = rng.random((n, self.dim))
        return float(np.mean([self.violation(x) == 0 for x in X]))

    def __call__(self, config, seed: int = 0) -> Evaluation:
        x = np.array([config[f"x{i}"] for i in range(self.dim)], dtype=float)
        v = self.violation(x)
        return Evaluation(self.objective(x), [v], v > 0)
