"""Spike-count early stopping and the violation values derived from it.

A criterion ``(layer, alpha, beta)`` counts the samples of an epoch on which
``layer`` emitted fewer than ``alpha`` spikes. Training stops as soon as that
count exceeds a ``beta`` fraction of the ``S`` samples in the epoch, and the
per-criterion excess ``max(count / S - beta, 0)`` is reported as a black-box
constraint value (``<= 0`` means satisfied).

Ratios are compared and subtracted in exact rational arithmetic so the stop
index and violation values do not depend on floating-point rounding of
``count / S``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from typing import Dict, List, Mapping, Sequence, Tuple

from .exceptions import ValidationError

EXCITATORY = "excitatory"
INHIBITORY = "inhibitory"
LAYERS = (EXCITATORY, INHIBITORY)


@dataclass(frozen=True)
class StopCriterion:
    layer: str
    alpha: int
    beta: float

    def __post_init__(self):
        if int(self.alpha) != self.alpha or self.alpha < 0:
            raise ValidationError(f"criterion {self.layer!r}: alpha must be an integer >= 0")
        if not 0.0 <= self.beta <= 1.0:
            raise ValidationError(f"criterion {self.layer!r}: beta must lie in [0, 1]")
        object.__setattr__(self, "alpha", int(self.alpha))
        object.__setattr__(self, "beta", float(self.beta))

    @property
    def beta_ratio(self) -> Tuple[int, int]:
        """``beta`` as an exact integer ratio ``(p, q)``."""
        return self.beta.as_integer_ratio()


@dataclass
class StopOutcome:
    """Running state of the stopping rule for a single training run.

    ``counts`` are per-epoch (reset by :func:`new_epoch`); ``samples_processed``
    accumulates over the whole run.
    """

    samples_total: int
    counts: Dict[str, int] = field(default_factory=dict)
    samples_processed: int = 0
    stopped: bool = False
    violations: List[float] = field(default_factory=list)

    @property
    def violation_sum(self) -> float:
        return float(sum(self.violations))


def new_outcome(samples_total: int, criteria: Sequence[StopCriterion]) -> StopOutcome:
    if samples_total <= 0:
        raise ValidationError("samples_total must be positive")
    layers = [c.layer for c in criteria]
    if len(set(layers)) != len(layers):
        raise ValidationError(f"one criterion per layer allowed, got {layers}")
    return StopOutcome(
        samples_total=samples_total,
        counts={c.layer: 0 for c in criteria},
        violations=[0.0] * len(criteria),
    )


def _criterion_for(layer: str, criteria: Sequence[StopCriterion]) -> StopCriterion:
    for c in criteria:
        if c.layer == layer:
            return c
    raise ValidationError(f"no stopping criterion for layer {layer!r}")


def observe(counter: StopOutcome, layer: str, spike_sum: int,
            criteria: Sequence[StopCriterion]) -> StopOutcome:
    """Count ``layer`` as silent on this sample iff ``spike_sum < alpha``.

    Does not advance ``samples_processed``; call :func:`end_sample` once per
    sample after all monitored layers were observed (or use
    :func:`observe_sample`).
    """
    crit = _criterion_for(layer, criteria)
    if spike_sum < crit.alpha:
        counter.counts[layer] = counter.counts.get(layer, 0) + 1
    return counter


def end_sample(counter: StopOutcome) -> StopOutcome:
    counter.samples_processed += 1
    return counter


def observe_sample(counter: StopOutcome, spike_sums: Mapping[str, int],
                   criteria: Sequence[StopCriterion]) -> StopOutcome:
    for layer, total in spike_sums.items():
        observe(counter, layer, int(total), criteria)
    return end_sample(counter)


def new_epoch(counter: StopOutcome) -> StopOutcome:
    for layer in counter.counts:
        counter.counts[layer] = 0
    return counter


def _excess(count: int, samples_total: int, beta: float) -> Fraction:
    return Fraction(count, samples_total) - Fraction(beta)


def should_stop(counter: StopOutcome, criteria: Sequence[StopCriterion]) -> bool:
    """True iff some layer's silent fraction strictly exceeds its beta."""
    if counter.samples_total <= 0:
        raise ValidationError("samples_total must be positive")
    S = counter.samples_total
    for c in criteria:
        p, q = c.beta_ratio
        if counter.counts.get(c.layer, 0) * q > p * S:
            return True
    return False


def violation(counter: StopOutcome, criteria: Sequence[StopCriterion]) -> List[float]:
    """Per-criterion ``max(count/S - beta, 0)``, in criteria order."""
    if counter.samples_total <= 0:
        raise ValidationError("samples_total must be positive")
    out = []
    for c in criteria:
        excess = _excess(counter.counts.get(c.layer, 0), counter.samples_total, c.beta)
        out.append(float(excess) if excess > 0 else 0.0)
    return out


def violation_sum(counter: StopOutcome, criteria: Sequence[StopCriterion]) -> float:
    return float(sum(violation(counter, criteria)))


def finish(counter: StopOutcome, criteria: Sequence[StopCriterion], stopped: bool) -> StopOutcome:
    """Freeze the violation vector at the end of a run."""
    counter.stopped = bool(stopped)
    counter.violations = violation(counter, criteria)
    return counter


def stop_index(spike_sums: Sequence[int], alpha: int, beta: float) -> int:
    """Number of samples a single-criterion streaming run processes.

    Convenience for callers that already hold a whole sequence of per-sample
    spike totals for one epoch.
    """
    crit = StopCriterion("layer", alpha, beta)
    counter = new_outcome(len(spike_sums), [crit])
    for s in spike_sums:
        observe(counter, "layer", s, [crit])
        end_sample(counter)
        if should_stop(counter, [crit]):
            break
    return counter.samples_processed


def exp1_criteria() -> List[StopCriterion]:
    return [StopCriterion(EXCITATORY, 5, 0.1), StopCriterion(INHIBITORY, 1, 0.1)]
