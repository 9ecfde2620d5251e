"""The spiking network as an optimizer black box.

A configuration from the search space is turned into a :class:`NetworkSpec`,
trained on the training split with the early-stopping criteria active, and
scored by validation accuracy. Silent (stopped) networks still get scored.
"""
from __future__ import annotations

import time
from dataclasses import dataclass
from typing import Any, Mapping, Optional, Sequence

import numpy as np

from ..earlystop import StopCriterion
from ..exceptions import ValidationError
from ..scheduler import Evaluation
from ..searchspace import REFERENCE_CONFIGURATION
from .datasets import Splits, load_idx, synthetic_blobs
from .encoding import DEFAULT_R_MAX
from .network import NetworkSpec, assign_labels, evaluate, ngram_order, train
from .neurons import NeuronParams


@dataclass(frozen=True)
class SNNProfile:
    """Everything about an evaluation that is not a hyperparameter."""

    n_classes: int = 3
    image_size: int = 8
    n_train: int = 300
    n_valid: int = 100
    n_test: int = 100
    data_seed: int = 0
    noise: float = 0.05
    idx_images: Optional[str] = None
    idx_labels: Optional[str] = None
    T: int = 100
    r_max: float = DEFAULT_R_MAX
    w_max: float = 1.0
    tau_trace_pre: float = 20.0
    tau_trace_post: float = 20.0
    exc_v_reset: float = -60.0
    inh_v_reset: float = -45.0

    def __post_init__(self):
        if (self.idx_images is None) != (self.idx_labels is None):
            raise ValidationError("idx_images and idx_labels must be given together")
        if min(self.n_train, self.n_valid) < 1:
            raise ValidationError("n_train and n_valid must be >= 1")
        if self.T < 1:
            raise ValidationError("T must be >= 1")

    def load(self) -> Splits:
        if self.idx_images is not None:
            return load_idx(self.idx_images, self.idx_labels, self.n_train, self.n_valid, self.n_test)
        return synthetic_blobs(self.n_classes, self.image_size, self.n_train, self.n_valid,
                               self.n_test, seed=self.data_seed, noise=self.noise)


def spec_from_config(config: Mapping[str, Any], profile: SNNProfile, n_inputs: int) -> NetworkSpec:
    """Build a network spec; parameters absent from ``config`` take reference values."""
    c = dict(REFERENCE_CONFIGURATION)
    c.update(config)
    exc = NeuronParams(
        v_th=float(c["exc_v_th"]), v_rest=float(c["exc_v_rest"]), v_reset=profile.exc_v_reset,
        tau=float(c["exc_tau"]), t_ref=int(c["exc_t_ref"]),
        theta_plus=float(c["exc_theta_plus"]), tau_theta=float(c["exc_tau_theta"]),
    )
    inh = NeuronParams(
        v_th=float(c["inh_v_th"]), v_rest=float(c["inh_v_rest"]), v_reset=profile.inh_v_reset,
        tau=float(c["inh_tau"]), t_ref=int(c["inh_t_ref"]),
    )
    return NetworkSpec(
        n_inputs=n_inputs, map_size=int(c["map_size"]), exc_params=exc, inh_params=inh,
        exc_strength=float(c["exc_strength"]), inh_strength=float(c["inh_strength"]),
        lambda_minus=float(c["lambda_minus"]), lambda_plus=float(c["lambda_plus"]),
        weight_norm=float(c["weight_norm"]), epochs=int(c["epochs"]), decoder=str(c["decoder"]),
        T=profile.T, tau_trace_pre=profile.tau_trace_pre, tau_trace_post=profile.tau_trace_post,
        r_max=profile.r_max, w_max=profile.w_max,
    )


class SNNBlackBox:
    """Callable ``(config, seed) -> Evaluation``; picklable, data loaded lazily."""

    def __init__(self, profile: SNNProfile, criteria: Sequence[StopCriterion]):
        self.profile = profile
        self.criteria = list(criteria)
        self._splits: Optional[Splits] = None

    def __getstate__(self):
        state = self.__dict__.copy()
        state["_splits"] = None
        return state

    @property
    def splits(self) -> Splits:
        if self._splits is None:
            self._splits = self.profile.load()
        return self._splits

    def __call__(self, config: Mapping[str, Any], seed: int) -> Evaluation:
        splits = self.splits
        spec = spec_from_config(config, self.profile, splits.train.n_inputs)
        rng = np.random.default_rng(seed)
        t0 = time.perf_counter()
        net, outcome = train(spec, splits.train, self.criteria, rng)
        t1 = time.perf_counter()
        act = net.activity
        net = assign_labels(net, act.counts, act.labels, act.orders, ngram_order(spec.decoder))
        acc = evaluate(net, spec, splits.valid, rng)
        t2 = time.perf_counter()
        return Evaluation(
            objective=acc,
            violations=list(outcome.violations),
            stopped=outcome.stopped,
            samples_processed=outcome.samples_processed,
            train_seconds=t1 - t0,
            eval_seconds=t2 - t1,
        )
