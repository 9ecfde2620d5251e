"""Diehl & Cook style self-organizing map trained with STDP.

Input spikes drive a plastic input->excitatory projection. Excitatory neuron
``j`` drives inhibitory neuron ``j`` with weight ``exc_strength`` and every
inhibitory neuron ``j`` inhibits all excitatory neurons except ``j`` with
weight ``inh_strength`` on the next frame, giving winner-take-all
competition. Training presents samples one at a time and consults the
spike-count stopping rule after each one.
"""
from __future__ import annotations

import math
import re
from dataclasses import dataclass, field, replace
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .. import earlystop
from ..earlystop import EXCITATORY, INHIBITORY, LAYERS, StopCriterion, StopOutcome
from ..exceptions import ValidationError
from .datasets import Dataset
from .encoding import DEFAULT_R_MAX, poisson_encode, poisson_encode_batch
from .learning import normalize_weights, stdp_update
from .neurons import LIFState, NeuronParams, lif_step

# n-gram tables only look at the first spikes of a presentation
MAX_ORDER_LENGTH = 200
EVAL_BATCH = 256


def ngram_order(decoder: str) -> Optional[int]:
    """``n`` for an ``"<n>-gram"`` decoder name, else None."""
    m = re.fullmatch(r"(\d+)-gram", decoder)
    return int(m.group(1)) if m else None


def _check_decoder(decoder: str) -> None:
    if decoder in ("Average", "Max"):
        return
    n = ngram_order(decoder)
    if n is None or n < 1:
        raise ValidationError(f"unknown decoder {decoder!r}; expected Average, Max or '<n>-gram'")


@dataclass(frozen=True)
class NetworkSpec:
    n_inputs: int
    map_size: int
    exc_params: NeuronParams
    inh_params: NeuronParams
    exc_strength: float
    inh_strength: float
    lambda_minus: float
    lambda_plus: float
    weight_norm: float
    epochs: int = 1
    decoder: str = "Max"
    T: int = 100
    tau_trace_pre: float = 20.0
    tau_trace_post: float = 20.0
    r_max: float = DEFAULT_R_MAX
    w_max: float = 1.0

    def __post_init__(self):
        problems = []
        if self.n_inputs < 1:
            problems.append("n_inputs must be >= 1")
        if self.map_size < 1:
            problems.append("map_size must be >= 1")
        if self.epochs < 1:
            problems.append("epochs must be >= 1")
        if self.T < 1:
            problems.append("T must be >= 1")
        if self.exc_strength < 0 or self.inh_strength < 0:
            problems.append("exc_strength and inh_strength must be >= 0")
        if not (0 <= self.lambda_minus <= 1 and 0 <= self.lambda_plus <= 1):
            problems.append("STDP rates must lie in [0, 1]")
        if not self.weight_norm > 0:
            problems.append("weight_norm must be > 0")
        if not (self.tau_trace_pre > 0 and self.tau_trace_post > 0):
            problems.append("trace time constants must be > 0")
        if not 0 < self.r_max <= 1:
            problems.append("r_max must lie in (0, 1]")
        if not self.w_max > 0:
            problems.append("w_max must be > 0")
        if problems:
            raise ValidationError("invalid network spec: " + "; ".join(problems))
        _check_decoder(self.decoder)


@dataclass
class TrainingActivity:
    """Responses recorded during the last (possibly partial) training epoch."""

    counts: np.ndarray  # (samples, map_size)
    labels: np.ndarray
    orders: List[Tuple[int, ...]] = field(default_factory=list)


@dataclass
class TrainedNetwork:
    w_in_exc: np.ndarray
    adaptive_theta: np.ndarray
    n_classes: int
    label_of_neuron: Optional[np.ndarray] = None
    dead: Optional[np.ndarray] = None
    ngram_table: Optional[Dict[Tuple[int, ...], np.ndarray]] = None
    activity: Optional[TrainingActivity] = None

    @property
    def map_size(self) -> int:
        return self.w_in_exc.shape[1]


def init_weights(spec: NetworkSpec, rng: np.random.Generator) -> np.ndarray:
    w = rng.uniform(0.0, 0.3, (spec.n_inputs, spec.map_size)) * spec.w_max
    return normalize_weights(w, spec.weight_norm, spec.w_max)


def _spike_order(raster: np.ndarray) -> Tuple[int, ...]:
    # time-major, ties within a frame broken by neuron index
    _, neurons = np.nonzero(raster)
    return tuple(int(j) for j in neurons[:MAX_ORDER_LENGTH])


class _Presenter:
    """Single-sample simulation with plasticity; reuses its state buffers."""

    def __init__(self, spec: NetworkSpec, w: np.ndarray, theta: np.ndarray):
        self.spec = spec
        self.w = w
        m = spec.map_size
        self.exc = LIFState.rest(m, spec.exc_params)
        self.exc.theta = theta
        self.inh = LIFState.rest(m, spec.inh_params)
        self.pre_trace = np.zeros(spec.n_inputs)
        self.post_trace = np.zeros(m)
        self.decay_pre = math.exp(-1.0 / spec.tau_trace_pre)
        self.decay_post = math.exp(-1.0 / spec.tau_trace_post)
        self.zeros = np.zeros(m)

    def present(self, frames: np.ndarray, learn: bool = True):
        """Run one encoded sample; returns (exc raster, inhibitory spike total)."""
        spec, w = self.spec, self.w
        exc_p, inh_p = spec.exc_params, spec.inh_params
        self.exc.reset(exc_p)
        self.inh.reset(inh_p)
        self.pre_trace.fill(0.0)
        self.post_trace.fill(0.0)
        raster = np.zeros((spec.T, spec.map_size), dtype=bool)
        inh_total = 0
        inh_prev = None
        n_inh_prev = 0
        lm, lp, w_max = spec.lambda_minus, spec.lambda_plus, spec.w_max
        for t in range(spec.T):
            frame = frames[t]
            idx = np.flatnonzero(frame)
            drive = w[idx].sum(0) if idx.size else self.zeros.copy()
            if n_inh_prev:
                drive -= spec.inh_strength * (n_inh_prev - inh_prev)
            _, s_exc = lif_step(self.exc, drive, exc_p, adapt=learn)
            n_exc = int(np.count_nonzero(s_exc))
            _, s_inh = lif_step(self.inh, spec.exc_strength * s_exc if n_exc else 0.0, inh_p, adapt=False)
            n_inh_prev = int(np.count_nonzero(s_inh))
            inh_prev = s_inh
            inh_total += n_inh_prev
            if n_exc:
                raster[t] = s_exc
            if learn:
                self.pre_trace *= self.decay_pre
                self.post_trace *= self.decay_post
                if idx.size or n_exc:
                    stdp_update(w, self.pre_trace, self.post_trace, frame, s_exc, lm, lp, w_max)
                    self.pre_trace[idx] = 1.0
                    if n_exc:
                        self.post_trace[s_exc] = 1.0
        return raster, inh_total


def train(spec: NetworkSpec, dataset: Dataset, criteria: Sequence[StopCriterion],
          rng: np.random.Generator) -> Tuple[TrainedNetwork, StopOutcome]:
    """Train with STDP, stopping early when a spike-count criterion trips.

    Weights are normalized after every sample. Membrane, refractory and trace
    state reset between samples; adaptive thresholds persist.
    """
    if len(dataset) == 0:
        raise ValidationError("training dataset is empty")
    if dataset.n_inputs != spec.n_inputs:
        raise ValidationError(f"dataset has {dataset.n_inputs} inputs, spec expects {spec.n_inputs}")
    for c in criteria:
        if c.layer not in LAYERS:
            raise ValidationError(f"criterion layer {c.layer!r} not in {LAYERS}")

    w = init_weights(spec, rng)
    theta = np.zeros(spec.map_size)
    presenter = _Presenter(spec, w, theta)
    S = len(dataset)
    outcome = earlystop.new_outcome(S, criteria)
    monitored = {c.layer for c in criteria}
    want_orders = ngram_order(spec.decoder) is not None
    stopped = False
    activity = None

    for _ in range(spec.epochs):
        earlystop.new_epoch(outcome)
        counts, orders = [], []
        for i in range(S):
            frames = poisson_encode(dataset.images[i], spec.T, rng, spec.r_max)
            raster, inh_total = presenter.present(frames)
            normalize_weights(w, spec.weight_norm, spec.w_max)
            per_neuron = raster.sum(0)
            counts.append(per_neuron)
            if want_orders:
                orders.append(_spike_order(raster))
            sums = {EXCITATORY: int(per_neuron.sum()), INHIBITORY: inh_total}
            earlystop.observe_sample(outcome, {k: v for k, v in sums.items() if k in monitored}, criteria)
            if earlystop.should_stop(outcome, criteria):
                stopped = True
                break
        activity = TrainingActivity(np.array(counts), dataset.labels[: len(counts)].copy(), orders)
        if stopped:
            break

    earlystop.finish(outcome, criteria, stopped)
    net = TrainedNetwork(w_in_exc=w, adaptive_theta=theta, n_classes=dataset.n_classes, activity=activity)
    return net, outcome


def respond(net: TrainedNetwork, spec: NetworkSpec, images: np.ndarray, rng: np.random.Generator,
            want_orders: bool = False):
    """Frozen-network responses (no plasticity, fixed thresholds) for a batch.

    Returns ``(counts, orders)`` with ``counts`` of shape ``(n, map_size)``.
    """
    images = np.atleast_2d(np.asarray(images, dtype=float))
    m = spec.map_size
    w = net.w_in_exc
    all_counts, all_orders = [], []
    for start in range(0, images.shape[0], EVAL_BATCH):
        batch = images[start:start + EVAL_BATCH]
        B = batch.shape[0]
        frames = poisson_encode_batch(batch, spec.T, rng, spec.r_max)
        exc = LIFState.rest((B, m), spec.exc_params, theta=net.adaptive_theta)
        inh = LIFState.rest((B, m), spec.inh_params)
        raster = np.zeros((spec.T, B, m), dtype=bool)
        inh_prev = np.zeros((B, m), dtype=bool)
        for t in range(spec.T):
            drive = frames[t].astype(float) @ w
            if inh_prev.any():
                drive -= spec.inh_strength * (inh_prev.sum(1, keepdims=True) - inh_prev)
            _, s_exc = lif_step(exc, drive, spec.exc_params, adapt=False)
            _, inh_prev = lif_step(inh, spec.exc_strength * s_exc, spec.inh_params, adapt=False)
            raster[t] = s_exc
        all_counts.append(raster.sum(0))
        if want_orders:
            all_orders.extend(_spike_order(raster[:, b]) for b in range(B))
    return np.concatenate(all_counts), all_orders


def assign_labels(net: TrainedNetwork, counts: np.ndarray, labels: np.ndarray,
                  orders: Optional[Sequence[Tuple[int, ...]]] = None,
                  ngram_n: Optional[int] = None) -> TrainedNetwork:
    """Label each neuron with the class of its highest mean spike count.

    Ties go to the lowest class id; neurons silent on every class get label 0
    and are flagged dead. With ``ngram_n`` an n-gram score table is built from
    ``orders``.
    """
    counts = np.asarray(counts, dtype=float).reshape(-1, net.map_size)
    labels = np.asarray(labels, dtype=np.int64)
    k = net.n_classes
    rates = np.zeros((k, net.map_size))
    for c in range(k):
        rows = labels == c
        if rows.any():
            rates[c] = counts[rows].mean(0)
    label_of = rates.argmax(0)
    dead = ~np.any(rates > 0, axis=0)
    label_of[dead] = 0
    table = None
    if ngram_n is not None:
        if orders is None:
            raise ValidationError("n-gram labeling needs spike orders")
        table = {}
        for order, y in zip(orders, labels):
            for i in range(len(order) - ngram_n + 1):
                key = tuple(order[i:i + ngram_n])
                scores = table.get(key)
                if scores is None:
                    scores = table[key] = np.zeros(k)
                scores[y] += 1
    return replace(net, label_of_neuron=label_of, dead=dead, ngram_table=table)


def decode(net: TrainedNetwork, counts: np.ndarray, decoder: str,
           orders: Optional[Sequence[Tuple[int, ...]]] = None) -> np.ndarray:
    """Predicted class per sample; samples with no spikes predict class 0."""
    if net.label_of_neuron is None:
        raise ValidationError("labels must be assigned before decoding")
    _check_decoder(decoder)
    counts = np.asarray(counts, dtype=float).reshape(-1, net.map_size)
    silent = counts.sum(1) == 0
    k = net.n_classes
    n = ngram_order(decoder)
    if decoder == "Max":
        pred = net.label_of_neuron[counts.argmax(1)]
    elif decoder == "Average":
        scores = np.zeros((counts.shape[0], k))
        alive = ~net.dead
        for c in range(k):
            members = alive & (net.label_of_neuron == c)
            if members.any():
                scores[:, c] = counts[:, members].mean(1)
        pred = scores.argmax(1)
    else:
        if net.ngram_table is None:
            raise ValidationError(f"decoder {decoder!r} needs an n-gram table")
        if orders is None:
            raise ValidationError(f"decoder {decoder!r} needs spike orders")
        pred = np.zeros(counts.shape[0], dtype=np.int64)
        for s, order in enumerate(orders):
            score = np.zeros(k)
            for i in range(len(order) - n + 1):
                hit = net.ngram_table.get(tuple(order[i:i + n]))
                if hit is not None:
                    score += hit
            pred[s] = int(score.argmax())
    pred = np.asarray(pred, dtype=np.int64)
    pred[silent] = 0
    return pred


def accuracy(predictions: np.ndarray, labels: np.ndarray) -> float:
    labels = np.asarray(labels)
    if labels.size == 0:
        raise ValidationError("accuracy of an empty dataset is undefined")
    return float(np.mean(np.asarray(predictions) == labels))


def evaluate(net: TrainedNetwork, spec: NetworkSpec, dataset: Dataset, rng: np.random.Generator,
             decoder: Optional[str] = None) -> float:
    """Accuracy of the frozen network on ``dataset`` under ``decoder``."""
    decoder = spec.decoder if decoder is None else decoder
    want_orders = ngram_order(decoder) is not None
    counts, orders = respond(net, spec, dataset.images, rng, want_orders=want_orders)
    return accuracy(decode(net, counts, decoder, orders if want_orders else None), dataset.labels)
