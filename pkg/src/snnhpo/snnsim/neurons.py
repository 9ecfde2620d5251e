"""Leaky integrate-and-fire neurons with an adaptive threshold.

Discrete time, one step per frame. State arrays are updated in place so the
same function serves a single neuron, a layer, or a batch of layers.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..exceptions import ValidationError


@dataclass(frozen=True)
class NeuronParams:
    v_th: float
    v_rest: float
    v_reset: float
    tau: float
    t_ref: int = 0
    theta_plus: float = 0.0
    tau_theta: float = math.inf

    def __post_init__(self):
        if not self.tau > 0:
            raise ValidationError("tau must be > 0")
        if self.t_ref < 0 or int(self.t_ref) != self.t_ref:
            raise ValidationError("t_ref must be an integer >= 0")
        if self.v_reset > self.v_th:
            raise ValidationError("v_reset must not exceed v_th")
        if self.theta_plus < 0:
            raise ValidationError("theta_plus must be >= 0")
        if not self.tau_theta > 0:
            raise ValidationError("tau_theta must be > 0")
        object.__setattr__(self, "t_ref", int(self.t_ref))

    @property
    def theta_decay(self) -> float:
        return math.exp(-1.0 / self.tau_theta)


@dataclass
class LIFState:
    v: np.ndarray
    refractory: np.ndarray
    theta: np.ndarray

    @classmethod
    def rest(cls, shape, p: NeuronParams, theta=None) -> "LIFState":
        theta = np.zeros(shape) if theta is None else np.broadcast_to(theta, shape).copy()
        return cls(np.full(shape, float(p.v_rest)), np.zeros(shape, dtype=np.int64), theta)

    def reset(self, p: NeuronParams) -> None:
        """Return membrane and refractory state to rest; theta is kept."""
        self.v.fill(p.v_rest)
        self.refractory.fill(0)


def lif_step(state: LIFState, input_current, p: NeuronParams, adapt: bool = True):
    """Advance ``state`` by one step; returns ``(state, spikes)``.

    Refractory neurons ignore input and hold ``v_reset``. Otherwise the
    membrane leaks toward ``v_rest`` with time constant ``tau`` and integrates
    ``input_current``; a spike fires at ``v >= v_th + theta``. With ``adapt``
    the threshold offset decays by ``exp(-1/tau_theta)`` every step and grows
    by ``theta_plus`` on each spike.
    """
    v = state.v
    ref = state.refractory > 0
    v += (p.v_rest - v) / p.tau + input_current
    spikes = v >= p.v_th + state.theta
    if ref.any():
        v[ref] = p.v_reset
        spikes &= ~ref
        state.refractory[ref] -= 1
    if spikes.any():
        v[spikes] = p.v_reset
        state.refractory[spikes] = p.t_ref
    if adapt and p.theta_plus > 0:
        state.theta *= p.theta_decay
        state.theta[spikes] += p.theta_plus
    return state, spikes


def max_reachable_potential(v_rest: float, T: int, weight_norm: float) -> float:
    """Upper bound on an excitatory membrane potential within one sample.

    Each frame adds at most the neuron's total incoming weight (every input
    spiking), inhibition only subtracts and the leak pulls toward rest, so
    ``v_rest + T * weight_norm`` cannot be exceeded.
    """
    return v_rest + T * weight_norm
