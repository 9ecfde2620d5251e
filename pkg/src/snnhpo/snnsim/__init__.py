"""Desk-scale spiking network simulator used as the optimization black box."""
from .blackbox import Evaluation, SNNBlackBox, SNNProfile, spec_from_config
from .datasets import Dataset, Splits, load_idx, synthetic_blobs
from .encoding import poisson_encode, poisson_encode_batch
from .learning import normalize_weights, stdp_update
from .network import NetworkSpec, TrainedNetwork, assign_labels, decode, evaluate, respond, train
from .neurons import LIFState, NeuronParams, lif_step

__all__ = [
    "Dataset", "Evaluation", "LIFState", "NetworkSpec", "NeuronParams", "SNNBlackBox", "SNNProfile",
    "Splits", "TrainedNetwork", "assign_labels", "decode", "evaluate", "lif_step", "load_idx",
    "normalize_weights", "poisson_encode", "poisson_encode_batch", "respond", "spec_from_config",
    "stdp_update", "synthetic_blobs", "train",
]
