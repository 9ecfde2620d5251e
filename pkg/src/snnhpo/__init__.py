"""Constrained Bayesian hyperparameter optimization for spiking networks."""
__version__ = "0.1.0"
