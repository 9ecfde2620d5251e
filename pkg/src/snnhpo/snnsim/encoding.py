"""Rate (Poisson) encoding of intensity images into frame-based spike trains."""
from __future__ import annotations

import numpy as np

from ..exceptions import ValidationError

DEFAULT_R_MAX = 0.25


def poisson_encode(image, T: int, rng: np.random.Generator, r_max: float = DEFAULT_R_MAX) -> np.ndarray:
    """Bernoulli spikes per frame with probability ``intensity * r_max``.

    Returns a boolean ``(T, n_pixels)`` array. ``image`` may be any shape; it
    is flattened.
    """
    x = np.asarray(image, dtype=float).ravel()
    if T < 0:
        raise ValidationError(f"T must be >= 0, got {T}")
    if not 0.0 < r_max <= 1.0:
        raise ValidationError(f"r_max must lie in (0, 1], got {r_max}")
    if x.size and (x.min() < 0.0 or x.max() > 1.0):
        raise ValidationError("intensities must lie in [0, 1]")
    return rng.random((T, x.size)) < x * r_max


def poisson_encode_batch(images, T: int, rng: np.random.Generator,
                         r_max: float = DEFAULT_R_MAX) -> np.ndarray:
    """Encode a ``(B, n_pixels)`` batch into a ``(T, B, n_pixels)`` raster."""
    X = np.asarray(images, dtype=float)
    if X.ndim != 2:
        raise ValidationError("batch must be two-dimensional")
    if X.size and (X.min() < 0.0 or X.max() > 1.0):
        raise ValidationError("intensities must lie in [0, 1]")
    return rng.random((T,) + X.shape) < X * r_max
