"""Pair-based STDP with soft weight bounds, and column weight normalization."""
from __future__ import annotations

import numpy as np

from ..exceptions import ValidationError


def stdp_update(w: np.ndarray, pre_trace: np.ndarray, post_trace: np.ndarray,
                pre_spikes: np.ndarray, post_spikes: np.ndarray,
                lambda_minus: float, lambda_plus: float, w_max: float = 1.0) -> np.ndarray:
    """Apply one step of trace-based STDP to ``w`` (``n_pre x n_post``) in place.

    Traces must already be decayed for this step and not yet bumped by this
    step's spikes. A post-synaptic spike potentiates by
    ``lambda_plus * pre_trace * (w_max - w)``; a pre-synaptic spike depresses
    by ``lambda_minus * post_trace * w``.
    """
    pre_idx = np.flatnonzero(pre_spikes)
    post_idx = np.flatnonzero(post_spikes)
    if pre_idx.size and lambda_minus:
        rows = w[pre_idx]
        rows -= lambda_minus * post_trace[None, :] * rows
        w[pre_idx] = np.clip(rows, 0.0, w_max, out=rows)
    if post_idx.size and lambda_plus:
        cols = w[:, post_idx]
        cols += lambda_plus * pre_trace[:, None] * (w_max - cols)
        w[:, post_idx] = np.clip(cols, 0.0, w_max, out=cols)
    return w


def normalize_weights(w: np.ndarray, target: float, w_max: float = np.inf) -> np.ndarray:
    """Rescale each column of ``w`` in place so it sums to ``target``.

    All-zero columns are left untouched. With a finite ``w_max`` the scale
    factor is chosen so that ``sum(min(s * w, w_max)) == target`` (weights
    that would overshoot the cap saturate and the rest absorb the remainder);
    if even full saturation cannot reach ``target`` the column saturates.
    """
    if not target > 0:
        raise ValidationError("normalization target must be > 0")
    sums = w.sum(0)
    live = sums > 0
    if not live.any():
        return w
    w[:, live] *= target / sums[live]
    if np.isfinite(w_max) and w.max() > w_max:
        cols = np.flatnonzero(live & (w.max(0) > w_max))
        w[:, cols] = _capped_rescale(w[:, cols], target, w_max)
    return w


def _capped_rescale(cols: np.ndarray, target: float, w_max: float) -> np.ndarray:
    # per column, solve sum(min(s * col, w_max)) = target for s: with values
    # sorted descending, the k largest saturate for the first k that leaves
    # the (k+1)-th below the cap
    vals = -np.sort(-cols, axis=0)
    n_pos = (vals > 0).sum(0)
    tail = np.cumsum(vals[::-1], axis=0)[::-1]  # tail[k] = sum(vals[k:])
    k = np.arange(vals.shape[0])[:, None]
    with np.errstate(divide="ignore", invalid="ignore"):
        scales = (target - k * w_max) / tail
        ok = (scales * vals <= w_max) & (k < n_pos)
    first = ok.argmax(0)
    scale = scales[first, np.arange(cols.shape[1])]
    out = np.minimum(cols * scale, w_max)
    full = target >= n_pos * w_max
    if full.any():
        out[:, full] = np.where(cols[:, full] > 0, w_max, 0.0)
    return out
