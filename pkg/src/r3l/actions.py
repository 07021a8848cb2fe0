"""Mapping raw actor outputs to self-financing portfolio weights.

Raw scores go through a softmax onto the simplex, then through the
affine transform w_i = SA_i * delta - (delta - 1)/n. The transform
keeps the weights summing to one while allowing bounded short
positions: each weight lies in (-(delta-1)/n, delta - (delta-1)/n).
delta = 1 leaves the softmax output untouched; delta = 0 collapses
everything to 1/n.

All functions accept a single vector or any batch shape (..., n) and
are pure; the differentiable path used inside the learner composes the
same math from tape ops.
"""

from __future__ import annotations

import numpy as np

SUM_TOL = 1e-9


def softmax(raw: np.ndarray) -> np.ndarray:
    """Numerically safe softmax over the last axis."""
    raw = np.asarray(raw, dtype=np.float64)
    if not np.all(np.isfinite(raw)):
        raise ValueError("raw action contains non-finite entries")
    shifted = raw - raw.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=-1, keepdims=True)


def delta_transform(sa: np.ndarray, delta: float) -> np.ndarray:
    """Map simplex vectors to weights with short selling bounded by delta."""
    if delta < 0.0:
        raise ValueError(f"delta must be >= 0, got {delta}")
    sa = np.asarray(sa, dtype=np.float64)
    n = sa.shape[-1]
    w = sa * delta - (delta - 1.0) / n
    sums = w.sum(axis=-1)
    if not np.all(np.abs(sums - 1.0) <= SUM_TOL):
        raise AssertionError("weights drifted off the self-financing budget")
    return w


def action_to_weights(raw: np.ndarray, delta: float) -> np.ndarray:
    """Full raw-scores-to-weights pipeline: softmax then delta transform."""
    return delta_transform(softmax(raw), delta)


def weight_bounds(delta: float, n: int) -> tuple[float, float]:
    """Open-interval per-asset bounds implied by the delta transform."""
    lo = -(delta - 1.0) / n
    return lo, delta + lo
