"""Temporal consistent attention.

Queries stay frame-specific; keys and values are smoothed over a Gaussian
temporal window before attention, and the two attention outputs are mixed
by gamma.  With gamma=0 (or a zero-radius window) the module reduces
bit-exactly to plain per-frame attention.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .types import FeatureSequence


@dataclass(frozen=True)
class TcaConfig:
    radius: int = 2
    window_sigma: float = 1.0
    gamma: float = 0.7
    normalize_weights: bool = True

    def __post_init__(self):
        if self.radius < 0:
            raise ValueError(f"radius must be >= 0, got {self.radius}")
        if self.window_sigma <= 0:
            raise ValueError(f"window_sigma must be positive, got {self.window_sigma}")
        if not 0.0 <= self.gamma <= 1.0:
            raise ValueError(f"gamma must lie in [0, 1], got {self.gamma}")


@dataclass(frozen=True)
class AttentionOutput:
    out: FeatureSequence
    orig: FeatureSequence
    cons: FeatureSequence


def window_weights(radius: int, sigma: float) -> np.ndarray:
    """Gaussian taps w(d) = exp(-d^2 / (2 sigma^2)) for d in [-r, r]."""
    d = np.arange(-radius, radius + 1, dtype=np.float64)
    return np.exp(-(d**2) / (2.0 * sigma**2))


def smooth_context(
    keys: FeatureSequence, values: FeatureSequence, cfg: TcaConfig
) -> tuple[FeatureSequence, FeatureSequence]:
    """Aggregate K and V over the temporal neighborhood |f - j| <= radius.

    The window is truncated at the sequence edges; with normalization on
    (the default) the surviving weights are rescaled to sum to 1 so a
    constant-in-time sequence is a fixed point.
    """
    if keys.data.shape != values.data.shape:
        raise ValueError(f"K and V must share a shape, got {keys.data.shape} vs {values.data.shape}")
    frames = keys.frames
    taps = window_weights(cfg.radius, cfg.window_sigma)
    k_out = np.empty_like(keys.data)
    v_out = np.empty_like(values.data)
    for f in range(frames):
        lo = max(0, f - cfg.radius)
        hi = min(frames - 1, f + cfg.radius)
        w = taps[lo - f + cfg.radius : hi - f + cfg.radius + 1]
        if cfg.normalize_weights:
            w = w / w.sum()
        k_out[f] = np.tensordot(w, keys.data[lo : hi + 1], axes=(0, 0))
        v_out[f] = np.tensordot(w, values.data[lo : hi + 1], axes=(0, 0))
    return FeatureSequence(k_out), FeatureSequence(v_out)


def attention(q: np.ndarray, k: np.ndarray, v: np.ndarray) -> np.ndarray:
    """Single-frame scaled dot-product attention, softmax stabilized by row max."""
    q = np.asarray(q, dtype=np.float64)
    k = np.asarray(k, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    d = q.shape[-1]
    if d == 0:
        raise ValueError("feature dimension must be positive")
    logits = q @ k.T / math.sqrt(d)
    logits -= logits.max(axis=-1, keepdims=True)
    weights = np.exp(logits)
    weights /= weights.sum(axis=-1, keepdims=True)
    return weights @ v


def tca_forward(
    queries: FeatureSequence, keys: FeatureSequence, values: FeatureSequence, cfg: TcaConfig
) -> AttentionOutput:
    """Dual-path attention: out = (1 - gamma) * orig + gamma * cons."""
    if not (queries.data.shape[0] == keys.data.shape[0] == values.data.shape[0]):
        raise ValueError("Q, K, V must agree on frame count")
    k_bar, v_bar = smooth_context(keys, values, cfg)
    orig = np.stack([attention(queries.data[f], keys.data[f], values.data[f]) for f in range(queries.frames)])
    cons = np.stack([attention(queries.data[f], k_bar.data[f], v_bar.data[f]) for f in range(queries.frames)])
    out = (1.0 - cfg.gamma) * orig + cfg.gamma * cons
    return AttentionOutput(out=FeatureSequence(out), orig=FeatureSequence(orig), cons=FeatureSequence(cons))
