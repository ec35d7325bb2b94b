"""Deterministic coherence regularizers.

Three mechanisms keep per-frame predictions temporally stable without any
learning: a canonical noise map broadcast to every frame, per-frame affine
moment alignment against the sequence average, and a frequency-decoupled
split that temporally smooths only the spatial low band.  A gated temporal
smoother for final outputs lives here too.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .types import VideoTensor

log = logging.getLogger(__name__)

TEMPORAL_OPS = ("identity", "moving_average", "gaussian")


@dataclass(frozen=True)
class CanonicalNoise:
    """One standard-normal map shared by all frames (epsilon_f = epsilon_shared)."""

    seed: int
    base: np.ndarray
    frames: int

    def __post_init__(self):
        arr = np.array(self.base, dtype=np.float64, copy=True)
        arr.flags.writeable = False
        if arr.ndim != 3:
            raise ValueError(f"base map must be (h,w,c), got {arr.shape}")
        if self.frames < 1:
            raise ValueError("frames must be >= 1")
        object.__setattr__(self, "base", arr)

    def frame(self, f: int) -> np.ndarray:
        if not 0 <= f < self.frames:
            raise IndexError(f"frame {f} outside [0, {self.frames})")
        return self.base

    @property
    def shared(self) -> bool:
        return True


@dataclass(frozen=True)
class PerFrameNoise:
    """Independent noise per frame; stands in for canonical noise when the
    broadcast is disabled.  Sampled from OS entropy unless a seed is given,
    so repeated runs genuinely differ."""

    maps: np.ndarray

    def __post_init__(self):
        arr = np.array(self.maps, dtype=np.float64, copy=True)
        arr.flags.writeable = False
        if arr.ndim != 4:
            raise ValueError(f"maps must be (F,h,w,c), got {arr.shape}")
        object.__setattr__(self, "maps", arr)

    @classmethod
    def fresh(cls, h: int, w: int, c: int, frames: int, seed: int | None = None) -> "PerFrameNoise":
        rng = np.random.default_rng(seed)
        return cls(maps=rng.standard_normal((frames, h, w, c)))

    def frame(self, f: int) -> np.ndarray:
        return self.maps[f]

    @property
    def frames(self) -> int:
        return self.maps.shape[0]

    @property
    def shared(self) -> bool:
        return False


def canonical_noise(seed: int, h: int, w: int, c: int, frames: int) -> CanonicalNoise:
    if min(h, w, c, frames) < 1:
        raise ValueError("all dims must be positive")
    rng = np.random.default_rng(seed)
    return CanonicalNoise(seed=seed, base=rng.standard_normal((h, w, c)), frames=frames)


@dataclass(frozen=True)
class MomentStats:
    """Per-channel mean and population std."""

    mean: np.ndarray
    std: np.ndarray

    def __post_init__(self):
        mean = np.atleast_1d(np.asarray(self.mean, dtype=np.float64))
        std = np.atleast_1d(np.asarray(self.std, dtype=np.float64))
        if np.any(std < 0):
            raise ValueError("std must be nonnegative")
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "std", std)


def moment_stats(frame: np.ndarray) -> MomentStats:
    """Per-channel stats of one (H,W,C) frame, population normalization."""
    flat = frame.reshape(-1, frame.shape[-1])
    return MomentStats(mean=flat.mean(axis=0), std=flat.std(axis=0))


def global_moment_match(video: VideoTensor) -> VideoTensor:
    """Align every frame's per-channel mean/std to the sequence references.

    The reference mean is the mean of the temporal-average frame and the
    reference std is the temporal average of the per-frame stds; using the
    averaged std (rather than the std of the averaged frame) makes the
    operation idempotent.  Zero-variance channels pass through unchanged.
    """
    x = video.data
    mu_f = x.mean(axis=(1, 2))  # (F, C)
    sd_f = x.std(axis=(1, 2))
    mu_ref = mu_f.mean(axis=0)  # (C,)
    sd_ref = sd_f.mean(axis=0)
    degenerate = sd_f <= 0.0
    if degenerate.any():
        log.warning("global_moment_match: %d zero-variance frame channels pass through", int(degenerate.sum()))
    scale = np.where(degenerate, 1.0, sd_ref / np.where(degenerate, 1.0, sd_f))
    shift = np.where(degenerate, 0.0, mu_ref - scale * mu_f)
    out = x * scale[:, None, None, :] + shift[:, None, None, :]
    return VideoTensor(out)


def gaussian_taps(window: int, sigma: float) -> np.ndarray:
    """Normalized Gaussian kernel over an odd window."""
    if window % 2 != 1 or window < 1:
        raise ValueError(f"window must be odd and positive, got {window}")
    if sigma <= 0:
        raise ValueError(f"sigma must be positive, got {sigma}")
    d = np.arange(window, dtype=np.float64) - window // 2
    w = np.exp(-(d**2) / (2.0 * sigma**2))
    return w / w.sum()


def uniform_taps(window: int) -> np.ndarray:
    if window % 2 != 1 or window < 1:
        raise ValueError(f"window must be odd and positive, got {window}")
    return np.full(window, 1.0 / window)


@dataclass(frozen=True)
class FdiConfig:
    spatial_sigma: float = 3.0
    temporal_op: str = "gaussian"
    window: int = 9
    temporal_sigma: float = 2.0

    def __post_init__(self):
        if self.spatial_sigma <= 0:
            raise ValueError(f"spatial_sigma must be positive, got {self.spatial_sigma}")
        if self.temporal_op not in TEMPORAL_OPS:
            raise ValueError(f"temporal_op must be one of {TEMPORAL_OPS}, got {self.temporal_op!r}")
        if self.window % 2 != 1 or self.window < 1:
            raise ValueError(f"window must be odd and positive, got {self.window}")
        if self.temporal_sigma <= 0:
            raise ValueError(f"temporal_sigma must be positive, got {self.temporal_sigma}")

    def temporal_taps(self) -> np.ndarray:
        if self.temporal_op == "gaussian":
            return gaussian_taps(self.window, self.temporal_sigma)
        if self.temporal_op == "moving_average":
            return uniform_taps(self.window)
        return np.array([1.0])


def spatial_blur(frames: np.ndarray, sigma: float) -> np.ndarray:
    """Per-frame Gaussian blur, kernel truncated at 3 sigma, reflected edges."""
    out = np.empty_like(frames)
    for f in range(frames.shape[0]):
        for c in range(frames.shape[-1]):
            out[f, :, :, c] = ndimage.gaussian_filter(
                frames[f, :, :, c], sigma=sigma, mode="reflect", truncate=3.0
            )
    return out


def temporal_filter(frames: np.ndarray, taps: np.ndarray) -> np.ndarray:
    """Filter along the frame axis; the window truncates at the sequence
    edges and the surviving taps renormalize to sum to 1."""
    n = frames.shape[0]
    radius = taps.shape[0] // 2
    out = np.zeros_like(frames)
    for f in range(n):
        lo = max(0, f - radius)
        hi = min(n - 1, f + radius)
        w = taps[lo - f + radius : hi - f + radius + 1]
        w = w / w.sum()
        out[f] = np.tensordot(w, frames[lo : hi + 1], axes=(0, 0))
    return out


def fdi_bands(video: VideoTensor, cfg: FdiConfig) -> tuple[np.ndarray, np.ndarray]:
    """(low, high) spatial bands; low = per-frame blur, high = x - low."""
    low = spatial_blur(video.data, cfg.spatial_sigma)
    return low, video.data - low


def fdi_regularize(video: VideoTensor, cfg: FdiConfig) -> VideoTensor:
    """Temporally smooth the spatial low band only, leaving texture intact.

    Computed as x + (T(low) - low), which equals T(low) + high and makes the
    identity operator reconstruct the input bit-exactly.
    """
    low, _high = fdi_bands(video, cfg)
    if cfg.temporal_op == "identity":
        smoothed = low
    else:
        smoothed = temporal_filter(low, cfg.temporal_taps())
    return VideoTensor(video.data + (smoothed - low))


def adaptive_temporal_smooth(
    video: VideoTensor, window: int = 9, sigma: float = 25.0, gate_threshold: float = 1e-4
) -> VideoTensor:
    """Per-pixel temporal Gaussian smoothing gated by local temporal variance.

    blend = clamp(var_local / gate_threshold, 0, 1) per pixel; a
    non-positive threshold applies full smoothing everywhere.
    """
    taps = gaussian_taps(window, sigma)
    x = video.data
    smoothed = temporal_filter(x, taps)
    if gate_threshold <= 0:
        return VideoTensor(smoothed)
    mean_local = temporal_filter(x, uniform_taps(window))
    var_local = temporal_filter(x**2, uniform_taps(window)) - mean_local**2
    var_local = np.maximum(var_local, 0.0)
    blend = np.clip(var_local / gate_threshold, 0.0, 1.0)
    return VideoTensor(x + blend * (smoothed - x))
