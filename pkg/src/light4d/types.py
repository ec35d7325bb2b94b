"""Core tensor and sequence types shared by every stage of the pipeline.

Conventions: pixel space is real-valued in [0, 1], frame-major layout
(F, H, W, C); latent space is (F, h, w, c). Values are stored as float64
and frozen (read-only arrays) after construction, so instances are safe
to share across workers. Mutation happens by building a new instance.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Union

import numpy as np


def _freeze(data, dtype=np.float64) -> np.ndarray:
    arr = np.array(data, dtype=dtype, copy=True)
    arr.flags.writeable = False
    return arr


@dataclass(frozen=True)
class VideoTensor:
    """Pixel-space frame sequence, shape (F, H, W, C) with C in {1, 3}."""

    data: np.ndarray

    def __post_init__(self):
        arr = _freeze(self.data)
        if arr.ndim != 4:
            raise ValueError(f"expected 4-d (F,H,W,C) array, got shape {arr.shape}")
        if arr.shape[0] < 1:
            raise ValueError("need at least one frame")
        if arr.shape[3] not in (1, 3):
            raise ValueError(f"channels must be 1 or 3, got {arr.shape[3]}")
        object.__setattr__(self, "data", arr)

    @property
    def frames(self) -> int:
        return self.data.shape[0]

    @property
    def height(self) -> int:
        return self.data.shape[1]

    @property
    def width(self) -> int:
        return self.data.shape[2]

    @property
    def channels(self) -> int:
        return self.data.shape[3]

    @property
    def shape(self) -> tuple[int, int, int, int]:
        return self.data.shape

    def clamped(self) -> "VideoTensor":
        """Copy with values clipped to the [0, 1] output range."""
        return VideoTensor(np.clip(self.data, 0.0, 1.0))


@dataclass(frozen=True)
class LatentVideo:
    """Latent-space state traversed by the flow solver, shape (F, h, w, c)."""

    data: np.ndarray

    def __post_init__(self):
        arr = _freeze(self.data)
        if arr.ndim != 4:
            raise ValueError(f"expected 4-d (F,h,w,c) array, got shape {arr.shape}")
        if arr.shape[0] < 1:
            raise ValueError("need at least one frame")
        object.__setattr__(self, "data", arr)

    @property
    def frames(self) -> int:
        return self.data.shape[0]

    @property
    def shape(self) -> tuple[int, int, int, int]:
        return self.data.shape


@dataclass(frozen=True)
class FeatureSequence:
    """Per-frame token features, shape (F, N, d); N and d constant over frames."""

    data: np.ndarray

    def __post_init__(self):
        arr = _freeze(self.data)
        if arr.ndim != 3:
            raise ValueError(f"expected 3-d (F,N,d) array, got shape {arr.shape}")
        if arr.shape[2] == 0:
            raise ValueError("feature dimension must be positive")
        object.__setattr__(self, "data", arr)

    @property
    def frames(self) -> int:
        return self.data.shape[0]

    @property
    def tokens(self) -> int:
        return self.data.shape[1]

    @property
    def dim(self) -> int:
        return self.data.shape[2]


# Label -> direction table for the builtin lighting tags.  Directions live in
# the canonical (yaw-zero) camera frame: +x right, +y up, +z toward camera.
LIGHT_DIRECTIONS = {
    "Left": (-1.0, 0.0, 0.3),
    "Right": (1.0, 0.0, 0.3),
    "Top": (0.0, 1.0, 0.3),
    "Bottom": (0.0, -1.0, 0.3),
    "Front": (0.0, 0.0, 1.0),
}


@dataclass(frozen=True)
class LightingSpec:
    """Target illumination: unit direction (toward the light), scalar gains."""

    direction: np.ndarray
    intensity: float = 1.0
    ambient: float = 0.1
    label: str = ""

    def __post_init__(self):
        d = _freeze(self.direction)
        if d.shape != (3,):
            raise ValueError(f"direction must be a 3-vector, got {d.shape}")
        norm = float(np.linalg.norm(d))
        if abs(norm - 1.0) > 1e-6:
            raise ValueError(f"direction must be unit length, |d|={norm}")
        if self.intensity < 0:
            raise ValueError("intensity must be nonnegative")
        if not 0.0 <= self.ambient <= 1.0:
            raise ValueError("ambient must lie in [0, 1]")
        object.__setattr__(self, "direction", d)

    @classmethod
    def from_label(cls, label: str, intensity: float = 1.0, ambient: float = 0.1) -> "LightingSpec":
        if label not in LIGHT_DIRECTIONS:
            raise ValueError(f"unknown lighting label {label!r}; known: {sorted(LIGHT_DIRECTIONS)}")
        raw = np.array(LIGHT_DIRECTIONS[label], dtype=np.float64)
        return cls(direction=raw / np.linalg.norm(raw), intensity=intensity, ambient=ambient, label=label)


@dataclass(frozen=True)
class CameraTrajectory:
    """Per-frame yaw angles in degrees; |yaw| <= 90 everywhere."""

    yaw_deg: np.ndarray
    poses: np.ndarray | None = field(default=None)

    def __post_init__(self):
        yaw = _freeze(self.yaw_deg)
        if yaw.ndim != 1 or yaw.shape[0] < 1:
            raise ValueError("yaw_deg must be a nonempty 1-d sequence")
        if np.any(np.abs(yaw) > 90.0 + 1e-12):
            raise ValueError("|yaw| must be <= 90 degrees for every frame")
        object.__setattr__(self, "yaw_deg", yaw)
        if self.poses is not None:
            poses = _freeze(self.poses)
            if poses.shape != (yaw.shape[0], 3, 4):
                raise ValueError(f"poses must be (F,3,4), got {poses.shape}")
            object.__setattr__(self, "poses", poses)

    @property
    def frames(self) -> int:
        return self.yaw_deg.shape[0]


Tensor = Union[VideoTensor, LatentVideo]


def video_like(reference: VideoTensor, fill: float) -> VideoTensor:
    """New video of the same shape as ``reference`` with every entry = fill."""
    return VideoTensor(np.full(reference.shape, float(fill)))


def assert_finite(tensor: Tensor | np.ndarray, name: str = "tensor") -> None:
    """Raise ValueError naming the first non-finite entry, if any."""
    arr = tensor.data if isinstance(tensor, (VideoTensor, LatentVideo)) else np.asarray(tensor)
    bad = ~np.isfinite(arr)
    if bad.any():
        idx = tuple(int(i) for i in np.argwhere(bad)[0])
        raise ValueError(f"{name} has non-finite value {arr[idx]!r} at index {idx}")
