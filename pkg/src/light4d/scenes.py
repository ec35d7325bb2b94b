"""Procedural synthetic scenes with analytic ground truth.

Orthographic renders of spheres and planes under a yaw sweep, with
per-frame normals, albedo, and masks exposed so relighting can be checked
against a closed-form reference.  Normals are stored in the canonical
(yaw-zero) camera frame; rotating the camera by yaw theta therefore shows
up as a rotation of the stored normal field frame by frame.

The shading routine here is deliberately written as its own code path (it
must stay independent of the relighting prior's shading so the two can
cross-check each other).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .priors import SceneBuffers
from .types import CameraTrajectory, LightingSpec, VideoTensor

KINDS = ("sphere", "textured_plane", "two_spheres")
ALBEDO_PATTERNS = ("constant", "checker", "gradient")
SWEEP_RANGES = (30, 90, 180)

# checker cell colors (high / low), used for 3-channel renders
_CHECKER_HI = (0.85, 0.60, 0.35)
_CHECKER_LO = (0.25, 0.45, 0.75)


def camera_sweep(range_deg: int, frames: int) -> CameraTrajectory:
    """Linear yaw sweep from -range/2 to +range/2 over ``frames`` frames."""
    if range_deg not in SWEEP_RANGES:
        raise ValueError(f"sweep range must be one of {SWEEP_RANGES}, got {range_deg}")
    if frames < 2:
        raise ValueError(f"need at least 2 frames, got {frames}")
    half = range_deg / 2.0
    return CameraTrajectory(yaw_deg=np.linspace(-half, half, frames))


@dataclass(frozen=True)
class SceneSpec:
    kind: str = "sphere"
    height: int = 64
    width: int = 64
    frames: int = 16
    yaw_start: float = -15.0
    yaw_end: float = 15.0
    albedo: str = "checker"
    albedo_base: float = 0.75
    motion_amplitude: float = 0.0
    background: float = 0.05
    channels: int = 3

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"kind must be one of {KINDS}, got {self.kind!r}")
        if self.albedo not in ALBEDO_PATTERNS:
            raise ValueError(f"albedo must be one of {ALBEDO_PATTERNS}, got {self.albedo!r}")
        if min(self.height, self.width) < 8:
            raise ValueError("resolution too small to rasterize")
        if self.frames < 1:
            raise ValueError("frames must be >= 1")
        for y in (self.yaw_start, self.yaw_end):
            if abs(y) > 90.0:
                raise ValueError(f"|yaw| must be <= 90, got {y}")
        if self.channels not in (1, 3):
            raise ValueError("channels must be 1 or 3")
        if self.motion_amplitude < 0:
            raise ValueError("motion_amplitude must be >= 0")

    def trajectory(self) -> CameraTrajectory:
        if self.frames == 1:
            return CameraTrajectory(yaw_deg=np.array([self.yaw_start]))
        return CameraTrajectory(yaw_deg=np.linspace(self.yaw_start, self.yaw_end, self.frames))

    @property
    def radius_px(self) -> float:
        """Characteristic foreground radius, also the parallax scale."""
        return 0.4 * min(self.height, self.width)


def _yaw_matrix(deg: float) -> np.ndarray:
    rad = math.radians(deg)
    c, s = math.cos(rad), math.sin(rad)
    return np.array([[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]])


def _albedo_at(spec: SceneSpec, pts: np.ndarray) -> np.ndarray:
    """Albedo sampled at object-space points, shape (..., C).

    Patterns are anchored to the object so they travel with it under
    camera rotation: new surface regions reveal new texture.
    """
    base = spec.albedo_base
    if spec.albedo == "constant":
        out = np.full(pts.shape[:-1] + (spec.channels,), base)
        return out
    if spec.albedo == "gradient":
        g = 0.25 + 0.5 * (pts[..., 0] + 1.0) / 2.0
        return np.repeat(g[..., None], spec.channels, axis=-1)
    # checker: 3-d parity of scaled object coordinates
    cells = np.floor(pts * 2.0).astype(np.int64).sum(axis=-1) % 2
    if spec.channels == 1:
        return np.where(cells[..., None] == 0, base, 0.25)
    hi = np.array(_CHECKER_HI) * (base / 0.85)
    lo = np.array(_CHECKER_LO)
    return np.where(cells[..., None] == 0, hi, lo)


def _object_offsets(spec: SceneSpec) -> np.ndarray:
    """World-space horizontal translation per frame (sinusoidal motion)."""
    f = np.arange(spec.frames, dtype=np.float64)
    if spec.frames > 1:
        phase = 2.0 * math.pi * f / spec.frames
    else:
        phase = np.zeros(1)
    return spec.motion_amplitude * np.sin(phase)


def _rasterize_sphere(
    spec: SceneSpec, yaw: float, center_world: np.ndarray, radius: float
) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """One orthographic sphere: (normals_world, points_obj, mask, depth)."""
    h, w = spec.height, spec.width
    cy, cx = (h - 1) / 2.0, (w - 1) / 2.0
    rot = _yaw_matrix(yaw)
    # camera-space center of the sphere under the rotated camera
    center_cam = rot.T @ center_world
    ys, xs = np.mgrid[0:h, 0:w]
    nx = (xs - (cx + center_cam[0])) / radius
    ny = ((cy - ys) - center_cam[1]) / radius
    rr = nx**2 + ny**2
    mask = rr <= 1.0
    nz = np.sqrt(np.maximum(0.0, 1.0 - rr))
    normals_cam = np.stack([nx, ny, nz], axis=-1)
    normals_world = np.einsum("ij,hwj->hwi", rot, normals_cam)
    points_obj = normals_world  # unit sphere: surface point == normal
    depth = np.where(mask, nz * radius + center_cam[2], -np.inf)
    return normals_world, points_obj, mask, depth


def _rasterize_plane(spec: SceneSpec, yaw: float, offset_world: float):
    h, w = spec.height, spec.width
    cy, cx = (h - 1) / 2.0, (w - 1) / 2.0
    extent = spec.radius_px
    cos_t = math.cos(math.radians(yaw))
    ys, xs = np.mgrid[0:h, 0:w]
    x_cam = xs - cx
    y_cam = cy - ys
    if cos_t < 1e-6:
        mask = np.zeros((h, w), dtype=bool)
        u = np.zeros((h, w))
    else:
        u = (x_cam / cos_t - offset_world) / extent
        mask = (np.abs(u) <= 1.0) & (np.abs(y_cam / extent) <= 1.0)
    v = y_cam / extent
    normals_world = np.zeros((h, w, 3))
    normals_world[..., 2] = 1.0
    points_obj = np.stack([u, v, np.zeros_like(u)], axis=-1)
    depth = np.where(mask, 0.0, -np.inf)
    return normals_world, points_obj, mask, depth


@dataclass(frozen=True)
class RenderedScene:
    """A rendered sweep plus the buffers that generated it."""

    spec: SceneSpec
    light: LightingSpec
    video: VideoTensor
    buffers: SceneBuffers
    trajectory: CameraTrajectory
    points: np.ndarray = field(repr=False, default=None)

    @property
    def normals(self) -> np.ndarray:
        return self.buffers.normals

    @property
    def albedo(self) -> np.ndarray:
        return self.buffers.albedo

    @property
    def mask(self) -> np.ndarray:
        return self.buffers.mask

    def relit(self, light: LightingSpec) -> VideoTensor:
        """Analytic ground-truth render of the same sweep under another light."""
        return shade_scene(self.buffers, light)


def shade_scene(buffers: SceneBuffers, light: LightingSpec) -> VideoTensor:
    """Reference Lambertian shading used for ground truth.

    Kept separate from the relighting prior's implementation on purpose;
    the two must agree numerically without sharing code.
    """
    frames = buffers.normals.shape[0]
    out = np.full(buffers.albedo.shape, buffers.background, dtype=np.float64)
    for f in range(frames):
        cos_term = np.einsum("hwk,k->hw", buffers.normals[f], light.direction)
        cos_term = np.where(cos_term > 0.0, cos_term, 0.0)
        lit = buffers.albedo[f] * (cos_term * light.intensity + light.ambient)[..., None]
        m = buffers.mask[f]
        out[f][m] = lit[m]
    return VideoTensor(np.clip(out, 0.0, 1.0))


def render(spec: SceneSpec, light: LightingSpec) -> RenderedScene:
    trajectory = spec.trajectory()
    offsets = _object_offsets(spec)
    h, w, c = spec.height, spec.width, spec.channels
    normals = np.zeros((spec.frames, h, w, 3))
    albedo = np.zeros((spec.frames, h, w, c))
    mask = np.zeros((spec.frames, h, w), dtype=bool)
    points = np.zeros((spec.frames, h, w, 3))
    radius = spec.radius_px

    for f in range(spec.frames):
        yaw = float(trajectory.yaw_deg[f])
        parts = []
        if spec.kind == "sphere":
            center = np.array([offsets[f], 0.0, 0.0])
            parts.append(_rasterize_sphere(spec, yaw, center, radius))
        elif spec.kind == "two_spheres":
            r2 = radius * 0.55
            left = np.array([-0.5 * radius + offsets[f], 0.0, 0.0])
            right = np.array([0.5 * radius - offsets[f], 0.0, 0.0])
            parts.append(_rasterize_sphere(spec, yaw, left, r2))
            parts.append(_rasterize_sphere(spec, yaw, right, r2))
        else:
            parts.append(_rasterize_plane(spec, yaw, offsets[f]))

        depth_best = np.full((h, w), -np.inf)
        for n_world, pts_obj, m, depth in parts:
            closer = m & (depth > depth_best)
            depth_best = np.where(closer, depth, depth_best)
            normals[f][closer] = n_world[closer]
            points[f][closer] = pts_obj[closer]
            mask[f] |= closer
        albedo[f] = _albedo_at(spec, points[f])

    buffers = SceneBuffers(normals=normals, albedo=albedo, mask=mask, background=spec.background)
    video = shade_scene(buffers, light)
    points.flags.writeable = False
    return RenderedScene(
        spec=spec, light=light, video=video, buffers=buffers, trajectory=trajectory, points=points
    )


def render_static(spec: SceneSpec, light: LightingSpec, yaw: float = 0.0) -> RenderedScene:
    """Same scene with the camera parked at one yaw (monocular source)."""
    return render(replace(spec, yaw_start=yaw, yaw_end=yaw), light)
