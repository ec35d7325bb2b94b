"""Classical dense optical flow (Horn-Schunck) with a coarse-to-fine pyramid.

Flow convention: (u, v) maps a pixel of the first frame to its location in
the second, i.e. I2(x + u, y + v) ~= I1(x, y).  Content moving right by one
pixel per frame therefore reports u = +1.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage

# classic neighborhood-average stencil for the smoothness term
_AVG = np.array(
    [[1 / 12, 1 / 6, 1 / 12], [1 / 6, 0.0, 1 / 6], [1 / 12, 1 / 6, 1 / 12]]
)
_DX = np.array([[-1.0, 1.0], [-1.0, 1.0]]) * 0.25
_DY = np.array([[-1.0, -1.0], [1.0, 1.0]]) * 0.25
_DT = np.ones((2, 2)) * 0.25


@dataclass(frozen=True)
class FlowConfig:
    alpha: float = 10.0
    iterations: int = 200
    pyramid_levels: int = 3
    presmooth_sigma: float = 2.0

    def __post_init__(self):
        if self.alpha <= 0:
            raise ValueError(f"alpha must be positive, got {self.alpha}")
        if self.iterations < 1:
            raise ValueError(f"iterations must be >= 1, got {self.iterations}")
        if self.pyramid_levels < 1:
            raise ValueError(f"pyramid_levels must be >= 1, got {self.pyramid_levels}")


def warp_bilinear(image: np.ndarray, u: np.ndarray, v: np.ndarray) -> np.ndarray:
    """Backward-warp ``image`` by sampling at (x + u, y + v), edges clamped.

    Works on (H, W) or (H, W, C) arrays; u/v broadcast against (H, W).
    """
    h, w = image.shape[:2]
    ys, xs = np.mgrid[0:h, 0:w]
    sx = np.clip(xs + u, 0.0, w - 1.0)
    sy = np.clip(ys + v, 0.0, h - 1.0)
    x0 = np.floor(sx).astype(np.int64)
    y0 = np.floor(sy).astype(np.int64)
    x1 = np.minimum(x0 + 1, w - 1)
    y1 = np.minimum(y0 + 1, h - 1)
    fx = sx - x0
    fy = sy - y0
    if image.ndim == 3:
        fx = fx[..., None]
        fy = fy[..., None]
    top = image[y0, x0] * (1 - fx) + image[y0, x1] * fx
    bot = image[y1, x0] * (1 - fx) + image[y1, x1] * fx
    return top * (1 - fy) + bot * fy


def _downsample(image: np.ndarray) -> np.ndarray:
    h, w = image.shape
    h2, w2 = h - h % 2, w - w % 2
    blocks = image[:h2, :w2].reshape(h2 // 2, 2, w2 // 2, 2)
    return blocks.mean(axis=(1, 3))


def _hs_single_level(i1: np.ndarray, i2: np.ndarray, u: np.ndarray, v: np.ndarray, cfg: FlowConfig):
    # correlate (not convolve): the derivative stencils are directional
    fx = ndimage.correlate(i1, _DX, mode="nearest") + ndimage.correlate(i2, _DX, mode="nearest")
    fy = ndimage.correlate(i1, _DY, mode="nearest") + ndimage.correlate(i2, _DY, mode="nearest")
    ft = ndimage.correlate(i2, _DT, mode="nearest") - ndimage.correlate(i1, _DT, mode="nearest")
    denom = cfg.alpha**2 + fx**2 + fy**2
    for _ in range(cfg.iterations):
        u_avg = ndimage.correlate(u, _AVG, mode="nearest")
        v_avg = ndimage.correlate(v, _AVG, mode="nearest")
        shared = (fx * u_avg + fy * v_avg + ft) / denom
        u = u_avg - fx * shared
        v = v_avg - fy * shared
    return u, v


def estimate_flow(frame1: np.ndarray, frame2: np.ndarray, cfg: FlowConfig | None = None) -> np.ndarray:
    """Dense flow between two grayscale frames, returned as (H, W, 2) = (u, v).

    alpha is calibrated for 8-bit dynamic range, so inputs are rescaled to
    0..255 internally regardless of their incoming scale.
    """
    cfg = cfg or FlowConfig()
    i1 = np.asarray(frame1, dtype=np.float64) * 255.0
    i2 = np.asarray(frame2, dtype=np.float64) * 255.0
    if i1.shape != i2.shape or i1.ndim != 2:
        raise ValueError(f"frames must be equal-shape 2-d arrays, got {i1.shape} vs {i2.shape}")
    if cfg.presmooth_sigma > 0:
        i1 = ndimage.gaussian_filter(i1, cfg.presmooth_sigma, mode="nearest")
        i2 = ndimage.gaussian_filter(i2, cfg.presmooth_sigma, mode="nearest")

    pyr1, pyr2 = [i1], [i2]
    for _ in range(cfg.pyramid_levels - 1):
        if min(pyr1[-1].shape) < 8:
            break
        pyr1.append(_downsample(pyr1[-1]))
        pyr2.append(_downsample(pyr2[-1]))

    u = np.zeros_like(pyr1[-1])
    v = np.zeros_like(pyr1[-1])
    for level in range(len(pyr1) - 1, -1, -1):
        a, b = pyr1[level], pyr2[level]
        if u.shape != a.shape:
            u = 2.0 * _upsample_to(u, a.shape)
            v = 2.0 * _upsample_to(v, a.shape)
        warped = warp_bilinear(b, u, v)
        du, dv = _hs_single_level(a, warped, np.zeros_like(a), np.zeros_like(a), cfg)
        u = u + du
        v = v + dv
    return np.stack([u, v], axis=-1)


def _upsample_to(arr: np.ndarray, shape: tuple[int, int]) -> np.ndarray:
    up = np.repeat(np.repeat(arr, 2, axis=0), 2, axis=1)
    out = np.zeros(shape)
    h = min(shape[0], up.shape[0])
    w = min(shape[1], up.shape[1])
    out[:h, :w] = up[:h, :w]
    if shape[0] > h:
        out[h:, :w] = out[h - 1 : h, :w]
    if shape[1] > w:
        out[:, w:] = out[:, w - 1 : w]
    return out


def video_flows(luma: np.ndarray, cfg: FlowConfig | None = None) -> np.ndarray:
    """Flows for all consecutive pairs of a (F, H, W) luminance stack."""
    if luma.shape[0] < 2:
        raise ValueError("need at least 2 frames for flow")
    return np.stack([estimate_flow(luma[f], luma[f + 1], cfg) for f in range(luma.shape[0] - 1)])
