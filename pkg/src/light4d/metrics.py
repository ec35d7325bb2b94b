"""Non-learned evaluation metrics.

Frame PSNR, warp-aligned SSIM, the high-frequency preservation ratio
(Laplacian energy of the candidate relative to the source), an L1 distance
between classical optical-flow fields, and a flicker-energy diagnostic
(mean squared temporal second difference).  Flow uses the Horn-Schunck
estimator from :mod:`light4d.flow`; per-frame standardization beforehand
makes it insensitive to global gain and bias.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import ndimage

from .flow import FlowConfig, estimate_flow, video_flows, warp_bilinear
from .types import VideoTensor

PSNR_CAP = 99.0
LAPLACIAN = np.array([[0.0, 1.0, 0.0], [1.0, -4.0, 1.0], [0.0, 1.0, 0.0]])
REC601 = np.array([0.299, 0.587, 0.114])

SSIM_C1 = 0.01**2
SSIM_C2 = 0.03**2
SSIM_WINDOW = 11
SSIM_SIGMA = 1.5


def luminance(video: VideoTensor) -> np.ndarray:
    """(F, H, W) luma stack; Rec. 601 weights for 3-channel input."""
    if video.channels == 1:
        return video.data[..., 0]
    return np.tensordot(video.data, REC601, axes=([3], [0]))


def _require_same_shape(a: VideoTensor, b: VideoTensor) -> None:
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {a.shape} vs {b.shape}")


def frame_psnr(a: VideoTensor, b: VideoTensor) -> np.ndarray:
    """Per-frame 10*log10(1/MSE) on [0,1] data, capped to [0, 99]."""
    _require_same_shape(a, b)
    err = a.data - b.data
    mse = (err**2).mean(axis=(1, 2, 3))
    out = np.empty(a.frames)
    for f in range(a.frames):
        if mse[f] <= 0.0:
            out[f] = PSNR_CAP
        else:
            out[f] = min(PSNR_CAP, max(0.0, 10.0 * math.log10(1.0 / mse[f])))
    return out


def _ssim_window() -> np.ndarray:
    half = SSIM_WINDOW // 2
    d = np.arange(-half, half + 1, dtype=np.float64)
    g = np.exp(-(d**2) / (2.0 * SSIM_SIGMA**2))
    w = np.outer(g, g)
    return w / w.sum()


def ssim_frame(x: np.ndarray, y: np.ndarray) -> float:
    """SSIM between two 2-d images with the standard 11x11 Gaussian window.

    Statistics use 'valid' windows only, so every window lies fully inside
    the image (matches a direct sliding-window reference).
    """
    if min(x.shape) < SSIM_WINDOW:
        raise ValueError(f"image must be at least {SSIM_WINDOW}x{SSIM_WINDOW} for SSIM, got {x.shape}")
    win = _ssim_window()
    half = SSIM_WINDOW // 2

    def _filt(img):
        return ndimage.convolve(img, win, mode="constant")[half:-half, half:-half]

    mx = _filt(x)
    my = _filt(y)
    mxx = _filt(x * x)
    myy = _filt(y * y)
    mxy = _filt(x * y)
    vx = mxx - mx**2
    vy = myy - my**2
    cxy = mxy - mx * my
    num = (2 * mx * my + SSIM_C1) * (2 * cxy + SSIM_C2)
    den = (mx**2 + my**2 + SSIM_C1) * (vx + vy + SSIM_C2)
    return float((num / den).mean())


def warp_aligned_ssim(
    a: VideoTensor, b: VideoTensor, flow: np.ndarray
) -> tuple[float, np.ndarray]:
    """Warp each frame of b toward a along ``flow`` (F, H, W, 2), then SSIM.

    Returns (mean, per-frame values), computed on luminance.
    """
    _require_same_shape(a, b)
    flow = np.asarray(flow, dtype=np.float64)
    if flow.shape != (a.frames, a.height, a.width, 2):
        raise ValueError(f"flow must be (F,H,W,2) = {(a.frames, a.height, a.width, 2)}, got {flow.shape}")
    luma_a = luminance(a)
    luma_b = luminance(b)
    vals = np.empty(a.frames)
    for f in range(a.frames):
        warped = warp_bilinear(luma_b[f], flow[f, :, :, 0], flow[f, :, :, 1])
        vals[f] = ssim_frame(luma_a[f], warped)
    return float(vals.mean()), vals


def _laplacian_energy(video: VideoTensor) -> np.ndarray:
    """Per-frame summed squared response of the 4-neighbor Laplacian."""
    out = np.zeros(video.frames)
    for f in range(video.frames):
        for c in range(video.channels):
            resp = ndimage.convolve(video.data[f, :, :, c], LAPLACIAN, mode="reflect")
            out[f] += float((resp**2).sum())
    return out


def hfpr(relit: VideoTensor, source: VideoTensor) -> float:
    """High-frequency preservation ratio: Laplacian energy of relit over source."""
    _require_same_shape(relit, source)
    num = _laplacian_energy(relit).sum()
    den = _laplacian_energy(source).sum()
    if den <= 0.0:
        raise ValueError("source has zero high-frequency energy; HFPR undefined")
    return float(num / den)


def hfpr_series(relit: VideoTensor, source: VideoTensor) -> np.ndarray:
    num = _laplacian_energy(relit)
    den = _laplacian_energy(source)
    return np.where(den > 0, num / np.where(den > 0, den, 1.0), np.nan)


def _standardize_frames(luma: np.ndarray) -> np.ndarray:
    mu = luma.mean(axis=(1, 2), keepdims=True)
    sd = luma.std(axis=(1, 2), keepdims=True)
    sd = np.where(sd > 0, sd, 1.0)
    return (luma - mu) / sd


def motion_flow_l1(
    a: VideoTensor, b: VideoTensor, flow_cfg: FlowConfig | None = None
) -> tuple[float, np.ndarray]:
    """Mean per-pixel L1 distance between the flow fields of a and of b.

    Flows are estimated independently on consecutive-frame pairs of each
    video after per-frame standardization.  Returns (mean, per-pair means).
    """
    _require_same_shape(a, b)
    if a.frames < 2:
        raise ValueError("need at least 2 frames for motion flow")
    fa = video_flows(_standardize_frames(luminance(a)), flow_cfg)
    fb = video_flows(_standardize_frames(luminance(b)), flow_cfg)
    per_pair = np.abs(fa - fb).sum(axis=-1).mean(axis=(1, 2))
    return float(per_pair.mean()), per_pair


def flicker_energy(video: VideoTensor) -> tuple[float, np.ndarray]:
    """Mean squared temporal second difference; zero for static or linear-in-
    time content.  Returns (mean, per-interior-frame means)."""
    if video.frames < 3:
        raise ValueError("need at least 3 frames for flicker energy")
    x = video.data
    second = x[2:] - 2.0 * x[1:-1] + x[:-2]
    per_frame = (second**2).mean(axis=(1, 2, 3))
    return float(per_frame.mean()), per_frame


@dataclass(frozen=True)
class MetricReport:
    frame_psnr: float
    warp_ssim: float
    hfpr: float
    motion_flow_l1: float
    flicker_energy: float
    series: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        if self.frame_psnr < 0:
            raise ValueError("psnr must be >= 0")
        if not -1.0 <= self.warp_ssim <= 1.0:
            raise ValueError("ssim must lie in [-1, 1]")
        if self.hfpr < 0 or self.motion_flow_l1 < 0 or self.flicker_energy < 0:
            raise ValueError("hfpr / flow L1 / flicker must be nonnegative")

    def to_json(self, path: str | Path) -> None:
        payload = {
            "frame_psnr": self.frame_psnr,
            "warp_ssim": self.warp_ssim,
            "hfpr": self.hfpr,
            "motion_flow_l1": self.motion_flow_l1,
            "flicker_energy": self.flicker_energy,
        }
        Path(path).write_text(json.dumps(payload, indent=2) + "\n")

    def series_to_csv(self, path: str | Path) -> None:
        names = ["frame_psnr", "warp_ssim", "hfpr", "motion_flow_l1", "flicker_energy"]
        rows = max(len(self.series.get(n, ())) for n in names)
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["frame"] + names)
            for i in range(rows):
                row = [i]
                for n in names:
                    vals = self.series.get(n, ())
                    row.append(f"{vals[i]:.9g}" if i < len(vals) else "")
                writer.writerow(row)


def build_report(candidate: VideoTensor, reference: VideoTensor, flow_cfg: FlowConfig | None = None) -> MetricReport:
    """Full metric suite for ``candidate`` against ``reference``.

    Alignment flow for warp-aligned SSIM is estimated per frame index from
    candidate luminance to reference luminance; flicker energy diagnoses the
    candidate alone.  The tabulated HFPR is clipped to [0, 2].
    """
    _require_same_shape(candidate, reference)
    psnr_vals = frame_psnr(candidate, reference)
    luma_c = _standardize_frames(luminance(candidate))
    luma_r = _standardize_frames(luminance(reference))
    align = np.stack([estimate_flow(luma_c[f], luma_r[f], flow_cfg) for f in range(candidate.frames)])
    ssim_mean, ssim_vals = warp_aligned_ssim(candidate, reference, align)
    ratio = hfpr(candidate, reference)
    flow_mean, flow_vals = motion_flow_l1(candidate, reference, flow_cfg)
    flick_mean, flick_vals = flicker_energy(candidate)
    return MetricReport(
        frame_psnr=float(psnr_vals.mean()),
        warp_ssim=ssim_mean,
        hfpr=float(np.clip(ratio, 0.0, 2.0)),
        motion_flow_l1=flow_mean,
        flicker_energy=flick_mean,
        series={
            "frame_psnr": psnr_vals.tolist(),
            "warp_ssim": ssim_vals.tolist(),
            "hfpr": hfpr_series(candidate, reference).tolist(),
            "motion_flow_l1": flow_vals.tolist(),
            "flicker_energy": flick_vals.tolist(),
        },
    )
