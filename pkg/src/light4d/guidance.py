"""Disentangled flow guidance: the main inference loop.

Each step estimates a clean geometric latent, optionally swings through
pixel space to blend in a regularized relit appearance (weighted by the
fusion schedule), and takes one explicit Euler step toward the resulting
hybrid target.  While the fusion weight is zero the relighting branch is
never invoked at all, so early steps are purely geometric.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .coherence import FdiConfig, PerFrameNoise, canonical_noise, fdi_regularize, global_moment_match
from .flow import warp_bilinear
from .priors import LatentCodec, NoiseSource, PriorBundle
from .schedule import FusionSchedule, StepPlan, lambda_at
from .types import CameraTrajectory, LatentVideo, LightingSpec, VideoTensor, assert_finite

NOISE_MODES = ("canonical", "per_frame")

BRANCH_ISOLATION = "isolation"
BRANCH_FUSED = "fused"


@dataclass(frozen=True)
class GuidanceRun:
    """Everything one inference run needs besides the initial latent."""

    priors: PriorBundle
    schedule: FusionSchedule
    plan: StepPlan
    lighting: LightingSpec
    seed: int = 0
    apply_gmm: bool = True
    fdi: FdiConfig | None = field(default_factory=FdiConfig)
    noise_mode: str = "canonical"
    lambda_const: float | None = None
    keep_trace: bool = True

    def __post_init__(self):
        if self.noise_mode not in NOISE_MODES:
            raise ValueError(f"noise_mode must be one of {NOISE_MODES}, got {self.noise_mode!r}")
        if self.lambda_const is not None and not 0.0 <= self.lambda_const <= 1.0:
            raise ValueError(f"lambda_const must lie in [0, 1], got {self.lambda_const}")

    def fusion_weight(self, t: float) -> float:
        if self.lambda_const is not None:
            return self.lambda_const
        return lambda_at(self.schedule, t)


@dataclass
class StepTrace:
    """Per-step diagnostics; one row per solver step."""

    steps: list[dict] = field(default_factory=list)

    def record(self, **row) -> None:
        self.steps.append(row)

    def __len__(self) -> int:
        return len(self.steps)

    @property
    def branches(self) -> list[str]:
        return [r["branch"] for r in self.steps]

    def relight_invocations(self) -> int:
        return sum(1 for r in self.steps if r["branch"] == BRANCH_FUSED)

    def write_csv(self, path: str | Path) -> None:
        cols = ["k", "t", "sigma", "lambda", "branch", "z_norm", "residual_norm"]
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(cols)
            for row in self.steps:
                writer.writerow(
                    [
                        row["k"],
                        f"{row['t']:.12g}",
                        f"{row['sigma']:.12g}",
                        f"{row['lambda']:.12g}",
                        row["branch"],
                        f"{row['z_norm']:.12g}",
                        f"{row['residual_norm']:.12g}",
                    ]
                )


def euler_step(
    z: LatentVideo, z_target: LatentVideo, sigma_t: float, sigma_next: float, delta: float
) -> LatentVideo:
    """z' = z + (sigma_next - sigma_t) * (z - z_target) / (sigma_t + delta)."""
    if delta <= 0:
        raise ValueError(f"delta must be positive, got {delta}")
    if not sigma_t >= sigma_next >= 0:
        raise ValueError(f"need sigma_t >= sigma_next >= 0, got {sigma_t}, {sigma_next}")
    velocity = (z.data - z_target.data) / (sigma_t + delta)
    return LatentVideo(z.data + (sigma_next - sigma_t) * velocity)


def derive_noise(run: GuidanceRun, latent_shape: tuple[int, int, int, int]) -> NoiseSource:
    """Noise for the relighting branch: one canonical map broadcast over
    frames, or fresh independent per-frame maps when the broadcast is off."""
    frames, h, w, c = latent_shape
    if run.noise_mode == "canonical":
        seed = int(np.random.SeedSequence(run.seed).generate_state(2)[1])
        return canonical_noise(seed, h, w, c, frames)
    return PerFrameNoise.fresh(h, w, c, frames, seed=None)


def hybrid_target(
    z0_geo: LatentVideo, run: GuidanceRun, t: float, noise: NoiseSource | None = None
) -> tuple[LatentVideo, str]:
    """Flow target for time t, plus which branch produced it.

    Zero fusion weight short-circuits to the geometric estimate without any
    decode or relight work.  Otherwise the estimate is decoded, relit,
    moment-matched, band-regularized, blended at weight lambda(t), and
    re-encoded.
    """
    lam = run.fusion_weight(t)
    if lam <= 0.0:
        return z0_geo, BRANCH_ISOLATION
    if noise is None:
        noise = derive_noise(run, z0_geo.shape)
    codec = run.priors.codec
    x_geo = codec.decode(z0_geo)
    x_light = run.priors.relighting.relight(x_geo, run.lighting, noise)
    if run.apply_gmm:
        x_light = global_moment_match(x_light)
    if run.fdi is not None:
        x_light = fdi_regularize(x_light, run.fdi)
    fused = (1.0 - lam) * x_geo.data + lam * x_light.data
    return codec.encode(VideoTensor(fused)), BRANCH_FUSED


def run_inference(run: GuidanceRun, z_init: LatentVideo) -> tuple[VideoTensor, StepTrace]:
    """Execute the full solver loop and decode the final latent.

    The canonical noise map is sampled once up front and shared by every
    fused step.  Non-finite state aborts with the offending step index.
    """
    noise = derive_noise(run, z_init.shape)
    plan = run.plan
    trace = StepTrace()
    z = z_init
    for k in range(plan.steps):
        t = float(plan.times[k])
        sigma_t = float(plan.sigmas[k])
        sigma_next = float(plan.sigmas_next[k])
        z0_geo = run.priors.geometric.estimate(z, sigma_t)
        target, branch = hybrid_target(z0_geo, run, t, noise)
        if run.keep_trace:
            trace.record(
                k=k,
                t=t,
                sigma=sigma_t,
                **{"lambda": run.fusion_weight(t)},
                branch=branch,
                z_norm=float(np.linalg.norm(z.data)),
                residual_norm=float(np.linalg.norm(z.data - target.data)),
            )
        z = euler_step(z, target, sigma_t, sigma_next, plan.delta)
        try:
            assert_finite(z, name="latent state")
        except ValueError as exc:
            raise RuntimeError(f"solver diverged at step {k}: {exc}") from exc
    video = run.priors.codec.decode(z).clamped()
    return video, trace


def init_latent(
    source: VideoTensor,
    trajectory: CameraTrajectory,
    codec: LatentCodec,
    seed: int,
    shift_px: float,
    sigma_scale: float = 1.0,
) -> LatentVideo:
    """Noised encode of the yaw-warped source.

    Each frame is shifted horizontally by shift_px * sin(yaw) as a cheap
    reprojection onto the target trajectory, then encoded.  One scaled
    standard-normal map (a stream separate from the relighting noise) is
    broadcast over all frames, so the initialization is noisy but
    temporally consistent.
    """
    if source.frames != trajectory.frames:
        raise ValueError(f"source has {source.frames} frames but trajectory has {trajectory.frames}")
    warped = np.empty_like(source.data)
    for f in range(source.frames):
        # content shifts left by shift_px * sin(yaw) on screen (positive yaw
        # orbits the camera right), so sample the source that far to the right
        shift = shift_px * np.sin(np.deg2rad(float(trajectory.yaw_deg[f])))
        warped[f] = warp_bilinear(source.data[f], shift, 0.0)
    z = codec.encode(VideoTensor(warped))
    if sigma_scale > 0:
        init_seed = int(np.random.SeedSequence(seed).generate_state(2)[0])
        rng = np.random.default_rng(init_seed)
        shared = rng.standard_normal(z.shape[1:])
        z = LatentVideo(z.data + sigma_scale * shared[None, ...])
    return z
