"""Prior interfaces and their analytic toy implementations.

Three pluggable pieces drive the solver: a geometric prior that estimates
the clean latent from a noisy one, a relighting prior that re-shades a
decoded frame sequence under a target light, and a latent codec.  The toy
versions here are closed-form (no weights), which keeps the whole control
flow executable and every regularizer testable at desk scale.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from typing import Protocol, runtime_checkable

import numpy as np
from scipy import ndimage

from .coherence import CanonicalNoise, PerFrameNoise
from .tca import TcaConfig, tca_forward
from .types import FeatureSequence, LatentVideo, LightingSpec, VideoTensor

NoiseSource = CanonicalNoise | PerFrameNoise


@runtime_checkable
class GeometricPrior(Protocol):
    def estimate(self, z: LatentVideo, sigma: float) -> LatentVideo: ...


@runtime_checkable
class RelightingPrior(Protocol):
    def relight(self, x: VideoTensor, light: LightingSpec, noise: NoiseSource) -> VideoTensor: ...


@runtime_checkable
class LatentCodec(Protocol):
    def encode(self, x: VideoTensor) -> LatentVideo: ...

    def decode(self, z: LatentVideo) -> VideoTensor: ...

    @property
    def factor(self) -> int: ...


@dataclass(frozen=True)
class LinearGeometricPrior:
    """Clean-target prior around a known latent z_star.

    ``oracle`` mode returns z_star outright.  ``imperfect`` mode returns the
    shrinkage estimate z - sigma * (z - z_star) / (sigma + shrink_delta),
    equivalently z_star + w * (z - z_star) with w = shrink_delta / (sigma +
    shrink_delta): at high noise it trusts the target, at low noise it
    trusts the current state, so guidance has real work to do.

    The retained deviation can additionally be projected toward the prior's
    appearance manifold, the way a strong learned prior snaps its estimates
    onto plausible content.  With a ``guide`` (the scene's albedo in latent
    space) the deviation is factored as guide * smooth coefficient field,
    which keeps illumination-like deviations - including their texture
    modulation - while rejecting off-manifold noise.  Without a guide, a
    positive ``smooth_sigma`` falls back to plain spatial smoothing of the
    deviation; with neither, the literal shrinkage estimate is returned.
    """

    z_star: LatentVideo
    mode: str = "oracle"
    shrink_delta: float = 0.3
    smooth_sigma: float = 0.0
    guide: np.ndarray | None = None

    def __post_init__(self):
        if self.mode not in ("oracle", "imperfect"):
            raise ValueError(f"mode must be 'oracle' or 'imperfect', got {self.mode!r}")
        if self.shrink_delta <= 0:
            raise ValueError(f"shrink_delta must be positive, got {self.shrink_delta}")
        if self.smooth_sigma < 0:
            raise ValueError(f"smooth_sigma must be >= 0, got {self.smooth_sigma}")
        if self.guide is not None:
            g = np.array(self.guide, dtype=np.float64, copy=True)
            g.flags.writeable = False
            if g.shape != self.z_star.shape:
                raise ValueError(f"guide shape {g.shape} must match z_star {self.z_star.shape}")
            object.__setattr__(self, "guide", g)

    def _project(self, dev: np.ndarray) -> np.ndarray:
        if self.guide is None and self.smooth_sigma == 0:
            return dev
        sig = self.smooth_sigma if self.smooth_sigma > 0 else 4.0
        out = np.empty_like(dev)
        if self.guide is None:
            for f in range(dev.shape[0]):
                for c in range(dev.shape[-1]):
                    out[f, :, :, c] = ndimage.gaussian_filter(dev[f, :, :, c], sig, mode="reflect")
            return out
        # guided projection: dev ~= guide * (smooth field); solve the field by
        # locally averaged least squares, then rebuild the deviation
        for f in range(dev.shape[0]):
            for c in range(dev.shape[-1]):
                g = self.guide[f, :, :, c]
                num = ndimage.gaussian_filter(dev[f, :, :, c] * g, sig, mode="reflect")
                den = ndimage.gaussian_filter(g * g, sig, mode="reflect")
                coeff = num / (den + 1e-8)
                out[f, :, :, c] = coeff * g
        return out

    def estimate(self, z: LatentVideo, sigma: float) -> LatentVideo:
        if sigma < 0:
            raise ValueError(f"sigma must be >= 0, got {sigma}")
        if z.shape != self.z_star.shape:
            raise ValueError(f"latent shape {z.shape} does not match prior geometry {self.z_star.shape}")
        if self.mode == "oracle":
            return self.z_star
        w = self.shrink_delta / (sigma + self.shrink_delta)
        dev = self._project(z.data - self.z_star.data)
        return LatentVideo(self.z_star.data + w * dev)


def estimate_clean(prior: GeometricPrior, z: LatentVideo, sigma: float) -> LatentVideo:
    return prior.estimate(z, sigma)


@dataclass(frozen=True)
class IdentityCodec:
    """Latent space == pixel space; encode/decode are bit-exact."""

    @property
    def factor(self) -> int:
        return 1

    def encode(self, x: VideoTensor) -> LatentVideo:
        return LatentVideo(x.data)

    def decode(self, z: LatentVideo) -> VideoTensor:
        return VideoTensor(z.data)


@dataclass(frozen=True)
class PoolingCodec:
    """Block average-pool encoder with nearest-neighbor decode.

    Channel count is preserved.  Encoding is linear; decode(encode(x)) is
    exact for block-constant inputs and loses within-block variation
    otherwise (the reconstruction error equals the per-block deviation from
    the block mean).
    """

    pool: int = 8

    def __post_init__(self):
        if self.pool < 1:
            raise ValueError(f"pool factor must be >= 1, got {self.pool}")

    @property
    def factor(self) -> int:
        return self.pool

    def encode(self, x: VideoTensor) -> LatentVideo:
        f, h, w, c = x.shape
        p = self.pool
        if h % p or w % p:
            raise ValueError(f"spatial dims {h}x{w} not divisible by pool factor {p}")
        blocks = x.data.reshape(f, h // p, p, w // p, p, c)
        return LatentVideo(blocks.mean(axis=(2, 4)))

    def decode(self, z: LatentVideo) -> VideoTensor:
        up = np.repeat(np.repeat(z.data, self.pool, axis=1), self.pool, axis=2)
        return VideoTensor(up)


def tone_map(x: np.ndarray) -> np.ndarray:
    """Clamp with a soft highlight shoulder above 0.8.

    Slope never exceeds 1, so repeated passes through the relight blend do
    not pump contrast into recirculated content.
    """
    t = np.clip(x, 0.0, 1.0)
    return np.where(t > 0.8, 0.8 + 0.5 * (t - 0.8), t)


def _rotation_y(deg: float) -> np.ndarray:
    rad = np.deg2rad(deg)
    c, s = np.cos(rad), np.sin(rad)
    return np.array([[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]])


@dataclass(frozen=True)
class SceneBuffers:
    """Per-frame geometry the relighting prior shades from.

    Normals are expressed in the canonical (yaw-zero) camera frame, i.e.
    already carry each frame's camera rotation, so shading is a plain dot
    product with the fixed light direction.
    """

    normals: np.ndarray  # (F, H, W, 3), unit length inside the mask
    albedo: np.ndarray  # (F, H, W, C)
    mask: np.ndarray  # (F, H, W) boolean
    background: float = 0.05

    def __post_init__(self):
        for name in ("normals", "albedo", "mask"):
            arr = np.array(getattr(self, name), copy=True)
            arr.flags.writeable = False
            object.__setattr__(self, name, arr)
        if self.normals.ndim != 4 or self.normals.shape[-1] != 3:
            raise ValueError(f"normals must be (F,H,W,3), got {self.normals.shape}")
        if self.albedo.shape[:3] != self.normals.shape[:3]:
            raise ValueError("albedo and normals disagree on (F,H,W)")
        if self.mask.shape != self.normals.shape[:3]:
            raise ValueError("mask and normals disagree on (F,H,W)")


@dataclass(frozen=True)
class LambertianRelightPrior:
    """Closed-form stand-in for a learned relighting model.

    Output composition, per frame: a diffuse shade of the scene buffers
    under the requested light, blended with a tone-mapped copy of the input
    (weight 1 - blend).  Stochasticity is emulated at four scales, all
    content-modulated: white grain taken directly from the supplied noise
    source (temporally stable under a broadcast map, flickering under
    per-frame maps), mid- and low-band jitter fields redrawn every frame
    from streams keyed to the noise map (the residual frame-wise
    stochasticity that noise sharing alone cannot remove), and a scalar
    per-frame exposure gain.  A patch-embedding feature stage then applies
    temporal consistent attention as a residual correction; gamma = 0
    skips it bit-exactly.
    """

    buffers: SceneBuffers
    blend: float = 0.8
    noise_gain: float = 0.0
    mid_jitter: float = 0.0
    low_jitter: float = 0.0
    exposure_jitter: float = 0.0
    mid_sigma: float = 2.0
    low_sigma: float = 6.0
    jitter_tau: float = 2.0
    tca: TcaConfig | None = None
    patch: int = 8
    embed_seed: int = 714
    embed_scale: float = 2.0

    def __post_init__(self):
        if not 0.0 < self.blend <= 1.0:
            raise ValueError(f"blend must lie in (0, 1], got {self.blend}")
        for name in ("noise_gain", "mid_jitter", "low_jitter", "exposure_jitter"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0")
        if self.mid_sigma <= 0 or self.low_sigma <= 0:
            raise ValueError("band sigmas must be positive")
        if self.jitter_tau < 0:
            raise ValueError(f"jitter_tau must be >= 0, got {self.jitter_tau}")
        if self.patch < 1:
            raise ValueError(f"patch must be >= 1, got {self.patch}")
        if self.embed_scale <= 0:
            raise ValueError(f"embed_scale must be positive, got {self.embed_scale}")

    def shade(self, light: LightingSpec) -> np.ndarray:
        """Diffuse term: albedo * (max(0, N.L) * intensity + ambient)."""
        b = self.buffers
        lambert = np.maximum(0.0, b.normals @ light.direction)
        shading = lambert * light.intensity + light.ambient
        out = b.albedo * shading[..., None]
        out = np.where(b.mask[..., None], out, b.background)
        return np.clip(out, 0.0, 1.0)

    def _pixel_noise(self, f: int, shape: tuple[int, int, int], noise: NoiseSource) -> np.ndarray:
        """Frame f's noise map upsampled to pixel resolution and channels."""
        h, w, c = shape
        eps = noise.frame(f)
        ry = h // eps.shape[0]
        rx = w // eps.shape[1]
        if eps.shape[0] * ry != h or eps.shape[1] * rx != w:
            raise ValueError(f"noise map {eps.shape[:2]} does not tile frame {h}x{w}")
        up = np.repeat(np.repeat(eps, ry, axis=0), rx, axis=1)
        if up.shape[2] == c:
            return up
        if up.shape[2] == 1:
            return np.repeat(up, c, axis=2)
        return np.repeat(up.mean(axis=2, keepdims=True), c, axis=2)

    @staticmethod
    def _jitter_rng(eps: np.ndarray, frame: np.ndarray, f: int, tag: int) -> np.random.Generator:
        """Deterministic stream keyed by the noise map and the input frame.

        Models the residual stochasticity a frame-wise prior keeps even
        under a shared noise map: identical inputs reproduce identical
        jitter, but different frames (and different solver states feeding
        the same frame index) draw independently.
        """
        h = hashlib.blake2b(eps.tobytes(), digest_size=8)
        h.update(frame.tobytes())
        key = int.from_bytes(h.digest(), "little")
        return np.random.default_rng(np.random.SeedSequence(entropy=key, spawn_key=(f, tag)))

    @staticmethod
    def _band_noise(rng: np.random.Generator, shape: tuple[int, int, int], sigma: float) -> np.ndarray:
        """Unit-std spatially band-limited noise field."""
        raw = rng.standard_normal(shape)
        out = np.empty_like(raw)
        for c in range(shape[-1]):
            out[:, :, c] = ndimage.gaussian_filter(raw[:, :, c], sigma, mode="wrap")
        sd = out.std()
        return out / sd if sd > 0 else out

    def _correlate_frames(self, fields: np.ndarray) -> np.ndarray:
        """Mix per-frame draws along time with a variance-preserving Gaussian
        kernel, turning white frame-to-frame jitter into a slow drift."""
        if self.jitter_tau == 0 or fields.shape[0] < 2:
            return fields
        frames = fields.shape[0]
        radius = max(1, int(round(2 * self.jitter_tau)))
        d = np.arange(-radius, radius + 1, dtype=np.float64)
        taps = np.exp(-(d**2) / (2.0 * self.jitter_tau**2))
        out = np.empty_like(fields)
        for f in range(frames):
            lo = max(0, f - radius)
            hi = min(frames - 1, f + radius)
            w = taps[lo - f + radius : hi - f + radius + 1]
            w = w / np.sqrt((w**2).sum())
            out[f] = np.tensordot(w, fields[lo : hi + 1], axes=(0, 0))
        return out

    def _embed_matrix(self, dim: int) -> np.ndarray:
        # scaled orthogonal basis: the scale sharpens attention logits so the
        # consistent path acts per patch instead of averaging globally
        rng = np.random.default_rng(self.embed_seed)
        gauss = rng.standard_normal((dim, dim))
        q, _ = np.linalg.qr(gauss)
        return self.embed_scale * q

    def _tca_correction(self, frames: np.ndarray) -> np.ndarray:
        """Residual anti-flicker term: fold back gamma * (cons - orig)."""
        assert self.tca is not None
        f, h, w, c = frames.shape
        p = self.patch
        if h % p or w % p:
            raise ValueError(f"frame {h}x{w} not divisible by patch {p}")
        gh, gw = h // p, w // p
        dim = p * p * c
        patches = frames.reshape(f, gh, p, gw, p, c).transpose(0, 1, 3, 2, 4, 5).reshape(f, gh * gw, dim)
        basis = self._embed_matrix(dim)
        feats = FeatureSequence(patches @ basis)
        att = tca_forward(feats, feats, feats, self.tca)
        # basis is a scaled orthogonal matrix, so its inverse is basis.T / scale^2
        resid = (att.cons.data - att.orig.data) @ (basis.T / self.embed_scale**2)
        resid = resid.reshape(f, gh, gw, p, p, c).transpose(0, 1, 3, 2, 4, 5).reshape(f, h, w, c)
        return self.tca.gamma * resid

    def relight(self, x: VideoTensor, light: LightingSpec, noise: NoiseSource) -> VideoTensor:
        if x.shape[:3] != self.buffers.normals.shape[:3]:
            raise ValueError(f"input {x.shape} does not match scene buffers {self.buffers.normals.shape}")
        shaded = self.shade(light)
        out = self.blend * shaded + (1.0 - self.blend) * tone_map(x.data)
        if self.noise_gain > 0 or self.mid_jitter > 0 or self.low_jitter > 0 or self.exposure_jitter > 0:
            content = np.clip(x.data, 0.0, 1.0)
            shape = x.shape[1:]
            frames = x.frames
            eps_per_frame = [self._pixel_noise(f, shape, noise) for f in range(frames)]

            # sharing the noise map is what makes the residual stochasticity
            # temporally coherent; with independent per-frame maps the jitter
            # streams stay white along the frame axis
            def temporal(fields: np.ndarray) -> np.ndarray:
                return self._correlate_frames(fields) if noise.shared else fields

            pert = np.zeros((frames,) + shape)
            if self.noise_gain > 0:
                pert += self.noise_gain * np.stack(eps_per_frame)
            if self.mid_jitter > 0:
                # mid-band jitter stays temporally white: it models the fast
                # frame-to-frame feature noise the attention window targets
                mids = np.stack([
                    self._band_noise(self._jitter_rng(eps_per_frame[f], x.data[f], f, tag=1), shape, self.mid_sigma)
                    for f in range(frames)
                ])
                pert += self.mid_jitter * mids
            if self.low_jitter > 0:
                lows = np.stack([
                    self._band_noise(self._jitter_rng(eps_per_frame[f], x.data[f], f, tag=2), shape, self.low_sigma)
                    for f in range(frames)
                ])
                pert += self.low_jitter * temporal(lows)
            out = out + pert * content
            if self.exposure_jitter > 0:
                draws = np.array([
                    self._jitter_rng(eps_per_frame[f], x.data[f], f, tag=3).standard_normal()
                    for f in range(frames)
                ])
                gains = 1.0 + self.exposure_jitter * temporal(draws[:, None, None, None])[:, 0, 0, 0]
                out = gains[:, None, None, None] * out
        out = np.clip(out, 0.0, 1.0)
        if self.tca is not None and self.tca.gamma > 0:
            out = np.clip(out + self._tca_correction(out), 0.0, 1.0)
        return VideoTensor(out)


def relight(prior: RelightingPrior, x: VideoTensor, light: LightingSpec, noise: NoiseSource) -> VideoTensor:
    return prior.relight(x, light, noise)


@dataclass(frozen=True)
class PriorBundle:
    """The triple injected into the solver."""

    geometric: GeometricPrior
    relighting: RelightingPrior
    codec: LatentCodec = field(default_factory=IdentityCodec)
