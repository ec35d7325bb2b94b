"""Frame and tensor I/O.

Frames go to 8-bit PNG or binary PPM (P6), one file per frame named
``frame_%04d``.  Whole tensors go to a raw dump: magic ``L4DT`` followed by
F, H, W, C as little-endian uint32 and the payload as little-endian float32
in C order.  The dump is lossless for float32-representable values; reading
returns float64 arrays.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np
from PIL import Image

from .types import LatentVideo, Tensor, VideoTensor

MAGIC = b"L4DT"

_FRAME_EXTS = (".png", ".ppm", ".pgm")


def save_tensor(path: str | Path, tensor: Tensor) -> None:
    f, h, w, c = tensor.shape
    payload = np.ascontiguousarray(tensor.data, dtype="<f4").tobytes()
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<4I", f, h, w, c))
        fh.write(payload)


def load_tensor(path: str | Path, latent: bool = False) -> Tensor:
    with open(path, "rb") as fh:
        magic = fh.read(4)
        if magic != MAGIC:
            raise ValueError(f"{path}: bad magic {magic!r}, expected {MAGIC!r}")
        f, h, w, c = struct.unpack("<4I", fh.read(16))
        raw = fh.read()
    expected = f * h * w * c * 4
    if len(raw) != expected:
        raise ValueError(f"{path}: payload is {len(raw)} bytes, expected {expected}")
    data = np.frombuffer(raw, dtype="<f4").reshape(f, h, w, c).astype(np.float64)
    return LatentVideo(data) if latent else VideoTensor(data)


def _to_uint8(frame: np.ndarray) -> np.ndarray:
    return np.round(np.clip(frame, 0.0, 1.0) * 255.0).astype(np.uint8)


def save_frame_png(path: str | Path, frame: np.ndarray) -> None:
    arr = _to_uint8(frame)
    if arr.shape[2] == 1:
        Image.fromarray(arr[:, :, 0], mode="L").save(path, format="PNG")
    else:
        Image.fromarray(arr, mode="RGB").save(path, format="PNG")


def load_frame_png(path: str | Path) -> np.ndarray:
    img = Image.open(path)
    arr = np.asarray(img, dtype=np.float64) / 255.0
    if arr.ndim == 2:
        arr = arr[:, :, None]
    return arr


def save_frame_ppm(path: str | Path, frame: np.ndarray) -> None:
    """Binary PPM (P6) for 3-channel frames, PGM (P5) for single channel."""
    arr = _to_uint8(frame)
    h, w, c = arr.shape
    with open(path, "wb") as fh:
        if c == 3:
            fh.write(f"P6\n{w} {h}\n255\n".encode("ascii"))
        else:
            fh.write(f"P5\n{w} {h}\n255\n".encode("ascii"))
            arr = arr[:, :, 0]
        fh.write(arr.tobytes())


def load_frame_ppm(path: str | Path) -> np.ndarray:
    with open(path, "rb") as fh:
        data = fh.read()
    fields: list[bytes] = []
    pos = 0
    # header = magic, width, height, maxval; '#' starts a comment line
    while len(fields) < 4:
        while pos < len(data) and data[pos : pos + 1].isspace():
            pos += 1
        if data[pos : pos + 1] == b"#":
            pos = data.index(b"\n", pos) + 1
            continue
        start = pos
        while pos < len(data) and not data[pos : pos + 1].isspace():
            pos += 1
        fields.append(data[start:pos])
    pos += 1  # single whitespace after maxval
    magic, w, h, maxval = fields[0], int(fields[1]), int(fields[2]), int(fields[3])
    if magic not in (b"P6", b"P5"):
        raise ValueError(f"{path}: unsupported netpbm magic {magic!r}")
    if maxval != 255:
        raise ValueError(f"{path}: only maxval 255 supported, got {maxval}")
    c = 3 if magic == b"P6" else 1
    arr = np.frombuffer(data[pos : pos + h * w * c], dtype=np.uint8)
    if arr.size != h * w * c:
        raise ValueError(f"{path}: truncated pixel data")
    return arr.reshape(h, w, c).astype(np.float64) / 255.0


def frame_name(index: int, ext: str = "png") -> str:
    return f"frame_{index:04d}.{ext}"


def save_frames(directory: str | Path, video: VideoTensor, fmt: str = "png") -> list[Path]:
    """Write one file per frame into ``directory``; returns the paths."""
    if fmt not in ("png", "ppm"):
        raise ValueError(f"fmt must be 'png' or 'ppm', got {fmt!r}")
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    paths = []
    for f in range(video.frames):
        frame = video.data[f]
        if fmt == "png":
            path = directory / frame_name(f, "png")
            save_frame_png(path, frame)
        else:
            ext = "ppm" if video.channels == 3 else "pgm"
            path = directory / frame_name(f, ext)
            save_frame_ppm(path, frame)
        paths.append(path)
    return paths


def list_frames(directory: str | Path) -> list[Path]:
    directory = Path(directory)
    return sorted(p for p in directory.iterdir() if p.suffix.lower() in _FRAME_EXTS and p.stem.startswith("frame_"))


def load_frames(directory: str | Path) -> VideoTensor:
    """Read every frame_* file in ``directory`` into a video, sorted by name."""
    paths = list_frames(directory)
    if not paths:
        raise FileNotFoundError(f"no frame_* files in {directory}")
    frames = []
    for p in paths:
        if p.suffix.lower() == ".png":
            frames.append(load_frame_png(p))
        else:
            frames.append(load_frame_ppm(p))
    shapes = {f.shape for f in frames}
    if len(shapes) != 1:
        raise ValueError(f"frames in {directory} disagree on shape: {sorted(shapes)}")
    return VideoTensor(np.stack(frames, axis=0))
