"""Pixel containers and deterministic image/video IO.

Frames hold float32 pixels in [0, 1], channel-last.  Videos are stacks of
homogeneous frames plus an fps tag.  The format of record is the MFV
container: a fixed little-endian header followed by raw float32 samples,
chosen so that save/load round-trips bit-exactly (unlike lossy codecs).
PNG export exists for human inspection only.
"""

from __future__ import annotations

import math
import os
import struct
from dataclasses import dataclass, field

import numpy as np

from .errors import FormatError, IoError, ShapeError

MFV_MAGIC = b"MFV1"
# magic + u32 H, W, C, N + f32 fps
_HEADER = struct.Struct("<4sIIIIf")


def _validated_pixels(pixels) -> np.ndarray:
    arr = np.array(pixels, dtype=np.float32, copy=True)
    if arr.ndim != 3:
        raise ShapeError(f"frame must be H x W x C, got shape {arr.shape}")
    h, w, c = arr.shape
    if h < 1 or w < 1 or c not in (1, 3):
        raise ShapeError(f"bad frame shape {arr.shape}; C must be 1 or 3")
    if not np.isfinite(arr).all():
        raise ValueError("frame contains non-finite pixels")
    if arr.min() < 0.0 or arr.max() > 1.0:
        raise ValueError("frame pixels must lie in [0, 1]")
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class Frame:
    """An H x W x C grid of float32 pixels in [0, 1], immutable after construction."""

    pixels: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "pixels", _validated_pixels(self.pixels))

    @property
    def shape(self):
        return self.pixels.shape

    def __eq__(self, other):
        if not isinstance(other, Frame):
            return NotImplemented
        return self.pixels.shape == other.pixels.shape and bool(
            (self.pixels == other.pixels).all()
        )


def clamped_frame(values) -> Frame:
    """Build a Frame from arbitrary real values, clipping into [0, 1]."""
    arr = np.asarray(values, dtype=np.float32)
    return Frame(np.clip(arr, 0.0, 1.0))


@dataclass(frozen=True)
class Video:
    """An ordered stack of same-shape frames; fps is metadata only."""

    frames: np.ndarray  # (N, H, W, C) float32
    fps: float = 12.0

    def __post_init__(self):
        arr = np.array(self.frames, dtype=np.float32, copy=True)
        if arr.ndim != 4 or arr.shape[0] < 1:
            raise ShapeError(f"video must be N x H x W x C with N >= 1, got {arr.shape}")
        if arr.shape[3] not in (1, 3):
            raise ShapeError(f"bad channel count {arr.shape[3]}")
        if not np.isfinite(arr).all():
            raise ValueError("video contains non-finite pixels")
        if arr.min() < 0.0 or arr.max() > 1.0:
            raise ValueError("video pixels must lie in [0, 1]")
        if self.fps <= 0:
            raise ValueError("fps must be positive")
        arr.setflags(write=False)
        object.__setattr__(self, "frames", arr)

    @classmethod
    def from_frames(cls, frames: list[Frame], fps: float = 12.0) -> "Video":
        if not frames:
            raise ShapeError("video needs at least one frame")
        shapes = {f.shape for f in frames}
        if len(shapes) != 1:
            raise ShapeError(f"frames have mixed shapes: {sorted(shapes)}")
        return cls(np.stack([f.pixels for f in frames]), fps=fps)

    def __len__(self):
        return self.frames.shape[0]

    def __getitem__(self, i: int) -> Frame:
        return Frame(self.frames[i])

    @property
    def frame_shape(self):
        return self.frames.shape[1:]


def save_video(video: Video, path) -> None:
    """Write the MFV container for `video` at `path`.

    Header: magic "MFV1", u32 H, W, C, N, f32 fps; payload: N*H*W*C float32
    little-endian samples in frame-major, row-major, channel-last order.
    """
    parent = os.path.dirname(os.path.abspath(path))
    if not os.path.isdir(parent):
        raise IoError(f"parent directory does not exist: {parent}")
    n, h, w, c = video.frames.shape
    header = _HEADER.pack(MFV_MAGIC, h, w, c, n, float(video.fps))
    payload = np.ascontiguousarray(video.frames, dtype="<f4").tobytes()
    try:
        with open(path, "wb") as fh:
            fh.write(header)
            fh.write(payload)
    except OSError as exc:
        raise IoError(f"cannot write {path}: {exc}") from exc


def load_video(path) -> Video:
    """Read an MFV container; exact inverse of save_video."""
    try:
        with open(path, "rb") as fh:
            raw = fh.read()
    except OSError as exc:
        raise IoError(f"cannot read {path}: {exc}") from exc
    if len(raw) < _HEADER.size:
        raise FormatError(f"{path}: truncated header")
    magic, h, w, c, n, fps = _HEADER.unpack_from(raw)
    if magic != MFV_MAGIC:
        raise FormatError(f"{path}: bad magic {magic!r}")
    if n < 1 or h < 1 or w < 1 or c not in (1, 3):
        raise FormatError(f"{path}: invalid dimensions H={h} W={w} C={c} N={n}")
    expected = n * h * w * c * 4
    payload = raw[_HEADER.size :]
    if len(payload) != expected:
        raise FormatError(f"{path}: payload is {len(payload)} bytes, expected {expected}")
    frames = np.frombuffer(payload, dtype="<f4").reshape(n, h, w, c)
    try:
        return Video(frames, fps=fps)
    except (ValueError, ShapeError) as exc:
        raise FormatError(f"{path}: {exc}") from exc


def save_frame(frame: Frame, path) -> None:
    """Store a single frame as a 1-frame MFV file."""
    save_video(Video(frame.pixels[None, ...]), path)


def load_frame(path) -> Frame:
    video = load_video(path)
    if len(video) != 1:
        raise FormatError(f"{path}: expected a single-frame file, found {len(video)} frames")
    return video[0]


def psnr(a: Frame, b: Frame) -> float:
    """Peak signal-to-noise ratio in dB; +inf when the frames are identical."""
    if a.shape != b.shape:
        raise ShapeError(f"shape mismatch {a.shape} vs {b.shape}")
    mse = float(np.mean((a.pixels.astype(np.float64) - b.pixels.astype(np.float64)) ** 2))
    if mse == 0.0:
        return math.inf
    return 10.0 * math.log10(1.0 / mse)


def to_uint8(frame: Frame) -> np.ndarray:
    """8-bit view used by PNG export: value = round(255 * pixel)."""
    return np.rint(frame.pixels * 255.0).astype(np.uint8)


def export_png(frame: Frame, path) -> None:
    """Write an 8-bit PNG for human inspection. MFV remains the format of record."""
    from PIL import Image

    arr = to_uint8(frame)
    if arr.shape[2] == 1:
        arr = arr[:, :, 0]
    parent = os.path.dirname(os.path.abspath(path))
    if not os.path.isdir(parent):
        raise IoError(f"parent directory does not exist: {parent}")
    Image.fromarray(arr).save(path, format="PNG")


def frame_strip(video: Video, every: int = 1) -> Frame:
    """Horizontally concatenate every `every`-th frame into one wide frame."""
    if every < 1:
        raise ValueError("every must be >= 1")
    picks = video.frames[::every]
    return Frame(np.concatenate(list(picks), axis=1))
