"""Video consistency post-processing: dense optical flow and temporal low-pass.

The stabilizer separates true head motion from per-frame jitter by using the
source video as the motion reference: edited frame i is aligned to frame
i-1 with the flow measured on the source pair, the leftover displacement
against the already-stabilized previous output is the jitter estimate, and
frame i is warped by that residual (scaled by `strength`).  The low-pass
stage is a per-pixel temporal moving average applied `passes` times.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, ShapeError
from .imaging import Frame, Video

# Horn-Schunck defaults; smoothness is the weight on ||grad flow||^2 with
# brightness measured on a 0..255 luma scale (the classic parameterization).
DEFAULT_LEVELS = 3
DEFAULT_ITERS = 50
DEFAULT_SMOOTHNESS = 10.0
_LUMA_SCALE = 255.0


@dataclass(frozen=True)
class FlowField:
    """Per-pixel displacement (dx, dy) of shape H x W x 2; canvas pixel units."""

    vectors: np.ndarray

    def __post_init__(self):
        arr = np.array(self.vectors, dtype=np.float32, copy=True)
        if arr.ndim != 3 or arr.shape[2] != 2:
            raise ShapeError(f"flow must be H x W x 2, got {arr.shape}")
        if not np.isfinite(arr).all():
            raise ValueError("flow contains non-finite values")
        arr.setflags(write=False)
        object.__setattr__(self, "vectors", arr)

    @property
    def u(self):
        return self.vectors[..., 0]

    @property
    def v(self):
        return self.vectors[..., 1]

    def mean_magnitude(self) -> float:
        return float(np.hypot(self.u, self.v).mean())

    def scaled(self, factor: float) -> "FlowField":
        return FlowField(self.vectors * np.float32(factor))


def _luma(pixels: np.ndarray) -> np.ndarray:
    if pixels.shape[2] == 1:
        return pixels[..., 0].astype(np.float64) * _LUMA_SCALE
    r, g, b = pixels[..., 0], pixels[..., 1], pixels[..., 2]
    return (0.299 * r + 0.587 * g + 0.114 * b).astype(np.float64) * _LUMA_SCALE


def _downsample2(img: np.ndarray) -> np.ndarray:
    h, w = img.shape
    h2, w2 = h // 2 * 2, w // 2 * 2
    return img[:h2, :w2].reshape(h2 // 2, 2, w2 // 2, 2).mean(axis=(1, 3))


def _upsample2(field: np.ndarray, shape) -> np.ndarray:
    out = np.repeat(np.repeat(field, 2, axis=0), 2, axis=1)
    return out[: shape[0], : shape[1]]


def _avg4(field: np.ndarray) -> np.ndarray:
    p = np.pad(field, 1, mode="edge")
    return (p[:-2, 1:-1] + p[2:, 1:-1] + p[1:-1, :-2] + p[1:-1, 2:]) / 4.0


def _bilinear_gray(img: np.ndarray, x: np.ndarray, y: np.ndarray) -> np.ndarray:
    h, w = img.shape
    x = np.clip(x, 0.0, w - 1.0)
    y = np.clip(y, 0.0, h - 1.0)
    x0 = np.floor(x).astype(int)
    y0 = np.floor(y).astype(int)
    x1 = np.minimum(x0 + 1, w - 1)
    y1 = np.minimum(y0 + 1, h - 1)
    dx = x - x0
    dy = y - y0
    return (
        img[y0, x0] * (1 - dx) * (1 - dy)
        + img[y0, x1] * dx * (1 - dy)
        + img[y1, x0] * (1 - dx) * dy
        + img[y1, x1] * dx * dy
    )


def _horn_schunck(i1: np.ndarray, i2: np.ndarray, iters: int, smoothness: float):
    """Jacobi iterations for the residual flow between two aligned images."""
    ix = 0.5 * (np.gradient(i1, axis=1) + np.gradient(i2, axis=1))
    iy = 0.5 * (np.gradient(i1, axis=0) + np.gradient(i2, axis=0))
    it = i2 - i1
    denom = smoothness + ix**2 + iy**2
    u = np.zeros_like(i1)
    v = np.zeros_like(i1)
    for _ in range(iters):
        ub, vb = _avg4(u), _avg4(v)
        shared = (ix * ub + iy * vb + it) / denom
        u = ub - ix * shared
        v = vb - iy * shared
    return u, v


def dense_flow(
    f1: Frame,
    f2: Frame,
    levels: int = DEFAULT_LEVELS,
    iters: int = DEFAULT_ITERS,
    smoothness: float = DEFAULT_SMOOTHNESS,
) -> FlowField:
    """Coarse-to-fine Horn-Schunck flow such that warp(f2, flow) ~= f1."""
    if f1.shape != f2.shape:
        raise ShapeError(f"shape mismatch {f1.shape} vs {f2.shape}")
    if levels < 1 or iters < 1 or smoothness <= 0:
        raise ConfigError("levels/iters must be >= 1 and smoothness > 0")
    i1 = _luma(f1.pixels)
    i2 = _luma(f2.pixels)
    if min(i1.shape) // (2 ** (levels - 1)) < 4:
        raise ConfigError(f"{levels} pyramid levels too deep for image {i1.shape}")

    pyr1, pyr2 = [i1], [i2]
    for _ in range(levels - 1):
        pyr1.append(_downsample2(pyr1[-1]))
        pyr2.append(_downsample2(pyr2[-1]))

    u = np.zeros_like(pyr1[-1])
    v = np.zeros_like(pyr1[-1])
    for level in range(levels - 1, -1, -1):
        a, b = pyr1[level], pyr2[level]
        if level != levels - 1:
            u = _upsample2(u, a.shape) * 2.0
            v = _upsample2(v, a.shape) * 2.0
        h, w = a.shape
        xx, yy = np.meshgrid(np.arange(w, dtype=np.float64), np.arange(h, dtype=np.float64))
        b_warp = _bilinear_gray(b, xx + u, yy + v)
        du, dv = _horn_schunck(a, b_warp, iters, smoothness)
        u = u + du
        v = v + dv
    return FlowField(np.stack([u, v], axis=-1).astype(np.float32))


def warp(frame: Frame, flow: FlowField) -> Frame:
    """Backward warp with bilinear sampling and edge clamping: out(p) = f(p + flow(p))."""
    h, w, c = frame.shape
    if flow.vectors.shape[:2] != (h, w):
        raise ShapeError(f"flow shape {flow.vectors.shape[:2]} does not match frame {h}x{w}")
    xx, yy = np.meshgrid(np.arange(w, dtype=np.float64), np.arange(h, dtype=np.float64))
    x = xx + flow.u.astype(np.float64)
    y = yy + flow.v.astype(np.float64)
    out = np.empty((h, w, c), dtype=np.float64)
    for ch in range(c):
        out[..., ch] = _bilinear_gray(frame.pixels[..., ch].astype(np.float64), x, y)
    return Frame(np.clip(out, 0.0, 1.0).astype(np.float32))


def stabilize(
    edited: Video,
    source: Video,
    levels: int = DEFAULT_LEVELS,
    iters: int = DEFAULT_ITERS,
    smoothness: float = DEFAULT_SMOOTHNESS,
    strength: float = 1.0,
) -> Video:
    """Remove per-frame jitter from `edited` using `source` as the motion reference."""
    if len(edited) != len(source):
        raise ShapeError(f"length mismatch {len(edited)} vs {len(source)}")
    if edited.frame_shape != source.frame_shape:
        raise ShapeError("edited and source frames differ in shape")
    if strength == 0.0 or len(edited) == 1:
        return edited
    out = [edited[0]]
    for i in range(1, len(edited)):
        motion = dense_flow(source[i - 1], source[i], levels, iters, smoothness)
        aligned = warp(edited[i], motion)
        jitter = dense_flow(out[i - 1], aligned, levels, iters, smoothness)
        out.append(warp(edited[i], jitter.scaled(strength)))
    return Video.from_frames(out, fps=edited.fps)


def lowpass(video: Video, window: int = 3, passes: int = 2) -> Video:
    """Temporal moving average of odd width `window`, replicate-padded, `passes` times.

    The kernel sums to one, so per-pixel temporal means of interior frames
    are preserved; endpoint frames are smoothed less (documented asymmetry).
    """
    if window < 1 or window % 2 == 0:
        raise ConfigError(f"window must be odd and >= 1, got {window}")
    if passes < 0:
        raise ConfigError("passes must be >= 0")
    if window == 1 or passes == 0:
        return video
    frames = video.frames.astype(np.float64)
    half = window // 2
    for _ in range(passes):
        padded = np.concatenate(
            [np.repeat(frames[:1], half, axis=0), frames, np.repeat(frames[-1:], half, axis=0)]
        )
        csum = np.cumsum(padded, axis=0)
        frames = (csum[window - 1 :] - np.concatenate([np.zeros_like(csum[:1]), csum[: -window]])) / window
    return Video(np.clip(frames, 0.0, 1.0).astype(np.float32), fps=video.fps)
