"""Latent codec: a fixed orthonormal 2x2 Haar block transform plus channel whitening.

The codec is exact-inverse by construction (no trained autoencoder), which
pins reconstruction error at zero and lets the tests isolate diffusion
behavior.  Pixels are rescaled to [-1, 1] before the transform; each RGB
channel yields four subbands (LL, LH, HL, HH), so an H x W x 3 frame maps to
an H/2 x W/2 x 12 latent.  Diffusion runs on latents whitened per channel by
constants measured once on the training corpus.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import ShapeError
from ..imaging import Frame

LATENT_CHANNELS = 12
SUBBANDS_PER_CHANNEL = 4
# lower bound on the measured scale so near-constant subbands stay numerically tame
MIN_WHITEN_STD = 1e-3


def encode(frame: Frame) -> np.ndarray:
    """Frame -> latent of shape (H/2, W/2, 12), float32.

    Orthonormal, so the latent L2 norm equals the norm of the [-1, 1]
    rescaled pixels.
    """
    h, w, c = frame.shape
    if c != 3:
        raise ShapeError("codec expects RGB frames")
    if h % 2 or w % 2:
        raise ShapeError(f"frame dimensions must be even, got {h}x{w}")
    x = frame.pixels.astype(np.float64) * 2.0 - 1.0
    a = x[0::2, 0::2, :]
    b = x[0::2, 1::2, :]
    cc = x[1::2, 0::2, :]
    d = x[1::2, 1::2, :]
    out = np.empty((h // 2, w // 2, LATENT_CHANNELS), dtype=np.float64)
    out[..., 0::4] = (a + b + cc + d) / 2.0  # LL
    out[..., 1::4] = (a - b + cc - d) / 2.0  # LH (horizontal detail)
    out[..., 2::4] = (a + b - cc - d) / 2.0  # HL (vertical detail)
    out[..., 3::4] = (a - b - cc + d) / 2.0  # HH
    return out.astype(np.float32)


def decode(latent: np.ndarray) -> Frame:
    """Inverse transform, clamp to [-1, 1], rescale to [0, 1]."""
    z = np.asarray(latent, dtype=np.float64)
    if z.ndim != 3 or z.shape[2] != LATENT_CHANNELS:
        raise ShapeError(f"latent must be h x w x {LATENT_CHANNELS}, got {z.shape}")
    ll, lh, hl, hh = z[..., 0::4], z[..., 1::4], z[..., 2::4], z[..., 3::4]
    h, w = z.shape[0] * 2, z.shape[1] * 2
    x = np.empty((h, w, 3), dtype=np.float64)
    x[0::2, 0::2, :] = (ll + lh + hl + hh) / 2.0
    x[0::2, 1::2, :] = (ll - lh + hl - hh) / 2.0
    x[1::2, 0::2, :] = (ll + lh - hl - hh) / 2.0
    x[1::2, 1::2, :] = (ll - lh - hl + hh) / 2.0
    x = np.clip(x, -1.0, 1.0)
    return Frame(((x + 1.0) / 2.0).astype(np.float32))


@dataclass(frozen=True)
class LatentWhitener:
    """Per-channel affine normalization of latents; an exact inverse pair."""

    mean: np.ndarray  # (12,)
    std: np.ndarray  # (12,)

    def __post_init__(self):
        mean = np.asarray(self.mean, dtype=np.float32).reshape(LATENT_CHANNELS)
        std = np.asarray(self.std, dtype=np.float32).reshape(LATENT_CHANNELS)
        if not np.isfinite(mean).all() or not np.isfinite(std).all() or (std <= 0).any():
            raise ValueError("whitening constants must be finite with positive std")
        mean.setflags(write=False)
        std.setflags(write=False)
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "std", std)

    def whiten(self, latent: np.ndarray) -> np.ndarray:
        return ((latent - self.mean) / self.std).astype(np.float32)

    def unwhiten(self, latent: np.ndarray) -> np.ndarray:
        return (latent * self.std + self.mean).astype(np.float32)

    def to_dict(self) -> dict:
        return {"mean": self.mean.tolist(), "std": self.std.tolist()}

    @classmethod
    def from_dict(cls, doc: dict) -> "LatentWhitener":
        return cls(np.asarray(doc["mean"]), np.asarray(doc["std"]))

    @classmethod
    def identity(cls) -> "LatentWhitener":
        return cls(np.zeros(LATENT_CHANNELS), np.ones(LATENT_CHANNELS))

    def __eq__(self, other):
        if not isinstance(other, LatentWhitener):
            return NotImplemented
        return bool((self.mean == other.mean).all() and (self.std == other.std).all())


def measure_whitening(latents: np.ndarray) -> LatentWhitener:
    """Per-channel mean/std over a stack of latents (N, h, w, 12)."""
    arr = np.asarray(latents, dtype=np.float64)
    if arr.ndim != 4 or arr.shape[3] != LATENT_CHANNELS:
        raise ShapeError(f"expected (N, h, w, {LATENT_CHANNELS}), got {arr.shape}")
    mean = arr.mean(axis=(0, 1, 2))
    std = np.maximum(arr.std(axis=(0, 1, 2)), MIN_WHITEN_STD)
    return LatentWhitener(mean, std)
