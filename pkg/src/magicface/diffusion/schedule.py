"""Variance-preserving cosine noise schedule and the forward noising map."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..errors import ConfigError, ShapeError

DEFAULT_STEPS = 50
_COSINE_OFFSET = 0.008
_MAX_BETA = 0.999


@dataclass(frozen=True)
class NoiseSchedule:
    """Arrays indexed by t = 0..T; index 0 is the clean boundary (alpha=1, sigma=0).

    Invariant: alpha_t^2 + sigma_t^2 = 1 for every t, alpha strictly
    decreasing over 1..T, loss weights w_t uniform by default.
    """

    T: int
    alpha: np.ndarray
    sigma: np.ndarray
    w: np.ndarray

    def __post_init__(self):
        alpha = np.asarray(self.alpha, dtype=np.float64)
        sigma = np.asarray(self.sigma, dtype=np.float64)
        w = np.asarray(self.w, dtype=np.float64)
        if alpha.shape != (self.T + 1,) or sigma.shape != alpha.shape or w.shape != alpha.shape:
            raise ConfigError("schedule arrays must have length T + 1")
        if not (np.isfinite(alpha).all() and np.isfinite(sigma).all()):
            raise ConfigError("schedule contains non-finite values")
        if np.abs(alpha**2 + sigma**2 - 1.0).max() > 1e-9:
            raise ConfigError("schedule is not variance preserving")
        if (np.diff(alpha[1:]) >= 0).any():
            raise ConfigError("alpha must decrease strictly over t = 1..T")
        for name, arr in (("alpha", alpha), ("sigma", sigma), ("w", w)):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)


def make_schedule(T: int = DEFAULT_STEPS) -> NoiseSchedule:
    """Cosine cumulative-alpha schedule with per-step beta clipped to 0.999.

    The clip keeps alpha_T tiny but nonzero so the deterministic sampler's
    division by alpha_t stays defined.
    """
    if T < 2:
        raise ConfigError(f"T must be >= 2, got {T}")

    def f(t):
        return math.cos(((t / T) + _COSINE_OFFSET) / (1.0 + _COSINE_OFFSET) * math.pi / 2.0) ** 2

    f0 = f(0)
    abar_raw = np.array([f(t) / f0 for t in range(T + 1)])
    betas = 1.0 - abar_raw[1:] / abar_raw[:-1]
    betas = np.clip(betas, 1e-8, _MAX_BETA)
    abar = np.concatenate([[1.0], np.cumprod(1.0 - betas)])
    alpha = np.sqrt(abar)
    sigma = np.sqrt(1.0 - abar)
    return NoiseSchedule(T=T, alpha=alpha, sigma=sigma, w=np.ones(T + 1))


def add_noise(z: np.ndarray, eps: np.ndarray, t: int, sched: NoiseSchedule) -> np.ndarray:
    """Forward diffusion sample: alpha_t * z + sigma_t * eps, elementwise."""
    z = np.asarray(z)
    eps = np.asarray(eps)
    if z.shape != eps.shape:
        raise ShapeError(f"shape mismatch {z.shape} vs {eps.shape}")
    if not 1 <= t <= sched.T:
        raise ConfigError(f"t={t} outside 1..{sched.T}")
    return (sched.alpha[t] * z + sched.sigma[t] * eps).astype(np.float32)
