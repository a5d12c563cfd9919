"""Dual-model inference: blended denoising, then an image-control-only tail.

One deterministic DDIM trajectory runs for T rounds.  While t > K the noise
estimate is v * text-model + (1 - v) * guided image-model; for the final K
low-noise steps the image model runs alone, which is where output fidelity
is decided.  Video editing reuses a single seeded initial latent for every
frame so the edited subject stays put across the clip.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .diffusion.codec import LATENT_CHANNELS, decode, encode
from .diffusion.model import UNetModel, unet_forward
from .diffusion.schedule import NoiseSchedule, make_schedule
from .diffusion.training import cfg_image
from .errors import ConfigError, NumericsError, ShapeError
from .imaging import Frame, Video


@dataclass(frozen=True)
class GuidanceConfig:
    """Everything inference needs: steps, switchover, mixing, guidance, seed."""

    T: int = 50
    K: int = 20
    v: float = 0.9
    s: float = 1.5
    seed: int = 0

    def __post_init__(self):
        if self.T < 2:
            raise ConfigError(f"T must be >= 2, got {self.T}")
        if not 0 <= self.K <= self.T:
            raise ConfigError(f"K must be in 0..T, got {self.K}")
        if not 0.0 <= self.v <= 1.0:
            raise ConfigError(f"v must be in [0, 1], got {self.v}")
        if self.s < 1.0:
            raise ConfigError(f"s must be >= 1, got {self.s}")


def combined_noise(eps_text: np.ndarray, eps_image: np.ndarray, v: float) -> np.ndarray:
    """Dual-model estimate v * eps_text + (1 - v) * eps_image, elementwise.

    v in {0, 1} returns the corresponding input exactly.
    """
    a = np.asarray(eps_text, dtype=np.float32)
    b = np.asarray(eps_image, dtype=np.float32)
    if a.shape != b.shape:
        raise ShapeError(f"shape mismatch {a.shape} vs {b.shape}")
    if v == 1.0:
        return a.copy()
    if v == 0.0:
        return b.copy()
    return (v * a + (1.0 - v) * b).astype(np.float32)


def ddim_step(z_t: np.ndarray, eps_hat: np.ndarray, t: int, t_prev: int, sched: NoiseSchedule) -> np.ndarray:
    """One deterministic (eta = 0) update from t to t_prev.

    Reconstructs z0_hat = (z_t - sigma_t * eps_hat) / alpha_t and re-noises it
    to level t_prev; t_prev = 0 returns z0_hat itself.
    """
    z_t = np.asarray(z_t, dtype=np.float32)
    eps_hat = np.asarray(eps_hat, dtype=np.float32)
    if z_t.shape != eps_hat.shape:
        raise ShapeError(f"shape mismatch {z_t.shape} vs {eps_hat.shape}")
    if not 0 <= t_prev <= t <= sched.T:
        raise ConfigError(f"need 0 <= t_prev <= t <= T, got t={t}, t_prev={t_prev}")
    alpha_t = float(sched.alpha[t])
    if alpha_t == 0.0:
        raise NumericsError(f"alpha_{t} = 0: cannot invert the noising map")
    z0 = (z_t - float(sched.sigma[t]) * eps_hat) / alpha_t
    if t_prev == 0:
        return z0.astype(np.float32)
    return (float(sched.alpha[t_prev]) * z0 + float(sched.sigma[t_prev]) * eps_hat).astype(np.float32)


def initial_latent(shape: tuple[int, int, int], seed: int) -> np.ndarray:
    """The seeded standard-normal z_T; one draw is shared by a whole video."""
    rng = np.random.default_rng(seed)
    return rng.standard_normal(shape).astype(np.float32)


def _check_models(text_model: UNetModel, image_model: UNetModel):
    if text_model.kind != "text" or image_model.kind != "image":
        raise ConfigError("edit needs (text, image) models in that order")
    if text_model.latent_hw != image_model.latent_hw:
        raise ConfigError("models were trained on different latent shapes")
    if text_model.whitener != image_model.whitener:
        raise ConfigError("models carry different whitening constants")


def _denoise(z_T, c_T, c_I, models, g: GuidanceConfig, sched: NoiseSchedule) -> np.ndarray:
    text_model, image_model = models
    z = z_T
    for t in range(g.T, 0, -1):
        eps_img = cfg_image(image_model, z, c_I, g.s, t)
        if t > g.K:
            eps_txt = unet_forward(text_model, z, t, c_T)
            eps = combined_noise(eps_txt, eps_img, g.v)
        else:
            eps = eps_img
        z = ddim_step(z, eps, t, t - 1, sched)
    return z


def edit_frame(src: Frame, prompt: str, models: tuple[UNetModel, UNetModel],
               g: GuidanceConfig, z_T: np.ndarray | None = None) -> Frame:
    """Edit one frame; z_T may be supplied to share the draw across frames."""
    text_model, image_model = models
    _check_models(text_model, image_model)
    h, w = text_model.latent_hw
    shape = (h, w, LATENT_CHANNELS)
    if z_T is None:
        z_T = initial_latent(shape, g.seed)
    if z_T.shape != shape:
        raise ShapeError(f"z_T must have shape {shape}, got {z_T.shape}")
    sched = make_schedule(g.T)
    c_T = text_model.embed_prompt(prompt)
    c_I = text_model.whitener.whiten(encode(src))
    z0 = _denoise(z_T, c_T, c_I, models, g, sched)
    return decode(text_model.whitener.unwhiten(z0))


def edit_video(src: Video, prompt: str, models: tuple[UNetModel, UNetModel],
               g: GuidanceConfig) -> Video:
    """Edit every frame independently and sequentially with one shared z_T."""
    text_model, image_model = models
    _check_models(text_model, image_model)
    h, w = text_model.latent_hw
    z_T = initial_latent((h, w, LATENT_CHANNELS), g.seed)
    frames = [edit_frame(src[i], prompt, models, g, z_T=z_T) for i in range(len(src))]
    return Video.from_frames(frames, fps=src.fps)
