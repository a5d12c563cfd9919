"""Training loops for the two control models and image classifier-free guidance.

Text control fits the standard noise-prediction objective on edited-image
latents conditioned on the prompt embedding, over a small per-effect subset
and with no prior-preservation term.  Image control trains on the full
corpus with the source latent concatenated as extra input channels; the
source condition is dropped (zeroed) with probability p_drop so that the
unconditional branch of the guidance formula is meaningful.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
import torch

from ..dataset_forge import DatasetManifest
from ..errors import ConfigError, DivergenceError
from ..imaging import Frame
from ..seeding import derive_seed
from .codec import LatentWhitener, encode, measure_whitening
from .model import (
    UNetModel,
    build_image_model,
    build_text_model,
    null_prompt_embedding,
)
from .schedule import make_schedule

# Full-scale reference setup these desk-scale defaults are derived from:
# 30k source faces x 8 effects = 240k edited images, text model tuned on 10
# images per subject for 400 steps (batch 1), image model on the full corpus
# for 30k steps (batch 4), both at lr 5e-5.
FULL_SCALE_SOURCE_IMAGES = 30_000
FULL_SCALE_EFFECT_COUNT = 8
FULL_SCALE_EDITED_IMAGES = 240_000
FULL_SCALE_TEXT_STEPS = 400
FULL_SCALE_TEXT_BATCH = 1
FULL_SCALE_TEXT_SUBSET = 10
FULL_SCALE_IMAGE_STEPS = 30_000
FULL_SCALE_IMAGE_BATCH = 4
FULL_SCALE_LR = 5e-5


@dataclass(frozen=True)
class TextTrainConfig:
    steps: int = FULL_SCALE_TEXT_STEPS
    lr: float = FULL_SCALE_LR
    batch_size: int = FULL_SCALE_TEXT_BATCH
    seed: int = 0
    schedule_T: int = 50
    base_width: int = 32

    def __post_init__(self):
        if self.steps < 0 or self.batch_size < 1 or self.lr <= 0:
            raise ConfigError("bad text training config")


@dataclass(frozen=True)
class ImageTrainConfig:
    # 30k steps at full scale; desk scale divides by 10
    steps: int = 3_000
    lr: float = FULL_SCALE_LR
    batch_size: int = FULL_SCALE_IMAGE_BATCH
    p_drop: float = 0.05
    flip: bool = True
    seed: int = 0
    schedule_T: int = 50
    base_width: int = 32

    def __post_init__(self):
        if self.steps < 0 or self.batch_size < 1 or self.lr <= 0:
            raise ConfigError("bad image training config")
        if not 0.0 <= self.p_drop < 1.0:
            raise ConfigError("p_drop must be in [0, 1)")
        if self.p_drop == 0.0:
            warnings.warn(
                "p_drop=0: the unconditional branch is never trained, so "
                "image guidance with s > 1 is undefined for this model",
                stacklevel=2,
            )


def _flip_frame(frame: Frame) -> Frame:
    return Frame(frame.pixels[:, ::-1, :])


def prepare_latents(manifest: DatasetManifest, flip: bool = False):
    """Encode every record once; returns float32 stacks plus prompts.

    With flip=True the horizontally mirrored pair is encoded as well, so the
    training loop can toggle augmentation without touching the codec.
    """
    src, edit, prompts = [], [], []
    src_f, edit_f = [], []
    for i in range(len(manifest)):
        triplet = manifest.load_triplet(i)
        src.append(encode(triplet.source))
        edit.append(encode(triplet.edited))
        prompts.append(triplet.prompt)
        if flip:
            src_f.append(encode(_flip_frame(triplet.source)))
            edit_f.append(encode(_flip_frame(triplet.edited)))
    out = {
        "src": np.stack(src),
        "edit": np.stack(edit),
        "prompts": prompts,
    }
    if flip:
        out["src_flip"] = np.stack(src_f)
        out["edit_flip"] = np.stack(edit_f)
    return out


def dataset_whitener(manifest: DatasetManifest) -> LatentWhitener:
    """Whitening constants measured once over all source and edited latents."""
    data = prepare_latents(manifest)
    return measure_whitening(np.concatenate([data["src"], data["edit"]]))


def _check_finite(loss: float, step: int):
    if not np.isfinite(loss):
        raise DivergenceError(f"non-finite loss at step {step}", step=step)


def train_text_model(
    manifest: DatasetManifest,
    subset_size: int = FULL_SCALE_TEXT_SUBSET,
    config: TextTrainConfig = TextTrainConfig(),
) -> tuple[UNetModel, list[float]]:
    """Fit the text-control model on a per-effect subset of edited images.

    Objective: E[w_t * ||eps_hat(alpha_t z + sigma_t eps, t, c) - eps||^2]
    with z the edited-image latent and c the prompt embedding; w_t = 1.
    Returns the model and the per-step loss trace.
    """
    if len(manifest) == 0:
        raise ConfigError("empty dataset")
    by_effect: dict[str, list[int]] = {}
    for i, rec in enumerate(manifest.records):
        by_effect.setdefault(rec["meta"]["effect"], []).append(i)
    for name, idxs in by_effect.items():
        if len(idxs) < subset_size:
            raise ConfigError(
                f"effect {name!r} has {len(idxs)} records, fewer than subset_size={subset_size}"
            )
    rng = np.random.default_rng(derive_seed(config.seed, "text-subset"))
    chosen = sorted(
        int(i)
        for idxs in by_effect.values()
        for i in rng.choice(idxs, size=subset_size, replace=False)
    )

    whitener = dataset_whitener(manifest)
    data = prepare_latents(manifest)
    lat = whitener.whiten(data["edit"][chosen])
    prompts = [data["prompts"][i] for i in chosen]

    vocab = manifest.vocab
    model = build_text_model(
        vocab,
        lat.shape[1:3],
        seed=config.seed,
        base=config.base_width,
        schedule_T=config.schedule_T,
        whitener=whitener,
    )
    index = {tok: i for i, tok in enumerate(vocab)}
    token_ids = [torch.tensor([index[t] for t in p.split()]) for p in prompts]

    lat_t = torch.from_numpy(lat.transpose(0, 3, 1, 2).copy())
    sched = make_schedule(config.schedule_T)
    alpha = torch.from_numpy(np.asarray(sched.alpha, dtype=np.float32))
    sigma = torch.from_numpy(np.asarray(sched.sigma, dtype=np.float32))
    gen = torch.Generator().manual_seed(derive_seed(config.seed, "text-train"))
    opt = torch.optim.Adam(model.net.parameters(), lr=config.lr, betas=(0.9, 0.999))

    losses: list[float] = []
    n = lat_t.shape[0]
    for step in range(config.steps):
        idx = torch.randint(0, n, (config.batch_size,), generator=gen)
        t = torch.randint(1, config.schedule_T + 1, (config.batch_size,), generator=gen)
        z = lat_t[idx]
        eps = torch.randn(z.shape, generator=gen)
        z_t = alpha[t][:, None, None, None] * z + sigma[t][:, None, None, None] * eps
        cond = torch.stack([model.net.token_emb(token_ids[i]).mean(dim=0) for i in idx])
        pred = model.net(z_t, t, cond)
        loss = ((pred - eps) ** 2).mean()
        opt.zero_grad()
        loss.backward()
        opt.step()
        val = float(loss.detach())
        _check_finite(val, step)
        losses.append(val)
    return model, losses


def train_image_model(
    manifest: DatasetManifest,
    config: ImageTrainConfig = ImageTrainConfig(),
) -> tuple[UNetModel, list[float]]:
    """Fit the image-control model on the full corpus.

    Objective: E[||eps - eps_hat(z_t, t, source latent)||^2] where the source
    latent rides along as extra input channels; it is zeroed with probability
    p_drop, and horizontal flips are applied to (source, edited) jointly.
    """
    if len(manifest) == 0:
        raise ConfigError("empty dataset")
    whitener = dataset_whitener(manifest)
    data = prepare_latents(manifest, flip=config.flip)
    edit = torch.from_numpy(whitener.whiten(data["edit"]).transpose(0, 3, 1, 2).copy())
    src = torch.from_numpy(whitener.whiten(data["src"]).transpose(0, 3, 1, 2).copy())
    if config.flip:
        edit_f = torch.from_numpy(whitener.whiten(data["edit_flip"]).transpose(0, 3, 1, 2).copy())
        src_f = torch.from_numpy(whitener.whiten(data["src_flip"]).transpose(0, 3, 1, 2).copy())

    model = build_image_model(
        edit.shape[2:],
        seed=config.seed,
        base=config.base_width,
        schedule_T=config.schedule_T,
        whitener=whitener,
    )
    sched = make_schedule(config.schedule_T)
    alpha = torch.from_numpy(np.asarray(sched.alpha, dtype=np.float32))
    sigma = torch.from_numpy(np.asarray(sched.sigma, dtype=np.float32))
    gen = torch.Generator().manual_seed(derive_seed(config.seed, "image-train"))
    opt = torch.optim.Adam(model.net.parameters(), lr=config.lr, betas=(0.9, 0.999))

    losses: list[float] = []
    n = edit.shape[0]
    for step in range(config.steps):
        idx = torch.randint(0, n, (config.batch_size,), generator=gen)
        t = torch.randint(1, config.schedule_T + 1, (config.batch_size,), generator=gen)
        if config.flip:
            flip = torch.rand(config.batch_size, generator=gen) < 0.5
            z = torch.where(flip[:, None, None, None], edit_f[idx], edit[idx])
            cond = torch.where(flip[:, None, None, None], src_f[idx], src[idx])
        else:
            z = edit[idx]
            cond = src[idx]
        drop = torch.rand(config.batch_size, generator=gen) < config.p_drop
        cond = torch.where(drop[:, None, None, None], torch.zeros_like(cond), cond)
        eps = torch.randn(z.shape, generator=gen)
        z_t = alpha[t][:, None, None, None] * z + sigma[t][:, None, None, None] * eps
        pred = model.net(torch.cat([z_t, cond], dim=1), t)
        loss = ((pred - eps) ** 2).mean()
        opt.zero_grad()
        loss.backward()
        opt.step()
        val = float(loss.detach())
        _check_finite(val, step)
        losses.append(val)
    return model, losses


def cfg_image(model: UNetModel, z_t: np.ndarray, c_I: np.ndarray, s: float, t: int) -> np.ndarray:
    """Classifier-free guidance for the image model.

    Returns uncond + s * (cond - uncond), both branches at the same t; the
    null condition is the all-zero (whitened) latent.  s = 1 short-circuits
    to the conditional branch so the telescoping identity holds exactly.
    """
    if model.kind != "image":
        raise ConfigError("cfg_image needs an image-control model")
    if s < 1.0:
        raise ConfigError(f"guidance scale must be >= 1, got {s}")
    z_t = np.asarray(z_t, dtype=np.float32)
    c_I = np.asarray(c_I, dtype=np.float32)
    cond = model.predict(np.concatenate([z_t, c_I], axis=2), t)
    if s == 1.0:
        return cond
    uncond = model.predict(np.concatenate([z_t, np.zeros_like(c_I)], axis=2), t)
    return (uncond + s * (cond - uncond)).astype(np.float32)
