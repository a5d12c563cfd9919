"""Latent codec, noise schedule, control models, and their training loops."""

from .codec import (
    LATENT_CHANNELS,
    LatentWhitener,
    decode,
    encode,
    measure_whitening,
)
from .model import (
    UNetModel,
    build_image_model,
    build_text_model,
    encode_prompt,
    null_prompt_embedding,
    unet_forward,
)
from .schedule import NoiseSchedule, add_noise, make_schedule
from .training import (
    ImageTrainConfig,
    TextTrainConfig,
    cfg_image,
    dataset_whitener,
    prepare_latents,
    train_image_model,
    train_text_model,
)

__all__ = [
    "LATENT_CHANNELS",
    "LatentWhitener",
    "decode",
    "encode",
    "measure_whitening",
    "UNetModel",
    "build_image_model",
    "build_text_model",
    "encode_prompt",
    "null_prompt_embedding",
    "unet_forward",
    "NoiseSchedule",
    "add_noise",
    "make_schedule",
    "ImageTrainConfig",
    "TextTrainConfig",
    "cfg_image",
    "dataset_whitener",
    "prepare_latents",
    "train_image_model",
    "train_text_model",
]
