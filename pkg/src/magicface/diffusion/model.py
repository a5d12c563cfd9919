"""Conditional noise-prediction UNets, the prompt encoder, and checkpoint IO.

Two model kinds share one backbone (a two-resolution conv encoder-decoder
with a skip connection):

* text control: input is the noisy latent (12 channels); the mean-pooled
  token embedding modulates features via per-block affine (FiLM) layers.
* image control: input is the noisy latent concatenated with the source
  latent (24 channels); no prompt pathway.  The input-conv weights that see
  the source channels start at exactly zero, so an untrained model is
  provably independent of its conditioning.

Timesteps enter as a sinusoidal embedding mapped to per-block channel
biases.  Checkpoints are a JSON header plus the raw float32 parameters in
declaration order.
"""

from __future__ import annotations

import json
import math
import os
import struct

import numpy as np
import torch
from torch import nn

from ..errors import ConfigError, FormatError, IoError, ShapeError, VocabError
from ..seeding import derive_seed
from .codec import LATENT_CHANNELS, LatentWhitener

COND_DIM = 64
TIME_EMB_DIM = 128
BASE_WIDTH = 32

_CKPT_MAGIC = b"MFC1"


def sinusoidal_embedding(t: torch.Tensor, dim: int = 64) -> torch.Tensor:
    """Classic sin/cos position features of the (integer) timestep."""
    half = dim // 2
    freqs = torch.exp(
        torch.arange(half, dtype=torch.float32, device=t.device)
        * (-math.log(10000.0) / (half - 1))
    )
    args = t.float()[:, None] * freqs[None, :]
    return torch.cat([torch.sin(args), torch.cos(args)], dim=1)


class ResBlock(nn.Module):
    def __init__(self, channels, temb_dim=TIME_EMB_DIM, cond_dim=0):
        super().__init__()
        self.conv1 = nn.Conv2d(channels, channels, 3, padding=1)
        self.conv2 = nn.Conv2d(channels, channels, 3, padding=1)
        self.time_proj = nn.Linear(temb_dim, channels)
        self.film = nn.Linear(cond_dim, 2 * channels) if cond_dim else None

    def forward(self, x, temb, cond=None):
        h = self.conv1(torch.nn.functional.silu(x))
        h = h + self.time_proj(temb)[:, :, None, None]
        if self.film is not None:
            gamma, beta = self.film(cond).chunk(2, dim=1)
            h = h * (1.0 + gamma[:, :, None, None]) + beta[:, :, None, None]
        h = self.conv2(torch.nn.functional.silu(h))
        return x + h


class NoisePredictor(nn.Module):
    """Encoder-decoder over two resolutions with one skip connection."""

    def __init__(self, in_channels, out_channels=LATENT_CHANNELS, base=BASE_WIDTH, cond_dim=0):
        super().__init__()
        self.time_mlp = nn.Sequential(
            nn.Linear(64, TIME_EMB_DIM), nn.SiLU(), nn.Linear(TIME_EMB_DIM, TIME_EMB_DIM)
        )
        self.stem = nn.Conv2d(in_channels, base, 3, padding=1)
        self.enc = ResBlock(base, cond_dim=cond_dim)
        self.down = nn.Conv2d(base, 2 * base, 3, stride=2, padding=1)
        self.mid = ResBlock(2 * base, cond_dim=cond_dim)
        self.up = nn.ConvTranspose2d(2 * base, base, 4, stride=2, padding=1)
        self.fuse = nn.Conv2d(2 * base, base, 3, padding=1)
        self.dec = ResBlock(base, cond_dim=cond_dim)
        self.head = nn.Conv2d(base, out_channels, 3, padding=1)

    def forward(self, x, t, cond=None):
        temb = self.time_mlp(sinusoidal_embedding(t))
        h0 = self.enc(self.stem(x), temb, cond)
        h1 = self.mid(self.down(torch.nn.functional.silu(h0)), temb, cond)
        h = self.up(torch.nn.functional.silu(h1))
        h = self.fuse(torch.cat([h, h0], dim=1))
        h = self.dec(h, temb, cond)
        return self.head(torch.nn.functional.silu(h))


class TextControlNet(nn.Module):
    def __init__(self, vocab_size, base=BASE_WIDTH, cond_dim=COND_DIM):
        super().__init__()
        self.token_emb = nn.Embedding(vocab_size, cond_dim)
        self.unet = NoisePredictor(LATENT_CHANNELS, base=base, cond_dim=cond_dim)

    def forward(self, x, t, cond):
        return self.unet(x, t, cond)


class ImageControlNet(nn.Module):
    def __init__(self, base=BASE_WIDTH):
        super().__init__()
        self.unet = NoisePredictor(2 * LATENT_CHANNELS, base=base, cond_dim=0)
        with torch.no_grad():
            # the channels that see the source latent start at exactly zero
            self.unet.stem.weight[:, LATENT_CHANNELS:, :, :].zero_()

    def forward(self, x, t):
        return self.unet(x, t)


def encode_prompt(vocab, embeddings: np.ndarray, prompt: str) -> np.ndarray:
    """Mean of the per-token embedding rows (bag of tokens, order-free)."""
    tokens = prompt.split()
    if not tokens:
        raise VocabError("prompt is empty")
    index = {tok: i for i, tok in enumerate(vocab)}
    try:
        rows = [index[tok] for tok in tokens]
    except KeyError as exc:
        raise VocabError(f"token {exc.args[0]!r} not in vocabulary") from exc
    emb = np.asarray(embeddings, dtype=np.float32)
    return emb[rows].mean(axis=0)


def null_prompt_embedding(dim: int = COND_DIM) -> np.ndarray:
    return np.zeros(dim, dtype=np.float32)


class UNetModel:
    """A trained (or freshly built) noise predictor plus everything inference needs."""

    def __init__(self, net, kind, latent_hw, whitener, schedule_T, seed, vocab=None, base=BASE_WIDTH):
        if kind not in ("text", "image"):
            raise ConfigError(f"unknown model kind {kind!r}")
        self.net = net
        self.kind = kind
        self.latent_hw = (int(latent_hw[0]), int(latent_hw[1]))
        self.whitener = whitener
        self.schedule_T = int(schedule_T)
        self.seed = int(seed)
        self.vocab = tuple(vocab) if vocab is not None else None
        self.base = int(base)
        self.cond_dim = COND_DIM if kind == "text" else 0

    @property
    def in_channels(self) -> int:
        return LATENT_CHANNELS if self.kind == "text" else 2 * LATENT_CHANNELS

    @property
    def n_params(self) -> int:
        return sum(p.numel() for p in self.net.parameters())

    def token_embeddings(self) -> np.ndarray:
        if self.kind != "text":
            raise ConfigError("only text models carry token embeddings")
        return self.net.token_emb.weight.detach().cpu().numpy()

    def embed_prompt(self, prompt: str) -> np.ndarray:
        return encode_prompt(self.vocab, self.token_embeddings(), prompt)

    def predict(self, z_in: np.ndarray, t: int, cond: np.ndarray | None = None) -> np.ndarray:
        """Noise prediction for one latent; numpy in, numpy out, channel-last."""
        z = np.asarray(z_in, dtype=np.float32)
        h, w = self.latent_hw
        if z.shape != (h, w, self.in_channels):
            raise ShapeError(f"expected input shape {(h, w, self.in_channels)}, got {z.shape}")
        if not 1 <= int(t) <= self.schedule_T:
            raise ConfigError(f"t={t} outside 1..{self.schedule_T}")
        x = torch.from_numpy(np.ascontiguousarray(z.transpose(2, 0, 1)))[None]
        tt = torch.tensor([int(t)])
        with torch.no_grad():
            if self.kind == "text":
                c = null_prompt_embedding() if cond is None else np.asarray(cond, dtype=np.float32)
                if c.shape != (COND_DIM,):
                    raise ShapeError(f"prompt embedding must have shape ({COND_DIM},)")
                out = self.net(x, tt, torch.from_numpy(c)[None])
            else:
                if cond is not None:
                    raise ConfigError("image-control model takes no prompt embedding")
                out = self.net(x, tt)
        return out[0].numpy().transpose(1, 2, 0)

    # -- persistence ---------------------------------------------------------

    def save(self, path) -> None:
        header = {
            "kind": self.kind,
            "base": self.base,
            "latent": {"h": self.latent_hw[0], "w": self.latent_hw[1], "channels": LATENT_CHANNELS},
            "vocab": list(self.vocab) if self.vocab is not None else None,
            "whitening": self.whitener.to_dict(),
            "schedule_T": self.schedule_T,
            "seed": self.seed,
            "params": [[name, list(p.shape)] for name, p in self.net.named_parameters()],
        }
        blob = json.dumps(header, sort_keys=True).encode("utf-8")
        parent = os.path.dirname(os.path.abspath(path))
        if not os.path.isdir(parent):
            raise IoError(f"parent directory does not exist: {parent}")
        try:
            with open(path, "wb") as fh:
                fh.write(_CKPT_MAGIC)
                fh.write(struct.pack("<I", len(blob)))
                fh.write(blob)
                for _, p in self.net.named_parameters():
                    fh.write(p.detach().cpu().numpy().astype("<f4").tobytes())
        except OSError as exc:
            raise IoError(f"cannot write {path}: {exc}") from exc

    @classmethod
    def load(cls, path) -> "UNetModel":
        try:
            with open(path, "rb") as fh:
                raw = fh.read()
        except OSError as exc:
            raise IoError(f"cannot read {path}: {exc}") from exc
        if len(raw) < 8 or raw[:4] != _CKPT_MAGIC:
            raise FormatError(f"{path}: not a model checkpoint")
        (hlen,) = struct.unpack_from("<I", raw, 4)
        try:
            header = json.loads(raw[8 : 8 + hlen].decode("utf-8"))
        except (UnicodeDecodeError, json.JSONDecodeError) as exc:
            raise FormatError(f"{path}: corrupt header: {exc}") from exc

        kind = header["kind"]
        base = header["base"]
        latent = header["latent"]
        whitener = LatentWhitener.from_dict(header["whitening"])
        if kind == "text":
            model = build_text_model(
                header["vocab"], (latent["h"], latent["w"]), seed=header["seed"],
                base=base, schedule_T=header["schedule_T"], whitener=whitener,
            )
        else:
            model = build_image_model(
                (latent["h"], latent["w"]), seed=header["seed"],
                base=base, schedule_T=header["schedule_T"], whitener=whitener,
            )
        offset = 8 + hlen
        with torch.no_grad():
            for (name, p), (saved_name, saved_shape) in zip(
                model.net.named_parameters(), header["params"]
            ):
                if name != saved_name or list(p.shape) != saved_shape:
                    raise FormatError(f"{path}: parameter mismatch at {name}")
                n = p.numel()
                if offset + 4 * n > len(raw):
                    raise FormatError(f"{path}: truncated parameter payload")
                vals = np.frombuffer(raw, dtype="<f4", count=n, offset=offset)
                p.copy_(torch.from_numpy(vals.reshape(tuple(saved_shape)).copy()))
                offset += 4 * n
        if offset != len(raw):
            raise FormatError(f"{path}: trailing bytes after parameters")
        return model


def unet_forward(model: UNetModel, z_in: np.ndarray, t: int, c: np.ndarray | None = None) -> np.ndarray:
    """Functional spelling of UNetModel.predict."""
    return model.predict(z_in, t, c)


def build_text_model(vocab, latent_hw, seed=0, base=BASE_WIDTH, schedule_T=50,
                     whitener=None) -> UNetModel:
    vocab = tuple(vocab)
    if not vocab:
        raise ConfigError("text model needs a non-empty vocabulary")
    with torch.random.fork_rng():
        torch.manual_seed(derive_seed(seed, "model-init", "text"))
        net = TextControlNet(len(vocab), base=base)
    return UNetModel(
        net, "text", latent_hw, whitener or LatentWhitener.identity(),
        schedule_T, seed, vocab=vocab, base=base,
    )


def build_image_model(latent_hw, seed=0, base=BASE_WIDTH, schedule_T=50,
                      whitener=None) -> UNetModel:
    with torch.random.fork_rng():
        torch.manual_seed(derive_seed(seed, "model-init", "image"))
        net = ImageControlNet(base=base)
    return UNetModel(
        net, "image", latent_hw, whitener or LatentWhitener.identity(),
        schedule_T, seed, base=base,
    )
