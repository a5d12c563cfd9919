"""One nested RunConfig mirroring every module default, JSON round-trippable.

Unknown sections or fields are rejected so a stale config cannot silently
drift; `dump-config` in the CLI emits the fully-resolved form, and re-running
from that file reproduces outputs byte for byte.
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field

from .diffusion.training import ImageTrainConfig, TextTrainConfig
from .errors import SchemaError
from .sampler import GuidanceConfig

DEFAULT_EFFECT_NAMES = (
    "half-frame glasses",
    "black full-frame glasses",
    "sweet makeup",
    "creamy facial mask",
    "green bow",
    "burning fire",
    "man beard",
    "white straw hat",
)


@dataclass(frozen=True)
class DatasetSection:
    identities: int = 64
    poses: int = 5
    effects: tuple = DEFAULT_EFFECT_NAMES
    canvas: tuple = (32, 32)
    seed: int = 0
    fps: float = 12.0


@dataclass(frozen=True)
class TextSection:
    steps: int = 400
    lr: float = 5e-5
    batch_size: int = 1
    subset_per_effect: int = 10
    seed: int = 0
    schedule_T: int = 50
    base_width: int = 32

    def train_config(self) -> TextTrainConfig:
        return TextTrainConfig(
            steps=self.steps,
            lr=self.lr,
            batch_size=self.batch_size,
            seed=self.seed,
            schedule_T=self.schedule_T,
            base_width=self.base_width,
        )


@dataclass(frozen=True)
class ImageSection:
    steps: int = 3000
    lr: float = 5e-5
    batch_size: int = 4
    p_drop: float = 0.05
    flip: bool = True
    seed: int = 0
    schedule_T: int = 50
    base_width: int = 32

    def train_config(self) -> ImageTrainConfig:
        return ImageTrainConfig(
            steps=self.steps,
            lr=self.lr,
            batch_size=self.batch_size,
            p_drop=self.p_drop,
            flip=self.flip,
            seed=self.seed,
            schedule_T=self.schedule_T,
            base_width=self.base_width,
        )


@dataclass(frozen=True)
class GuidanceSection:
    T: int = 50
    K: int = 20
    v: float = 0.9
    s: float = 1.5
    seed: int = 0

    def guidance_config(self) -> GuidanceConfig:
        return GuidanceConfig(T=self.T, K=self.K, v=self.v, s=self.s, seed=self.seed)


@dataclass(frozen=True)
class PostSection:
    stabilize: bool = True
    lowpass: bool = True
    window: int = 3
    passes: int = 2
    flow_levels: int = 3
    flow_iters: int = 50
    smoothness: float = 10.0
    strength: float = 1.0


@dataclass(frozen=True)
class MetricsSection:
    clamp_eps: float = 0.05


@dataclass(frozen=True)
class RunConfig:
    dataset: DatasetSection = DatasetSection()
    text_training: TextSection = TextSection()
    image_training: ImageSection = ImageSection()
    guidance: GuidanceSection = GuidanceSection()
    post: PostSection = PostSection()
    metrics: MetricsSection = MetricsSection()

    def to_dict(self) -> dict:
        def convert(obj):
            if dataclasses.is_dataclass(obj):
                return {f.name: convert(getattr(obj, f.name)) for f in dataclasses.fields(obj)}
            if isinstance(obj, tuple):
                return [convert(x) for x in obj]
            return obj

        return convert(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"


_SECTIONS = {
    "dataset": DatasetSection,
    "text_training": TextSection,
    "image_training": ImageSection,
    "guidance": GuidanceSection,
    "post": PostSection,
    "metrics": MetricsSection,
}


def _section_from_dict(cls, doc: dict, where: str):
    fields = {f.name: f for f in dataclasses.fields(cls)}
    unknown = set(doc) - set(fields)
    if unknown:
        raise SchemaError(f"unknown keys in {where}: {sorted(unknown)}")
    kwargs = {}
    for name, value in doc.items():
        if isinstance(value, list):
            value = tuple(tuple(v) if isinstance(v, list) else v for v in value)
        kwargs[name] = value
    return cls(**kwargs)


def config_from_dict(doc: dict) -> RunConfig:
    if not isinstance(doc, dict):
        raise SchemaError("config root must be an object")
    unknown = set(doc) - set(_SECTIONS)
    if unknown:
        raise SchemaError(f"unknown config sections: {sorted(unknown)}")
    kwargs = {
        name: _section_from_dict(cls, doc.get(name, {}), name) for name, cls in _SECTIONS.items()
    }
    return RunConfig(**kwargs)


def load_config(path) -> RunConfig:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            doc = json.load(fh)
    except OSError as exc:
        raise SchemaError(f"cannot read config {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise SchemaError(f"config {path} is not valid JSON: {exc}") from exc
    return config_from_dict(doc)


def replace_section(config: RunConfig, section: str, **updates) -> RunConfig:
    """Functional update used by CLI flag overrides (flags win over files)."""
    current = getattr(config, section)
    return dataclasses.replace(config, **{section: dataclasses.replace(current, **updates)})
