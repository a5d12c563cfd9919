"""Paired training corpus: (source, edited, prompt) triplets over identities x poses x effects.

Each identity is a sampled synthetic face; poses sweep yaw evenly over
[-30, 30] degrees; every effect is composited onto every pose.  Images are
stored as single-frame MFV files next to a JSON manifest.  Everything is a
pure function of the seed, so re-forging reproduces every byte.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass

import numpy as np

from .effects import EffectSpec, apply_effect, caption
from .errors import AssetError, IoError, SchemaError
from .imaging import Frame, load_frame, save_frame
from .seeding import derive_seed
from .synthface import describe_face, render_face, sample_face_params

_RECORD_KEYS = {"src", "edit", "prompt", "meta"}
_META_KEYS = {"seed", "effect", "yaw", "identity", "pose"}


@dataclass(frozen=True)
class TrainingTriplet:
    """One loaded training example."""

    source: Frame
    edited: Frame
    prompt: str
    meta: dict

    def __post_init__(self):
        if self.source.shape != self.edited.shape:
            raise SchemaError("source and edited frames must share a shape")
        if not self.prompt.endswith(self.meta["effect"]):
            raise SchemaError("prompt must end with the effect name")


@dataclass(frozen=True)
class DatasetManifest:
    """Index of a forged dataset; image paths are relative to `root`."""

    records: tuple
    vocab: tuple
    root: str

    def __len__(self):
        return len(self.records)

    def path(self, rel: str) -> str:
        return os.path.join(self.root, rel)

    def load_triplet(self, i: int) -> TrainingTriplet:
        rec = self.records[i]
        return TrainingTriplet(
            source=load_frame(self.path(rec["src"])),
            edited=load_frame(self.path(rec["edit"])),
            prompt=rec["prompt"],
            meta=rec["meta"],
        )

    def validate(self) -> None:
        """Check that every image exists and the vocab covers every prompt."""
        for rec in self.records:
            for key in ("src", "edit"):
                if not os.path.isfile(self.path(rec[key])):
                    raise AssetError(f"missing image file: {self.path(rec[key])}")
        vocab = set(self.vocab)
        for rec in self.records:
            missing = set(rec["prompt"].split()) - vocab
            if missing:
                raise SchemaError(f"vocab does not cover tokens {sorted(missing)}")


def expected_record_count(n_identities: int, poses_per_identity: int, n_effects: int) -> int:
    return n_identities * poses_per_identity * n_effects


def pose_yaws(poses_per_identity: int) -> list[float]:
    """Evenly spaced yaw values over [-30, 30]; a single pose is frontal."""
    if poses_per_identity == 1:
        return [0.0]
    return [float(y) for y in np.linspace(-30.0, 30.0, poses_per_identity)]


def forge(
    n_identities: int,
    effects: list[EffectSpec],
    poses_per_identity: int,
    seed: int,
    out_dir,
    canvas: tuple[int, int] = (32, 32),
) -> DatasetManifest:
    """Write the full corpus under `out_dir` and return its manifest."""
    if n_identities < 1 or poses_per_identity < 1:
        raise SchemaError("need at least one identity and one pose")
    if not effects:
        raise SchemaError("need at least one effect")
    names = [e.name for e in effects]
    if len(set(names)) != len(names):
        raise SchemaError("effect names must be unique")
    try:
        os.makedirs(out_dir, exist_ok=True)
        os.makedirs(os.path.join(out_dir, "images"), exist_ok=True)
    except OSError as exc:
        raise IoError(f"cannot create {out_dir}: {exc}") from exc

    from .effects import slugify

    records = []
    yaws = pose_yaws(poses_per_identity)
    for i in range(n_identities):
        identity_seed = derive_seed(seed, "identity", i)
        base = sample_face_params(identity_seed, canvas)
        for j, yaw in enumerate(yaws):
            posed = base.with_pose(yaw)
            src_frame, lms = render_face(posed, canvas)
            src_rel = os.path.join("images", f"id{i:04d}_p{j}_src.mfv")
            save_frame(src_frame, os.path.join(out_dir, src_rel))
            base_text = describe_face(posed)
            for effect in effects:
                edited = apply_effect(src_frame, lms, effect)
                edit_rel = os.path.join("images", f"id{i:04d}_p{j}_{slugify(effect.name)}.mfv")
                save_frame(edited, os.path.join(out_dir, edit_rel))
                records.append(
                    {
                        "src": src_rel,
                        "edit": edit_rel,
                        "prompt": caption(effect, base_text),
                        "meta": {
                            "seed": identity_seed,
                            "effect": effect.name,
                            "yaw": yaw,
                            "identity": i,
                            "pose": j,
                        },
                    }
                )

    vocab = sorted({tok for rec in records for tok in rec["prompt"].split()})
    manifest = {"records": records, "vocab": vocab}
    manifest_path = os.path.join(out_dir, "manifest.json")
    try:
        with open(manifest_path, "w", encoding="utf-8") as fh:
            json.dump(manifest, fh, indent=2, sort_keys=True)
            fh.write("\n")
    except OSError as exc:
        raise IoError(f"cannot write {manifest_path}: {exc}") from exc
    return DatasetManifest(records=tuple(records), vocab=tuple(vocab), root=os.path.abspath(out_dir))


def load_manifest(path) -> DatasetManifest:
    """Parse a manifest written by forge; rejects unknown fields."""
    try:
        with open(path, "r", encoding="utf-8") as fh:
            doc = json.load(fh)
    except OSError as exc:
        raise IoError(f"cannot read {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise SchemaError(f"{path} is not valid JSON: {exc}") from exc
    if not isinstance(doc, dict) or set(doc) != {"records", "vocab"}:
        raise SchemaError(f"manifest must have exactly keys records/vocab, got {sorted(doc)}")
    for rec in doc["records"]:
        if set(rec) != _RECORD_KEYS:
            raise SchemaError(f"record must have exactly keys {sorted(_RECORD_KEYS)}")
        unknown = set(rec["meta"]) - _META_KEYS
        if unknown:
            raise SchemaError(f"unknown meta keys: {sorted(unknown)}")
    return DatasetManifest(
        records=tuple(doc["records"]),
        vocab=tuple(doc["vocab"]),
        root=os.path.dirname(os.path.abspath(path)),
    )
