"""Declarative magic-face effects: landmark-anchored sprite composites plus filters.

An effect is a named bundle of RGBA sprite layers (positioned and scaled in
units of the inter-ocular distance, so they track head pose) and pointwise
color filters applied after compositing.  Effects are described by a JSON
manifest next to its sprite PNGs; a small builtin library covers the eight
stock effects used throughout the tests and CLI.
"""

from __future__ import annotations

import json
import math
import os
import re
from dataclasses import dataclass, field

import numpy as np

from .errors import AssetError, GeometryError, SchemaError, ShapeError
from .imaging import Frame
from .synthface import LANDMARK_NAMES, LandmarkSet

FILTER_KINDS = ("tint", "brightness", "gamma")


@dataclass(frozen=True)
class FilterOp:
    """One pointwise color filter; kind-specific params, order-sensitive."""

    kind: str
    params: dict

    def __post_init__(self):
        if self.kind not in FILTER_KINDS:
            raise SchemaError(f"unknown filter kind {self.kind!r}")
        p = dict(self.params)
        if self.kind == "tint":
            color = p.pop("color", None)
            strength = p.pop("strength", None)
            if color is None or strength is None or p:
                raise SchemaError("tint needs exactly {color, strength}")
            if len(color) != 3 or not all(0.0 <= c <= 1.0 for c in color):
                raise SchemaError("tint color must be RGB in [0,1]")
            if not 0.0 <= strength <= 1.0:
                raise SchemaError("tint strength must be in [0,1]")
        elif self.kind == "brightness":
            delta = p.pop("delta", None)
            if delta is None or p:
                raise SchemaError("brightness needs exactly {delta}")
        elif self.kind == "gamma":
            value = p.pop("value", None)
            if value is None or p:
                raise SchemaError("gamma needs exactly {value}")
            if value <= 0:
                raise SchemaError("gamma must be positive")

    def apply(self, rgb: np.ndarray) -> np.ndarray:
        if self.kind == "tint":
            color = np.asarray(self.params["color"], dtype=np.float64)
            w = float(self.params["strength"])
            out = (1.0 - w) * rgb + w * color
        elif self.kind == "brightness":
            out = rgb + float(self.params["delta"])
        else:  # gamma
            out = np.power(np.clip(rgb, 0.0, 1.0), float(self.params["value"]))
        return np.clip(out, 0.0, 1.0)


class SpriteLayer:
    """An RGBA raster pinned to a landmark.

    `offset` and `scale` are in units of the inter-ocular distance: the
    rendered sprite width is scale * iod and its center sits at
    anchor + offset * iod.  Layers composite in ascending z_order.
    """

    def __init__(self, raster, anchor: str, offset=(0.0, 0.0), scale: float = 1.0, z_order: int = 0):
        arr = np.array(raster, dtype=np.float32, copy=True)
        if arr.ndim != 3 or arr.shape[2] != 4:
            raise SchemaError(f"sprite raster must be H x W x 4 RGBA, got {arr.shape}")
        if arr.min() < 0.0 or arr.max() > 1.0 or not np.isfinite(arr).all():
            raise SchemaError("sprite values must lie in [0,1]")
        if anchor not in LANDMARK_NAMES:
            raise SchemaError(f"unknown landmark anchor {anchor!r}")
        if scale <= 0:
            raise SchemaError("sprite scale must be positive")
        arr.setflags(write=False)
        self.raster = arr
        self.anchor = anchor
        self.offset = (float(offset[0]), float(offset[1]))
        self.scale = float(scale)
        self.z_order = int(z_order)

    def __eq__(self, other):
        if not isinstance(other, SpriteLayer):
            return NotImplemented
        return (
            self.anchor == other.anchor
            and self.offset == other.offset
            and self.scale == other.scale
            and self.z_order == other.z_order
            and self.raster.shape == other.raster.shape
            and bool((self.raster == other.raster).all())
        )


@dataclass(frozen=True)
class EffectSpec:
    """A named magic-face effect: sprites, filters, and its caption connective."""

    name: str
    sprites: tuple = ()
    filters: tuple = ()
    conj: str = "with"

    def __post_init__(self):
        if not self.name:
            raise SchemaError("effect name must be non-empty")
        object.__setattr__(self, "sprites", tuple(self.sprites))
        object.__setattr__(self, "filters", tuple(self.filters))


def slugify(name: str) -> str:
    return re.sub(r"[^a-z0-9]+", "-", name.lower()).strip("-")


def caption(effect: EffectSpec, base_caption: str) -> str:
    """Prompt template: "[base_caption] [conj] [effect name]" (single spaces)."""
    if not effect.name:
        raise SchemaError("effect name must be non-empty")
    if not base_caption:
        raise SchemaError("base caption must be non-empty")
    parts = [base_caption, effect.conj, effect.name]
    return " ".join(p for p in parts if p)


def _bilinear_rgba(raster: np.ndarray, u: np.ndarray, v: np.ndarray) -> np.ndarray:
    """Sample premultiplied RGBA at fractional (u, v) index coords; outside -> 0."""
    hs, ws = raster.shape[:2]
    pre = raster.astype(np.float64).copy()
    pre[..., :3] *= pre[..., 3:4]

    u0 = np.floor(u).astype(int)
    v0 = np.floor(v).astype(int)
    du = (u - u0)[..., None]
    dv = (v - v0)[..., None]

    def tap(vv, uu):
        inside = (uu >= 0) & (uu < ws) & (vv >= 0) & (vv < hs)
        out = np.zeros(uu.shape + (4,), dtype=np.float64)
        out[inside] = pre[vv[inside], uu[inside]]
        return out

    s = (
        tap(v0, u0) * (1 - du) * (1 - dv)
        + tap(v0, u0 + 1) * du * (1 - dv)
        + tap(v0 + 1, u0) * (1 - du) * dv
        + tap(v0 + 1, u0 + 1) * du * dv
    )
    return s


def apply_effect(frame: Frame, landmarks: LandmarkSet, effect: EffectSpec) -> Frame:
    """Composite sprites (ascending z_order, alpha-over) then run filters in order."""
    if frame.shape[2] != 3:
        raise ShapeError("effects operate on RGB frames")
    if not effect.sprites and not effect.filters:
        return frame
    iod = landmarks.interocular()
    if iod <= 1e-9:
        raise GeometryError("degenerate landmarks: zero inter-ocular distance")

    h, w = frame.shape[:2]
    img = frame.pixels.astype(np.float64)
    points = landmarks.as_dict()

    for layer in sorted(effect.sprites, key=lambda s: s.z_order):
        hs, ws = layer.raster.shape[:2]
        k = layer.scale * iod / ws  # canvas pixels per sprite pixel
        ax, ay = points[layer.anchor]
        px = ax + layer.offset[0] * iod
        py = ay + layer.offset[1] * iod
        # conservative output bounding box
        half_w, half_h = ws * k / 2.0, hs * k / 2.0
        x0 = max(0, int(math.floor(px - half_w - 1)))
        x1 = min(w, int(math.ceil(px + half_w + 2)))
        y0 = max(0, int(math.floor(py - half_h - 1)))
        y1 = min(h, int(math.ceil(py + half_h + 2)))
        if x0 >= x1 or y0 >= y1:
            continue
        xs = np.arange(x0, x1) + 0.5
        ys = np.arange(y0, y1) + 0.5
        gx, gy = np.meshgrid(xs, ys)
        u = (gx - px) / k + ws / 2.0 - 0.5
        v = (gy - py) / k + hs / 2.0 - 0.5
        rgba = _bilinear_rgba(layer.raster, u, v)
        alpha = rgba[..., 3:4]
        region = img[y0:y1, x0:x1]
        img[y0:y1, x0:x1] = rgba[..., :3] + (1.0 - alpha) * region

    for flt in effect.filters:
        img = flt.apply(img)
    return Frame(np.clip(img, 0.0, 1.0).astype(np.float32))


# ---------------------------------------------------------------------------
# manifest IO
# ---------------------------------------------------------------------------

_MANIFEST_KEYS = {"name", "conj", "filters", "sprites"}
_SPRITE_KEYS = {"file", "anchor", "offset", "scale", "z"}


def load_effect(manifest_path) -> EffectSpec:
    """Load and validate an effect manifest; sprite files resolve relative to it."""
    try:
        with open(manifest_path, "r", encoding="utf-8") as fh:
            doc = json.load(fh)
    except OSError as exc:
        raise AssetError(f"cannot read manifest {manifest_path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise SchemaError(f"manifest {manifest_path} is not valid JSON: {exc}") from exc
    if not isinstance(doc, dict):
        raise SchemaError("manifest root must be an object")
    unknown = set(doc) - _MANIFEST_KEYS
    if unknown:
        raise SchemaError(f"unknown manifest keys: {sorted(unknown)}")
    if "name" not in doc or not isinstance(doc["name"], str) or not doc["name"]:
        raise SchemaError("manifest needs a non-empty string 'name'")

    base = os.path.dirname(os.path.abspath(manifest_path))
    sprites = []
    for entry in doc.get("sprites", []):
        unknown = set(entry) - _SPRITE_KEYS
        if unknown:
            raise SchemaError(f"unknown sprite keys: {sorted(unknown)}")
        sprite_path = os.path.join(base, entry["file"])
        if not os.path.isfile(sprite_path):
            raise AssetError(f"missing sprite file: {sprite_path}")
        from PIL import Image

        with Image.open(sprite_path) as im:
            raster = np.asarray(im.convert("RGBA"), dtype=np.float32) / 255.0
        sprites.append(
            SpriteLayer(
                raster,
                anchor=entry["anchor"],
                offset=tuple(entry.get("offset", (0.0, 0.0))),
                scale=entry.get("scale", 1.0),
                z_order=entry.get("z", 0),
            )
        )
    filters = tuple(
        FilterOp(kind=f["kind"], params={k: v for k, v in f.items() if k != "kind"})
        for f in doc.get("filters", [])
    )
    return EffectSpec(
        name=doc["name"],
        sprites=tuple(sprites),
        filters=filters,
        conj=doc.get("conj", "with"),
    )


def write_effect(effect: EffectSpec, out_dir) -> str:
    """Write manifest + 8-bit sprite PNGs; returns the manifest path.

    Sprites are quantized to 8 bits, so load(write(e)) == e only when all
    rasters are 8-bit representable (true for the builtin library).
    """
    from PIL import Image

    os.makedirs(out_dir, exist_ok=True)
    slug = slugify(effect.name)
    sprite_docs = []
    for i, layer in enumerate(effect.sprites):
        fname = f"{slug}_{i}.png"
        arr = np.rint(layer.raster * 255.0).astype(np.uint8)
        Image.fromarray(arr, mode="RGBA").save(os.path.join(out_dir, fname))
        sprite_docs.append(
            {
                "file": fname,
                "anchor": layer.anchor,
                "offset": list(layer.offset),
                "scale": layer.scale,
                "z": layer.z_order,
            }
        )
    doc = {
        "name": effect.name,
        "conj": effect.conj,
        "filters": [{"kind": f.kind, **f.params} for f in effect.filters],
        "sprites": sprite_docs,
    }
    manifest_path = os.path.join(out_dir, f"{slug}.json")
    with open(manifest_path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return manifest_path


# ---------------------------------------------------------------------------
# builtin library: eight stock effects, all sprites synthesized at 8 bits
# ---------------------------------------------------------------------------


def _canvas(h, w):
    return np.zeros((h, w, 4), dtype=np.float64)


def _quantize(arr):
    return np.rint(np.clip(arr, 0.0, 1.0) * 255.0) / 255.0


def _disk(arr, cx, cy, r, color, alpha=1.0, soft=0.0):
    h, w = arr.shape[:2]
    yy, xx = np.mgrid[0:h, 0:w]
    d = np.sqrt((xx - cx) ** 2 + (yy - cy) ** 2)
    if soft > 0:
        a = np.clip((r - d) / soft, 0.0, 1.0) * alpha
    else:
        a = (d <= r).astype(np.float64) * alpha
    _blend(arr, a, color)


def _box(arr, x0, y0, x1, y1, color, alpha=1.0):
    a = np.zeros(arr.shape[:2])
    a[y0:y1, x0:x1] = alpha
    _blend(arr, a, color)


def _blend(arr, a, color):
    a = a[..., None]
    rgb = np.asarray(color, dtype=np.float64)
    old_a = arr[..., 3:4]
    new_a = a + old_a * (1 - a)
    mix = np.where(new_a > 0, (a * rgb + old_a * (1 - a) * arr[..., :3]) / np.maximum(new_a, 1e-12), 0.0)
    arr[..., :3] = mix
    arr[..., 3:4] = new_a


def _glasses_sprite(full_frame: bool) -> np.ndarray:
    s = _canvas(28, 64)
    dark = (0.05, 0.05, 0.06)
    for cx in (16, 48):
        _box(s, cx - 12, 13, cx + 12, 24, dark)  # lower rim
        _box(s, cx - 10, 15, cx + 10, 22, (0.55, 0.75, 0.85), alpha=0.35)  # lens
        if full_frame:
            _box(s, cx - 12, 4, cx + 12, 8, dark)  # upper rim
            _box(s, cx - 12, 4, cx - 9, 24, dark)
            _box(s, cx + 9, 4, cx + 12, 24, dark)
    _box(s, 26, 12, 38, 16, dark)  # bridge
    return _quantize(s)


def _blush_sprite() -> np.ndarray:
    s = _canvas(32, 72)
    pink = (0.95, 0.55, 0.62)
    _disk(s, 14, 16, 9, pink, alpha=0.55, soft=6.0)
    _disk(s, 58, 16, 9, pink, alpha=0.55, soft=6.0)
    return _quantize(s)


def _mask_sprite() -> np.ndarray:
    s = _canvas(72, 64)
    h, w = 72, 64
    yy, xx = np.mgrid[0:h, 0:w]
    inside = ((xx - w / 2) / (w / 2 - 2)) ** 2 + ((yy - h / 2) / (h / 2 - 2)) ** 2 <= 1.0
    a = inside.astype(np.float64) * 0.78
    for ex in (w / 2 - 14, w / 2 + 14):
        hole = np.sqrt((xx - ex) ** 2 + (yy - (h / 2 - 14)) ** 2) <= 6
        a[hole] = 0.0
    _blend(s, a, (0.93, 0.93, 0.90))
    return _quantize(s)


def _bow_sprite() -> np.ndarray:
    s = _canvas(30, 56)
    green = (0.12, 0.62, 0.22)
    yy, xx = np.mgrid[0:30, 0:56]
    left = (xx < 26) & (np.abs(yy - 15) <= (26 - xx) * 0.55)
    right = (xx > 30) & (np.abs(yy - 15) <= (xx - 30) * 0.55)
    _blend(s, (left | right).astype(np.float64), green)
    _disk(s, 28, 15, 5, (0.08, 0.45, 0.15))
    return _quantize(s)


def _fire_sprite() -> np.ndarray:
    s = _canvas(40, 56)
    for cx, cy, r, color, alpha in (
        (28, 30, 13, (0.95, 0.35, 0.05), 0.85),
        (18, 24, 8, (0.98, 0.55, 0.08), 0.8),
        (38, 22, 8, (0.98, 0.55, 0.08), 0.8),
        (28, 14, 7, (1.0, 0.85, 0.25), 0.9),
    ):
        _disk(s, cx, cy, r, color, alpha=alpha, soft=4.0)
    return _quantize(s)


def _beard_sprite() -> np.ndarray:
    s = _canvas(36, 64)
    yy, xx = np.mgrid[0:36, 0:64]
    band = ((xx - 32) / 30.0) ** 2 + ((yy - 8) / 26.0) ** 2 <= 1.0
    band &= yy >= 8
    _blend(s, band.astype(np.float64) * 0.9, (0.15, 0.10, 0.08))
    return _quantize(s)


def _hat_sprite() -> np.ndarray:
    s = _canvas(36, 80)
    straw = (0.93, 0.85, 0.58)
    _box(s, 2, 26, 78, 34, straw)  # brim
    _box(s, 22, 6, 58, 28, straw)  # crown
    _box(s, 22, 20, 58, 25, (0.55, 0.35, 0.2))  # band
    return _quantize(s)


def builtin_effects() -> dict[str, EffectSpec]:
    """The eight stock effects, keyed by name (two deliberately-similar glasses)."""
    lib = [
        EffectSpec(
            name="half-frame glasses",
            conj="wearing",
            sprites=(SpriteLayer(_glasses_sprite(False), "left_eye", (0.5, 0.0), 2.2, 1),),
        ),
        EffectSpec(
            name="black full-frame glasses",
            conj="wearing",
            sprites=(SpriteLayer(_glasses_sprite(True), "left_eye", (0.5, 0.0), 2.2, 1),),
        ),
        EffectSpec(
            name="sweet makeup",
            conj="in",
            sprites=(SpriteLayer(_blush_sprite(), "nose_tip", (0.0, 0.15), 2.4, 1),),
            filters=(
                FilterOp("tint", {"color": [0.98, 0.75, 0.78], "strength": 0.08}),
                FilterOp("brightness", {"delta": 0.03}),
            ),
        ),
        EffectSpec(
            name="creamy facial mask",
            conj="wearing",
            sprites=(SpriteLayer(_mask_sprite(), "nose_tip", (0.0, 0.0), 2.6, 1),),
        ),
        EffectSpec(
            name="green bow",
            conj="with",
            sprites=(SpriteLayer(_bow_sprite(), "forehead", (0.0, -0.35), 1.5, 2),),
        ),
        EffectSpec(
            name="burning fire",
            conj="with",
            sprites=(SpriteLayer(_fire_sprite(), "forehead", (0.0, -0.55), 2.0, 2),),
            filters=(FilterOp("tint", {"color": [1.0, 0.6, 0.2], "strength": 0.06}),),
        ),
        EffectSpec(
            name="man beard",
            conj="with",
            sprites=(SpriteLayer(_beard_sprite(), "chin", (0.0, -0.18), 1.9, 1),),
            # the dark filter is part of the ground-truth edit for this effect
            filters=(FilterOp("brightness", {"delta": -0.08}),),
        ),
        EffectSpec(
            name="white straw hat",
            conj="wearing",
            sprites=(SpriteLayer(_hat_sprite(), "forehead", (0.0, -0.40), 3.0, 2),),
        ),
    ]
    return {e.name: e for e in lib}


def resolve_effects(names, effects_dir=None) -> list[EffectSpec]:
    """Look up effects by name from the builtin library or a manifest directory."""
    builtin = builtin_effects()
    out = []
    for name in names:
        if name in builtin:
            out.append(builtin[name])
            continue
        if effects_dir is not None:
            candidate = os.path.join(effects_dir, f"{slugify(name)}.json")
            if os.path.isfile(candidate):
                out.append(load_effect(candidate))
                continue
        raise AssetError(f"unknown effect {name!r}")
    return out
