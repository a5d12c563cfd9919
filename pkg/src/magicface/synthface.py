"""Procedural landmark-annotated faces and head-motion clips.

Faces are stylized: an elliptical head over a hair ellipse, white eyes with
offset pupils, a nose dot and a mouth.  Yaw is simulated as a horizontal
shear of the feature group (eyes/nose/mouth shift by a fraction of the face
half-width times sin(yaw)) so every landmark stays analytic.  Rasterization
is 4x supersampled and box-downsampled, which keeps sub-pixel motion smooth
enough for optical-flow work downstream.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import GeometryError
from .imaging import Frame, Video

LANDMARK_NAMES = ("left_eye", "right_eye", "nose_tip", "mouth_center", "chin", "forehead")

SUPERSAMPLE = 4
# fraction of the face half-width the feature group shifts at yaw=90 deg
YAW_SHEAR = 0.25
# vertical feature placement, as fractions of the face semi-axis b
EYE_HEIGHT = -0.22
NOSE_HEIGHT = 0.08
MOUTH_HEIGHT = 0.45
CHIN_HEIGHT = 0.92

SCLERA_COLOR = (1.0, 1.0, 1.0)
PUPIL_COLOR = (0.08, 0.08, 0.09)
LIP_COLOR = (0.62, 0.24, 0.26)
BG_TOP = (0.62, 0.66, 0.72)
BG_BOTTOM = (0.45, 0.48, 0.52)

HAIR_PALETTE = {
    "dark": (0.10, 0.08, 0.07),
    "brown": (0.36, 0.22, 0.12),
    "blonde": (0.82, 0.68, 0.40),
    "red": (0.55, 0.20, 0.12),
    "gray": (0.65, 0.65, 0.66),
}


@dataclass(frozen=True)
class FaceParams:
    """Geometry and palette of one synthetic identity at one pose."""

    skin_tone: tuple[float, float, float]
    face_axes: tuple[float, float]  # (a, b) semi-axes, pixels
    eye_sep: float
    eye_radius: float
    pupil_offset: tuple[float, float]
    mouth_width: float
    hair_tone: tuple[float, float, float]
    yaw: float  # degrees, [-45, 45]
    center: tuple[float, float]  # (cx, cy), pixels

    def with_pose(self, yaw: float, dx: float = 0.0) -> "FaceParams":
        return FaceParams(
            skin_tone=self.skin_tone,
            face_axes=self.face_axes,
            eye_sep=self.eye_sep,
            eye_radius=self.eye_radius,
            pupil_offset=self.pupil_offset,
            mouth_width=self.mouth_width,
            hair_tone=self.hair_tone,
            yaw=yaw,
            center=(self.center[0] + dx, self.center[1]),
        )


@dataclass(frozen=True)
class LandmarkSet:
    """The six analytic feature positions, sub-pixel, in canvas coordinates."""

    left_eye: tuple[float, float]
    right_eye: tuple[float, float]
    nose_tip: tuple[float, float]
    mouth_center: tuple[float, float]
    chin: tuple[float, float]
    forehead: tuple[float, float]

    def as_dict(self) -> dict[str, tuple[float, float]]:
        return {name: getattr(self, name) for name in LANDMARK_NAMES}

    def as_array(self) -> np.ndarray:
        return np.array([getattr(self, name) for name in LANDMARK_NAMES], dtype=np.float64)

    def interocular(self) -> float:
        le, re = np.asarray(self.left_eye), np.asarray(self.right_eye)
        return float(np.linalg.norm(re - le))


@dataclass(frozen=True)
class MotionSpec:
    """Sinusoidal head motion: yaw and horizontal translation share one period."""

    yaw_amplitude: float = 30.0  # degrees
    yaw_period: float = 24.0  # frames
    translation_amplitude: float = 2.0  # pixels
    n_frames: int = 24

    def __post_init__(self):
        if self.n_frames < 1:
            raise GeometryError("n_frames must be >= 1")
        if self.yaw_period <= 0:
            raise GeometryError("yaw_period must be positive")


def _yaw_shift(params: FaceParams) -> float:
    return YAW_SHEAR * params.face_axes[0] * math.sin(math.radians(params.yaw))


def landmarks_for(params: FaceParams) -> LandmarkSet:
    """Analytic landmark positions for a face; the renderer places features here."""
    cx, cy = params.center
    a, b = params.face_axes
    shift = _yaw_shift(params)
    eye_y = cy + EYE_HEIGHT * b
    return LandmarkSet(
        left_eye=(cx - params.eye_sep / 2.0 + shift, eye_y),
        right_eye=(cx + params.eye_sep / 2.0 + shift, eye_y),
        nose_tip=(cx + shift, cy + NOSE_HEIGHT * b),
        mouth_center=(cx + shift, cy + MOUTH_HEIGHT * b),
        chin=(cx, cy + CHIN_HEIGHT * b),
        forehead=(cx, cy - CHIN_HEIGHT * b),
    )


def validate_face_params(params: FaceParams, canvas: tuple[int, int]) -> None:
    """Raise GeometryError unless every invariant holds on this canvas."""
    h, w = canvas
    cx, cy = params.center
    a, b = params.face_axes
    r = params.eye_radius
    if a <= 0 or b <= 0 or r <= 0 or params.eye_sep <= 0 or params.mouth_width <= 0:
        raise GeometryError("face dimensions must be positive")
    if abs(params.yaw) > 45.0:
        raise GeometryError(f"yaw {params.yaw} outside [-45, 45]")
    # hair ellipse is the outermost geometry
    ha, hb = 1.15 * a, 1.15 * b
    hair_cy = cy - 0.1 * b
    if cx - ha < 0 or cx + ha > w or hair_cy - hb < 0 or cy + b > h or hair_cy + hb > h:
        raise GeometryError("face does not fit inside the canvas")
    # eyes (with yaw shift) must sit inside the face ellipse; test against the
    # (a-r, b-r) ellipse, a conservative subset of the true eroded region
    lms = landmarks_for(params)
    if a - r <= 0 or b - r <= 0:
        raise GeometryError("eye radius too large for the face")
    for eye in (lms.left_eye, lms.right_eye):
        u = (eye[0] - cx) / (a - r)
        v = (eye[1] - cy) / (b - r)
        if u * u + v * v > 1.0:
            raise GeometryError("eyes fall outside the face ellipse")
    pdx, pdy = params.pupil_offset
    if math.hypot(pdx, pdy) > 0.5 * r:
        raise GeometryError("pupil offset leaves the eye")
    for name, (x, y) in lms.as_dict().items():
        if not (0 <= x <= w and 0 <= y <= h):
            raise GeometryError(f"landmark {name} outside canvas")


def sample_face_params(seed: int, canvas: tuple[int, int] = (32, 32)) -> FaceParams:
    """Draw a random identity; deterministic in (seed, canvas).

    All ranges are uniform and sized so that any seed yields a valid face
    (invariants re-checked before returning).
    """
    h, w = canvas
    if h < 32 or w < 32:
        raise GeometryError(f"canvas {canvas} too small; need at least 32x32")
    rng = np.random.default_rng(seed)
    a = rng.uniform(0.26, 0.33) * w
    b = rng.uniform(0.28, 0.35) * h
    skin_r = rng.uniform(0.45, 0.95)
    skin_g = skin_r * rng.uniform(0.72, 0.85)
    skin_b = skin_g * rng.uniform(0.72, 0.90)
    hair_name = list(HAIR_PALETTE)[rng.integers(0, len(HAIR_PALETTE))]
    hair = tuple(
        float(np.clip(c + rng.uniform(-0.03, 0.03), 0.0, 1.0)) for c in HAIR_PALETTE[hair_name]
    )
    eye_radius = rng.uniform(0.12, 0.16) * a
    params = FaceParams(
        skin_tone=(float(skin_r), float(skin_g), float(skin_b)),
        face_axes=(float(a), float(b)),
        eye_sep=float(rng.uniform(0.72, 0.92) * a),
        eye_radius=float(eye_radius),
        pupil_offset=(
            float(rng.uniform(-0.25, 0.25) * eye_radius),
            float(rng.uniform(-0.25, 0.25) * eye_radius),
        ),
        mouth_width=float(rng.uniform(0.50, 0.80) * a),
        hair_tone=hair,
        yaw=float(rng.uniform(-30.0, 30.0)),
        center=(
            float(w / 2.0 + rng.uniform(-0.02, 0.02) * w),
            float(h / 2.0 + rng.uniform(-0.02, 0.02) * h),
        ),
    )
    validate_face_params(params, canvas)
    return params


def hair_descriptor(params: FaceParams) -> str:
    """Nearest hair-palette family, used by the template captioner."""
    tone = np.asarray(params.hair_tone)
    return min(HAIR_PALETTE, key=lambda k: float(np.sum((np.asarray(HAIR_PALETTE[k]) - tone) ** 2)))


def pose_descriptor(params: FaceParams) -> str:
    if params.yaw < -10.0:
        return "left"
    if params.yaw > 10.0:
        return "right"
    return "forward"


def describe_face(params: FaceParams) -> str:
    """Deterministic base caption for one rendered face."""
    return f"a person with {hair_descriptor(params)} hair facing {pose_descriptor(params)}"


def _ellipse_mask(xx, yy, cx, cy, a, b):
    return ((xx - cx) / a) ** 2 + ((yy - cy) / b) ** 2 <= 1.0


def render_face(params: FaceParams, canvas: tuple[int, int] = (32, 32)) -> tuple[Frame, LandmarkSet]:
    """Rasterize one face; returns the frame and its analytic landmarks."""
    validate_face_params(params, canvas)
    h, w = canvas
    s = SUPERSAMPLE
    # supersampled pixel centers in canvas coordinates
    xs = (np.arange(w * s) + 0.5) / s
    ys = (np.arange(h * s) + 0.5) / s
    xx, yy = np.meshgrid(xs, ys)

    cx, cy = params.center
    a, b = params.face_axes
    lms = landmarks_for(params)

    img = np.empty((h * s, w * s, 3), dtype=np.float64)
    grad = (yy / h)[..., None]
    img[:] = np.asarray(BG_TOP) * (1.0 - grad) + np.asarray(BG_BOTTOM) * grad

    def paint(mask, color):
        img[mask] = np.asarray(color, dtype=np.float64)

    paint(_ellipse_mask(xx, yy, cx, cy - 0.1 * b, 1.15 * a, 1.15 * b), params.hair_tone)
    paint(_ellipse_mask(xx, yy, cx, cy, a, b), params.skin_tone)
    nose = np.asarray(params.skin_tone) * 0.82
    paint(_ellipse_mask(xx, yy, *lms.nose_tip, 0.10 * a, 0.07 * b), nose)
    paint(
        _ellipse_mask(xx, yy, *lms.mouth_center, params.mouth_width / 2.0, 0.08 * b),
        LIP_COLOR,
    )
    r = params.eye_radius
    for eye in (lms.left_eye, lms.right_eye):
        paint(_ellipse_mask(xx, yy, eye[0], eye[1], r, r), SCLERA_COLOR)
    pdx, pdy = params.pupil_offset
    for eye in (lms.left_eye, lms.right_eye):
        paint(_ellipse_mask(xx, yy, eye[0] + pdx, eye[1] + pdy, 0.45 * r, 0.45 * r), PUPIL_COLOR)

    down = img.reshape(h, s, w, s, 3).mean(axis=(1, 3))
    return Frame(np.clip(down, 0.0, 1.0).astype(np.float32)), lms


def trajectory_pose(params: FaceParams, motion: MotionSpec, i: int) -> FaceParams:
    """Per-frame pose: yaw_i and translation t_i both follow sin(2*pi*i/period)."""
    phase = math.sin(2.0 * math.pi * i / motion.yaw_period)
    return params.with_pose(motion.yaw_amplitude * phase, motion.translation_amplitude * phase)


def save_landmark_track(tracks: list[LandmarkSet], path) -> None:
    """Sidecar JSON for a trajectory video: one named-point dict per frame."""
    import json

    doc = {"frames": [{k: list(v) for k, v in t.as_dict().items()} for t in tracks]}
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_landmark_track(path) -> list[LandmarkSet]:
    import json

    from .errors import SchemaError

    try:
        with open(path, "r", encoding="utf-8") as fh:
            doc = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise SchemaError(f"cannot read landmark track {path}: {exc}") from exc
    if not isinstance(doc, dict) or set(doc) != {"frames"}:
        raise SchemaError("landmark track must have exactly one key: frames")
    tracks = []
    for entry in doc["frames"]:
        if set(entry) != set(LANDMARK_NAMES):
            raise SchemaError(f"each frame needs exactly the keys {LANDMARK_NAMES}")
        tracks.append(LandmarkSet(**{k: tuple(v) for k, v in entry.items()}))
    return tracks


def generate_trajectory(
    params: FaceParams,
    motion: MotionSpec,
    canvas: tuple[int, int] = (32, 32),
    fps: float = 12.0,
) -> tuple[Video, list[LandmarkSet]]:
    """Render the full motion clip plus the aligned landmark track.

    Raises GeometryError up front if any frame of the trajectory would clip.
    """
    poses = [trajectory_pose(params, motion, i) for i in range(motion.n_frames)]
    for pose in poses:
        validate_face_params(pose, canvas)
    frames, tracks = [], []
    for pose in poses:
        frame, lms = render_face(pose, canvas)
        frames.append(frame)
        tracks.append(lms)
    return Video.from_frames(frames, fps=fps), tracks
