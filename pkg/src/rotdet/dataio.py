"""Annotation and prediction file schemas plus a seeded synthetic generator.

Both file kinds are versioned JSON documents.  Angles are stored in degrees
in ``[-90, 90)`` for readability and converted to radians on load; all
in-memory angles are radians.

Annotation schema (``format = "rotdet-annotations"``, ``version = 1``)::

    {
      "format": "rotdet-annotations",
      "version": 1,
      "angle_unit": "deg",
      "videos": [
        {
          "name": "room_a",
          "image_size": [512, 512],            # [width, height] pixels
          "frames": [
            {
              "frame": "000000",
              "people": [
                {"id": 1, "cx": 211.0, "cy": 140.5,
                 "w": 31.0, "h": 74.0, "angle": -12.5}
              ]
            }
          ]
        }
      ]
    }

Person ids are stable across the frames of a video.  Boxes are validated and
canonicalized on load.

Prediction schema (``format = "rotdet-predictions"``, ``version = 1``) is the
same shape with ``detections`` entries ``{"cx", "cy", "w", "h", "angle",
"conf"}`` and no ids; detection boxes round-trip exactly as stored (no
canonicalization), with ``angle`` allowed anywhere in (-360, 360).
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace

import numpy as np

from .codec import read_kv, ConfigError
from .geometry import (
    HALF_PI,
    InvalidBoxError,
    RotatedBox,
    canonicalize,
    radius_aligned_angle,
    wrap_canonical_angle,
)
from .postprocess import Detection

ANNOTATION_FORMAT = "rotdet-annotations"
PREDICTION_FORMAT = "rotdet-predictions"
SCHEMA_VERSION = 1

DEG_PER_RAD = 180.0 / math.pi


class AnnotationFormatError(ValueError):
    """Raised for files that do not match the documented schemas."""


def rad_to_deg(theta: float) -> float:
    return theta * DEG_PER_RAD


def deg_to_rad(angle: float) -> float:
    return angle / DEG_PER_RAD


@dataclass
class VideoAnnotations:
    image_size: tuple[int, int]
    frames: dict[str, tuple[tuple[int, RotatedBox], ...]]


@dataclass
class AnnotationSet:
    videos: dict[str, VideoAnnotations] = field(default_factory=dict)

    def all_frames(self):
        for video in self.videos.values():
            for people in video.frames.values():
                yield [box for _, box in people]


@dataclass
class PredictionSet:
    videos: dict[str, dict[str, tuple[Detection, ...]]] = field(default_factory=dict)


def _load_document(path, expected_format):
    try:
        with open(path, "r", encoding="utf-8") as fh:
            doc = json.load(fh)
    except json.JSONDecodeError as exc:
        raise AnnotationFormatError(f"{path}: parse error at byte {exc.pos}: {exc.msg}") from exc
    if not isinstance(doc, dict):
        raise AnnotationFormatError(f"{path}: top level must be an object")
    if doc.get("format") != expected_format:
        raise AnnotationFormatError(
            f"{path}: format is {doc.get('format')!r}, expected {expected_format!r}"
        )
    if doc.get("version") != SCHEMA_VERSION:
        raise AnnotationFormatError(f"{path}: unsupported version {doc.get('version')!r}")
    if doc.get("angle_unit") != "deg":
        raise AnnotationFormatError(f"{path}: angle_unit must be 'deg'")
    if not isinstance(doc.get("videos"), list):
        raise AnnotationFormatError(f"{path}: missing 'videos' list")
    return doc


def _require(record, key, where):
    if key not in record:
        raise AnnotationFormatError(f"{where}: missing field {key!r}")
    return record[key]


def load_annotations(path) -> AnnotationSet:
    """Load, validate and canonicalize an annotation file."""
    doc = _load_document(path, ANNOTATION_FORMAT)
    videos: dict[str, VideoAnnotations] = {}
    for vi, video in enumerate(doc["videos"]):
        name = _require(video, "name", f"{path}: video {vi}")
        size = _require(video, "image_size", f"{path}: video {name!r}")
        try:
            image_size = (int(size[0]), int(size[1]))
        except (TypeError, ValueError, IndexError) as exc:
            raise AnnotationFormatError(f"{path}: video {name!r}: bad image_size {size!r}") from exc
        if name in videos:
            raise AnnotationFormatError(f"{path}: duplicate video name {name!r}")
        frames: dict[str, tuple[tuple[int, RotatedBox], ...]] = {}
        for fi, frame in enumerate(_require(video, "frames", f"{path}: video {name!r}")):
            where = f"{path}: video {name!r}, frame entry {fi}"
            key = str(_require(frame, "frame", where))
            if key in frames:
                raise AnnotationFormatError(f"{where}: duplicate frame key {key!r}")
            people = []
            for ri, rec in enumerate(_require(frame, "people", where)):
                rwhere = f"{where}, record {ri}"
                try:
                    box = RotatedBox(
                        float(_require(rec, "cx", rwhere)),
                        float(_require(rec, "cy", rwhere)),
                        float(_require(rec, "w", rwhere)),
                        float(_require(rec, "h", rwhere)),
                        deg_to_rad(float(_require(rec, "angle", rwhere))),
                    )
                except (TypeError, ValueError) as exc:
                    if isinstance(exc, AnnotationFormatError):
                        raise
                    raise AnnotationFormatError(f"{rwhere}: invalid box: {exc}") from exc
                people.append((int(_require(rec, "id", rwhere)), canonicalize(box)))
            frames[key] = tuple(people)
        videos[name] = VideoAnnotations(image_size, frames)
    return AnnotationSet(videos)


def save_annotations(annotations: AnnotationSet, path) -> None:
    doc = {
        "format": ANNOTATION_FORMAT,
        "version": SCHEMA_VERSION,
        "angle_unit": "deg",
        "videos": [
            {
                "name": name,
                "image_size": list(video.image_size),
                "frames": [
                    {
                        "frame": key,
                        "people": [
                            {
                                "id": pid,
                                "cx": box.cx,
                                "cy": box.cy,
                                "w": box.w,
                                "h": box.h,
                                "angle": rad_to_deg(box.theta),
                            }
                            for pid, box in people
                        ],
                    }
                    for key, people in video.frames.items()
                ],
            }
            for name, video in annotations.videos.items()
        ],
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=1, sort_keys=True)
        fh.write("\n")


def load_predictions(path) -> PredictionSet:
    doc = _load_document(path, PREDICTION_FORMAT)
    videos: dict[str, dict[str, tuple[Detection, ...]]] = {}
    for vi, video in enumerate(doc["videos"]):
        name = _require(video, "name", f"{path}: video {vi}")
        if name in videos:
            raise AnnotationFormatError(f"{path}: duplicate video name {name!r}")
        frames: dict[str, tuple[Detection, ...]] = {}
        for fi, frame in enumerate(_require(video, "frames", f"{path}: video {name!r}")):
            where = f"{path}: video {name!r}, frame entry {fi}"
            key = str(_require(frame, "frame", where))
            if key in frames:
                raise AnnotationFormatError(f"{where}: duplicate frame key {key!r}")
            dets = []
            for ri, rec in enumerate(_require(frame, "detections", where)):
                rwhere = f"{where}, record {ri}"
                try:
                    dets.append(
                        Detection(
                            RotatedBox(
                                float(_require(rec, "cx", rwhere)),
                                float(_require(rec, "cy", rwhere)),
                                float(_require(rec, "w", rwhere)),
                                float(_require(rec, "h", rwhere)),
                                deg_to_rad(float(_require(rec, "angle", rwhere))),
                            ),
                            float(_require(rec, "conf", rwhere)),
                        )
                    )
                except (TypeError, ValueError) as exc:
                    if isinstance(exc, AnnotationFormatError):
                        raise
                    raise AnnotationFormatError(f"{rwhere}: invalid detection: {exc}") from exc
            frames[key] = tuple(dets)
        videos[name] = frames
    return PredictionSet(videos)


def save_predictions(predictions: PredictionSet, path) -> None:
    doc = {
        "format": PREDICTION_FORMAT,
        "version": SCHEMA_VERSION,
        "angle_unit": "deg",
        "videos": [
            {
                "name": name,
                "frames": [
                    {
                        "frame": key,
                        "detections": [
                            {
                                "cx": d.box.cx,
                                "cy": d.box.cy,
                                "w": d.box.w,
                                "h": d.box.h,
                                "angle": rad_to_deg(d.box.theta),
                                "conf": d.conf,
                            }
                            for d in dets
                        ],
                    }
                    for key, dets in frames.items()
                ],
            }
            for name, frames in predictions.videos.items()
        ],
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=1, sort_keys=True)
        fh.write("\n")


@dataclass(frozen=True)
class CorruptionConfig:
    """Noise model turning ground truth into detector-like output."""

    center_jitter: float = 2.0
    size_jitter: float = 0.05
    angle_jitter: float = 0.05
    drop_rate: float = 0.05
    spurious_rate: float = 0.3
    conf_true: tuple[float, float] = (0.85, 0.08)
    conf_false: tuple[float, float] = (0.35, 0.12)


@dataclass(frozen=True)
class SynthConfig:
    """Overhead-fisheye scene generator configuration.

    People stand inside the circular field of view; their box height axis
    points along the image radius plus Gaussian pose noise.  Output is a
    deterministic function of the config (PCG64 generator seeded with
    ``seed``), portable across platforms.
    """

    seed: int = 0
    frames: int = 10
    people: tuple[int, int] = (2, 6)
    image_size: int = 256
    pose_noise: float = 0.15
    aspect_range: tuple[float, float] = (2.0, 4.0)
    height_range: tuple[float, float] = (40.0, 90.0)
    walk_step: float = 6.0
    presence: float = 0.9
    corruption: CorruptionConfig | None = None

    def __post_init__(self):
        if self.image_size <= 0:
            raise ConfigError(f"image_size must be positive, got {self.image_size}")
        if self.frames <= 0:
            raise ConfigError(f"frames must be positive, got {self.frames}")
        if not (0 < self.people[0] <= self.people[1]):
            raise ConfigError(f"bad people range {self.people}")

    @classmethod
    def from_file(cls, path) -> "SynthConfig":
        kv = read_kv(path)
        kwargs = {}
        try:
            if "seed" in kv:
                kwargs["seed"] = int(kv["seed"])
            if "frames" in kv:
                kwargs["frames"] = int(kv["frames"])
            if "people" in kv:
                lo, hi = kv["people"].split(",")
                kwargs["people"] = (int(lo), int(hi))
            if "image_size" in kv:
                kwargs["image_size"] = int(kv["image_size"])
            if "pose_noise" in kv:
                kwargs["pose_noise"] = float(kv["pose_noise"])
            if "aspect_range" in kv:
                lo, hi = kv["aspect_range"].split(",")
                kwargs["aspect_range"] = (float(lo), float(hi))
            if "height_range" in kv:
                lo, hi = kv["height_range"].split(",")
                kwargs["height_range"] = (float(lo), float(hi))
            if kv.get("corrupt", "").lower() in {"1", "true", "yes", "on"}:
                kwargs["corruption"] = CorruptionConfig()
        except ValueError as exc:
            raise ConfigError(f"{path}: {exc}") from exc
        return cls(**kwargs)


def _place_person(rng, cfg: SynthConfig):
    center = cfg.image_size / 2.0
    # sqrt keeps the density uniform over the disc; margin keeps boxes inside
    radius = 0.82 * center * math.sqrt(rng.random())
    phi = rng.uniform(0.0, 2.0 * math.pi)
    return center + radius * math.cos(phi), center + radius * math.sin(phi)


def _person_box(rng, cfg: SynthConfig, cx: float, cy: float) -> RotatedBox:
    center = (cfg.image_size / 2.0, cfg.image_size / 2.0)
    h = rng.uniform(*cfg.height_range)
    w = h / rng.uniform(*cfg.aspect_range)
    theta = radius_aligned_angle(cx, cy, center)
    if cfg.pose_noise > 0:
        theta += rng.normal(0.0, cfg.pose_noise)
    return canonicalize(RotatedBox(cx, cy, w, h, theta))


def generate_scene(cfg: SynthConfig) -> tuple[AnnotationSet, PredictionSet | None]:
    """Deterministic synthetic video plus optional corrupted detections."""
    rng = np.random.default_rng(cfg.seed)
    center = cfg.image_size / 2.0
    n_people = int(rng.integers(cfg.people[0], cfg.people[1] + 1))
    bases = [_place_person(rng, cfg) for _ in range(n_people)]
    heights = rng.uniform(*cfg.height_range, size=n_people)
    aspects = rng.uniform(*cfg.aspect_range, size=n_people)

    frames: dict[str, tuple[tuple[int, RotatedBox], ...]] = {}
    pred_frames: dict[str, tuple[Detection, ...]] = {}
    lo = 0.1 * cfg.image_size
    hi = 0.9 * cfg.image_size
    for f in range(cfg.frames):
        people = []
        for pid in range(n_people):
            bx, by = bases[pid]
            bx = float(np.clip(bx + rng.normal(0.0, cfg.walk_step), lo, hi))
            by = float(np.clip(by + rng.normal(0.0, cfg.walk_step), lo, hi))
            bases[pid] = (bx, by)
            present = rng.random() < cfg.presence
            if not present:
                continue
            theta = radius_aligned_angle(bx, by, (center, center))
            if cfg.pose_noise > 0:
                theta += rng.normal(0.0, cfg.pose_noise)
            h = heights[pid]
            box = canonicalize(RotatedBox(bx, by, h / aspects[pid], h, theta))
            people.append((pid + 1, box))
        key = f"{f:06d}"
        frames[key] = tuple(people)
        if cfg.corruption is not None:
            pred_frames[key] = tuple(_corrupt_frame(rng, cfg, [b for _, b in people]))

    annotations = AnnotationSet({"synthetic": VideoAnnotations((cfg.image_size, cfg.image_size), frames)})
    if cfg.corruption is None:
        return annotations, None
    return annotations, PredictionSet({"synthetic": pred_frames})


def _corrupt_frame(rng, cfg: SynthConfig, boxes) -> list[Detection]:
    corr = cfg.corruption
    dets: list[Detection] = []
    for box in boxes:
        if rng.random() < corr.drop_rate:
            continue
        w = max(box.w * (1.0 + rng.normal(0.0, corr.size_jitter)), 1.0)
        h = max(box.h * (1.0 + rng.normal(0.0, corr.size_jitter)), 1.0)
        jittered = RotatedBox(
            box.cx + rng.normal(0.0, corr.center_jitter),
            box.cy + rng.normal(0.0, corr.center_jitter),
            w,
            h,
            wrap_canonical_angle(box.theta + rng.normal(0.0, corr.angle_jitter)),
        )
        conf = float(np.clip(rng.normal(*corr.conf_true), 0.0, 1.0))
        dets.append(Detection(jittered, conf))
    n_spurious = int(rng.poisson(corr.spurious_rate))
    for _ in range(n_spurious):
        cx, cy = _place_person(rng, cfg)
        spur = _person_box(rng, cfg, cx, cy)
        conf = float(np.clip(rng.normal(*corr.conf_false), 0.0, 1.0))
        dets.append(Detection(spur, conf))
    return dets
