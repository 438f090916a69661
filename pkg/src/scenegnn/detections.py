"""Scene data model: detection records, JSONL I/O, splitting, synthetic scenes.

A scene is the output of an object detector run on one image: a list of
labelled bounding boxes plus (for training data) the ground-truth scene
class.  The JSONL format accepted here serves both ground-truth annotation
files and raw detector output files.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from enum import IntEnum
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .errors import BadRatios, EmptyFile, InvalidConfig, MalformedRecord


class SceneClass(IntEnum):
    INDOOR = 0
    OUTDOOR = 1


_SCENE_NAMES = {"indoor": SceneClass.INDOOR, "outdoor": SceneClass.OUTDOOR}


@dataclass(frozen=True)
class Detection:
    """One detected object: label index plus top-left-corner box geometry."""

    label_id: int
    x: float
    y: float
    w: float
    h: float

    def __post_init__(self):
        if self.label_id < 0:
            raise ValueError(f"label_id must be >= 0, got {self.label_id}")
        if self.w <= 0 or self.h <= 0:
            raise ValueError(f"box must have positive size, got w={self.w}, h={self.h}")

    def center(self) -> tuple[float, float]:
        return (self.x + self.w / 2.0, self.y + self.h / 2.0)


@dataclass(frozen=True)
class SceneSample:
    """All detections of one image plus the (optional) scene class."""

    scene_id: str
    image_w: float
    image_h: float
    detections: tuple[Detection, ...]
    scene_class: Optional[SceneClass] = None

    def __post_init__(self):
        if self.image_w <= 0 or self.image_h <= 0:
            raise ValueError(
                f"image size must be positive, got {self.image_w}x{self.image_h}"
            )


def _clamp_detection(raw: dict, image_w: float, image_h: float) -> Detection:
    """Clip a raw box to the image bounds.

    Detector output commonly overflows by a few pixels; clipping keeps the
    record instead of rejecting it.  A box entirely outside the image is a
    schema violation handled by the caller (ValueError propagates).
    """
    x0 = min(max(float(raw["x"]), 0.0), image_w)
    y0 = min(max(float(raw["y"]), 0.0), image_h)
    x1 = min(max(float(raw["x"]) + float(raw["w"]), 0.0), image_w)
    y1 = min(max(float(raw["y"]) + float(raw["h"]), 0.0), image_h)
    return Detection(label_id=int(raw["label"]), x=x0, y=y0, w=x1 - x0, h=y1 - y0)


def _parse_record(obj: dict) -> SceneSample:
    if not isinstance(obj, dict):
        raise ValueError("record is not a JSON object")
    for key in ("scene_id", "image_w", "image_h", "detections"):
        if key not in obj:
            raise ValueError(f"missing required field {key!r}")
    image_w = float(obj["image_w"])
    image_h = float(obj["image_h"])
    scene_class = None
    if obj.get("scene") is not None:
        name = str(obj["scene"]).lower()
        if name not in _SCENE_NAMES:
            raise ValueError(f"unknown scene class {obj['scene']!r}")
        scene_class = _SCENE_NAMES[name]
    dets = obj["detections"]
    if not isinstance(dets, list):
        raise ValueError("detections must be an array")
    parsed = tuple(_clamp_detection(d, image_w, image_h) for d in dets)
    return SceneSample(
        scene_id=str(obj["scene_id"]),
        image_w=image_w,
        image_h=image_h,
        detections=parsed,
        scene_class=scene_class,
    )


def load_scenes(path) -> list[SceneSample]:
    """Load a JSONL scene file; one SceneSample per line, order preserved.

    Boxes are clamped to the image bounds.  Raises MalformedRecord with the
    offending line number on any schema violation and EmptyFile if the file
    holds zero records.
    """
    scenes = []
    with open(path, "r", encoding="utf-8") as f:
        for line_no, line in enumerate(f, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
                scenes.append(_parse_record(obj))
            except (ValueError, KeyError, TypeError) as exc:
                raise MalformedRecord(line_no, str(exc)) from exc
    if not scenes:
        raise EmptyFile(f"{path}: no scene records")
    return scenes


def scene_to_record(scene: SceneSample) -> dict:
    record = {
        "scene_id": scene.scene_id,
        "image_w": scene.image_w,
        "image_h": scene.image_h,
        "detections": [
            {"label": d.label_id, "x": d.x, "y": d.y, "w": d.w, "h": d.h}
            for d in scene.detections
        ],
    }
    if scene.scene_class is not None:
        record["scene"] = "indoor" if scene.scene_class == SceneClass.INDOOR else "outdoor"
    return record


def save_scenes(scenes: Sequence[SceneSample], path) -> None:
    """Write scenes as JSONL; load_scenes(save_scenes(x)) round-trips exactly."""
    with open(path, "w", encoding="utf-8") as f:
        for scene in scenes:
            f.write(json.dumps(scene_to_record(scene)) + "\n")


@dataclass(frozen=True)
class SyntheticConfig:
    """Knobs for the synthetic scene generator.

    Class separability comes from two mechanisms: each class draws object
    labels from its own (partially overlapping) pool, and the spread of
    same-label object sizes is larger for outdoor scenes — wide-open scenes
    put identical objects at very different depths, so their on-image sizes
    fluctuate much more than indoors.
    """

    n_scenes: int
    vocab_size: int = 80
    indoor_labels: tuple[int, ...] = tuple(range(0, 16))
    outdoor_labels: tuple[int, ...] = tuple(range(10, 26))
    size_variance_indoor: float = 0.08
    size_variance_outdoor: float = 0.45
    objects_per_scene: tuple[int, int] = (3, 8)
    image_w: int = 640
    image_h: int = 480
    seed: int = 0

    def validate(self) -> None:
        if self.n_scenes <= 0:
            raise InvalidConfig(f"n_scenes must be positive, got {self.n_scenes}")
        if self.vocab_size <= 0:
            raise InvalidConfig(f"vocab_size must be positive, got {self.vocab_size}")
        if not self.indoor_labels or not self.outdoor_labels:
            raise InvalidConfig("label pools must be nonempty")
        for pool in (self.indoor_labels, self.outdoor_labels):
            if min(pool) < 0 or max(pool) >= self.vocab_size:
                raise InvalidConfig("label pools must lie inside the vocabulary")
        if not self.size_variance_outdoor > self.size_variance_indoor:
            raise InvalidConfig(
                "size_variance_outdoor must exceed size_variance_indoor "
                f"({self.size_variance_outdoor} vs {self.size_variance_indoor})"
            )
        lo, hi = self.objects_per_scene
        if lo < 1 or hi < lo:
            raise InvalidConfig(f"bad objects_per_scene range {self.objects_per_scene}")


def generate_synthetic(cfg: SyntheticConfig) -> list[SceneSample]:
    """Generate a balanced, deterministic list of synthetic scenes.

    Exactly cfg.n_scenes samples; class counts differ by at most one; the
    output is a pure function of cfg (same seed, same bytes).
    """
    cfg.validate()
    rng = np.random.default_rng(cfg.seed)

    # Fixed per-label base size so that "same label, similar size" is a real
    # regularity the per-class variance then perturbs.
    base_diag = rng.uniform(0.08, 0.30, size=cfg.vocab_size)

    n_indoor = (cfg.n_scenes + 1) // 2
    classes = np.array(
        [SceneClass.INDOOR] * n_indoor + [SceneClass.OUTDOOR] * (cfg.n_scenes - n_indoor)
    )
    rng.shuffle(classes)

    image_diag = math.hypot(cfg.image_w, cfg.image_h)
    lo, hi = cfg.objects_per_scene
    scenes = []
    for i, scene_class in enumerate(classes):
        if scene_class == SceneClass.INDOOR:
            pool, sigma = cfg.indoor_labels, cfg.size_variance_indoor
        else:
            pool, sigma = cfg.outdoor_labels, cfg.size_variance_outdoor
        n_obj = int(rng.integers(lo, hi + 1))
        dets = []
        for _ in range(n_obj):
            label = int(pool[rng.integers(0, len(pool))])
            diag = base_diag[label] * math.exp(sigma * rng.standard_normal())
            diag = min(max(diag, 0.02), 0.90) * image_diag
            aspect = math.exp(rng.uniform(-0.7, 0.7))
            w = min(diag * aspect / math.hypot(1.0, aspect), cfg.image_w * 0.95)
            h = min(diag / math.hypot(1.0, aspect), cfg.image_h * 0.95)
            x = rng.uniform(0.0, cfg.image_w - w)
            y = rng.uniform(0.0, cfg.image_h - h)
            dets.append(Detection(label_id=label, x=x, y=y, w=w, h=h))
        scenes.append(
            SceneSample(
                scene_id=f"synth-{cfg.seed}-{i:06d}",
                image_w=float(cfg.image_w),
                image_h=float(cfg.image_h),
                detections=tuple(dets),
                scene_class=SceneClass(int(scene_class)),
            )
        )
    return scenes


def split_dataset(
    scenes: Sequence[SceneSample],
    ratios: tuple[float, float, float] = (0.8, 0.1, 0.1),
    seed: int = 0,
) -> tuple[list[SceneSample], list[SceneSample], list[SceneSample]]:
    """Shuffle deterministically and split into train/val/test.

    Val and test sizes are floored; the remainder goes to train, so tiny
    inputs degrade toward train-only.
    """
    r_train, r_val, r_test = ratios
    if min(ratios) <= 0:
        raise BadRatios(f"ratios must be positive, got {ratios}")
    if abs(r_train + r_val + r_test - 1.0) > 1e-9:
        raise BadRatios(f"ratios must sum to 1, got {ratios}")
    n = len(scenes)
    n_val = int(math.floor(r_val * n))
    n_test = int(math.floor(r_test * n))
    n_train = n - n_val - n_test
    order = np.random.default_rng(seed).permutation(n)
    shuffled = [scenes[i] for i in order]
    return (
        shuffled[:n_train],
        shuffled[n_train : n_train + n_val],
        shuffled[n_train + n_val :],
    )
