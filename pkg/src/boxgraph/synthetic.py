"""Synthetic scenes and a configurable detector simulator.

Generates endoscopy-like frames with class-specific textures (domes for
polyps, rings for bubbles, flat patches for low-contrast regions, bars for
instruments, and so on), plus ground-truth boxes. A detector simulator then
derives noisy detections: localization jitter, misses, class confusion, and
spurious boxes. Everything is deterministic given the config seeds; images
are rendered per frame from a seed derived from (seed, video, frame).

A configurable fraction of polyps is drawn with the same irregular-blob
texture used for the "misc" artifact class, making those objects ambiguous
on appearance alone.
"""

from __future__ import annotations

import dataclasses
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping

import numpy as np
from PIL import Image

from . import kernels
from .datasets import (
    ALL_LABELS,
    ARTIFACT_LABELS,
    Dataset,
    Detection,
    FrameRecord,
    POLYP,
    SOURCE_DET,
    SOURCE_GT,
    save_detections,
    save_frames,
)
from .geometry import BoundingBox, iou

logger = logging.getLogger(__name__)

_PLACEMENT_ATTEMPTS = 100


@dataclass(frozen=True)
class SceneConfig:
    """What to render: counts, sizes, classes, and texture knobs.

    polyps_per_frame and artifacts_per_frame are inclusive (lo, hi) ranges.
    polyp_ambiguity is the fraction of polyps drawn with the misc-blob
    texture instead of the dome texture.
    """

    image_size: int = 192
    video_count: int = 5
    frames_per_video: int = 40
    polyps_per_frame: tuple[int, int] = (1, 1)
    artifacts_per_frame: tuple[int, int] = (2, 3)
    artifact_classes: tuple[str, ...] = (
        "saturation",
        "misc",
        "blur",
        "contrast",
        "bubbles",
        "instrument",
    )
    object_size: tuple[int, int] = (22, 56)
    polyp_ambiguity: float = 0.3
    max_overlap_iou: float = 0.3
    rng_seed: int = 0

    def __post_init__(self) -> None:
        if self.image_size < 32:
            raise ValueError("image_size must be at least 32")
        if self.video_count < 1 or self.frames_per_video < 1:
            raise ValueError("video_count and frames_per_video must be positive")
        for name, (lo, hi) in (
            ("polyps_per_frame", self.polyps_per_frame),
            ("artifacts_per_frame", self.artifacts_per_frame),
        ):
            if lo < 0 or hi < lo:
                raise ValueError(f"{name} must be a (lo, hi) range with 0 <= lo <= hi")
        if not self.artifact_classes:
            raise ValueError("artifact_classes must not be empty")
        unknown = set(self.artifact_classes) - set(ARTIFACT_LABELS)
        if unknown:
            raise ValueError(f"unknown artifact classes: {sorted(unknown)}")
        lo, hi = self.object_size
        if lo < 8 or hi < lo:
            raise ValueError("object_size must be a (lo, hi) range with lo >= 8")
        if hi > self.image_size - 4:
            raise ValueError("object_size upper bound does not fit in the image")
        if not 0.0 <= self.polyp_ambiguity <= 1.0:
            raise ValueError("polyp_ambiguity must lie in [0, 1]")
        if not 0.0 <= self.max_overlap_iou < 1.0:
            raise ValueError("max_overlap_iou must lie in [0, 1)")
        if self.rng_seed < 0:
            raise ValueError("rng_seed must be non-negative")


@dataclass(frozen=True)
class DetectorNoiseConfig:
    """How to corrupt ground truth into detections.

    miss_rate is a global rate or a per-class mapping. class_confusion maps
    a true class to a distribution over emitted classes; absent rows mean
    the class is always emitted as itself. With everything at zero the
    simulator reproduces ground-truth boxes and labels, with scores drawn
    from matched_score_range and source "det".
    """

    localization_jitter: float = 0.0
    miss_rate: float | Mapping[str, float] = 0.0
    spurious_per_frame: float = 0.0
    spurious_classes: tuple[str, ...] = ALL_LABELS
    spurious_size: tuple[int, int] = (16, 56)
    class_confusion: Mapping[str, Mapping[str, float]] = field(default_factory=dict)
    matched_score_range: tuple[float, float] = (0.75, 1.0)
    spurious_score_range: tuple[float, float] = (0.05, 0.5)
    rng_seed: int = 0

    def __post_init__(self) -> None:
        if self.localization_jitter < 0.0:
            raise ValueError("localization_jitter must be non-negative")
        rates = (
            self.miss_rate.values()
            if isinstance(self.miss_rate, Mapping)
            else (self.miss_rate,)
        )
        if any(not 0.0 <= r <= 1.0 for r in rates):
            raise ValueError("miss rates must lie in [0, 1]")
        if self.spurious_per_frame < 0.0:
            raise ValueError("spurious_per_frame must be non-negative")
        unknown = set(self.spurious_classes) - set(ALL_LABELS)
        if unknown:
            raise ValueError(f"unknown spurious classes: {sorted(unknown)}")
        lo, hi = self.spurious_size
        if lo < 4 or hi < lo:
            raise ValueError("spurious_size must be a (lo, hi) range with lo >= 4")
        for true_label, row in self.class_confusion.items():
            if true_label not in ALL_LABELS:
                raise ValueError(f"unknown class in confusion rows: {true_label!r}")
            unknown = set(row) - set(ALL_LABELS)
            if unknown:
                raise ValueError(f"unknown classes in confusion row: {sorted(unknown)}")
            if any(p < 0.0 for p in row.values()):
                raise ValueError("confusion probabilities must be non-negative")
            total = sum(row.values())
            if abs(total - 1.0) > 1e-6:
                raise ValueError(
                    f"confusion row for {true_label!r} sums to {total}, expected 1"
                )
        for name, (lo_s, hi_s) in (
            ("matched_score_range", self.matched_score_range),
            ("spurious_score_range", self.spurious_score_range),
        ):
            if not 0.0 <= lo_s <= hi_s <= 1.0:
                raise ValueError(f"{name} must satisfy 0 <= lo <= hi <= 1")
        if self.rng_seed < 0:
            raise ValueError("rng_seed must be non-negative")

    def miss_rate_for(self, label: str) -> float:
        if isinstance(self.miss_rate, Mapping):
            return float(self.miss_rate.get(label, 0.0))
        return float(self.miss_rate)


def _config_from_dict(cls, data: Mapping) -> object:
    known = {f.name for f in dataclasses.fields(cls)}
    unknown = set(data) - known
    if unknown:
        raise ValueError(f"unknown {cls.__name__} keys: {sorted(unknown)}")
    kwargs = {}
    for f in dataclasses.fields(cls):
        if f.name not in data:
            continue
        value = data[f.name]
        if isinstance(value, list):
            value = tuple(value)
        kwargs[f.name] = value
    return cls(**kwargs)


def scene_config_from_dict(data: Mapping) -> SceneConfig:
    """Build a SceneConfig from parsed JSON; lists become tuples."""
    return _config_from_dict(SceneConfig, data)


def noise_config_from_dict(data: Mapping) -> DetectorNoiseConfig:
    """Build a DetectorNoiseConfig from parsed JSON; lists become tuples."""
    return _config_from_dict(DetectorNoiseConfig, data)


def _smoothstep(t: np.ndarray) -> np.ndarray:
    t = np.clip(t, 0.0, 1.0)
    return t * t * (3.0 - 2.0 * t)


def _background(rng: np.random.Generator, size: int) -> np.ndarray:
    coarse = 0.30 + 0.12 * rng.random((8, 8))
    canvas = np.asarray(
        kernels.resize_patch(np.ascontiguousarray(coarse), 0.0, 0.0, 8.0, 8.0, size)
    )
    canvas = canvas + 0.008 * rng.standard_normal((size, size))
    return np.clip(canvas, 0.0, 1.0)


def _window(canvas: np.ndarray, bbox: BoundingBox):
    """Integer pixel window of a box plus normalized [-1, 1] coordinates."""
    x0 = int(round(bbox.x_min))
    y0 = int(round(bbox.y_min))
    x1 = int(round(bbox.x_max))
    y1 = int(round(bbox.y_max))
    win = canvas[y0:y1, x0:x1]
    h, w = win.shape
    uu = (np.arange(w, dtype=np.float64) + 0.5) / w * 2.0 - 1.0
    vv = (np.arange(h, dtype=np.float64) + 0.5) / h * 2.0 - 1.0
    return win, uu[None, :], vv[:, None]


def _paint_polyp(win, uu, vv, rng) -> None:
    phase = rng.uniform(0.0, 2.0 * np.pi)
    lobes = int(rng.integers(3, 6))
    phi = np.arctan2(vv, uu)
    r = np.sqrt(uu * uu + vv * vv) * (1.0 + 0.06 * np.sin(lobes * phi + phase))
    amp = rng.uniform(0.26, 0.40)
    win += amp * np.clip(1.0 - r * r, 0.0, 1.0) ** 1.2
    ox, oy = rng.uniform(-0.25, 0.25, size=2)
    win += 0.16 * np.exp(-(((uu - ox) ** 2 + (vv - oy) ** 2) / 0.02))


def _paint_misc(win, uu, vv, rng) -> None:
    phase = rng.uniform(0.0, 2.0 * np.pi)
    lobes = int(rng.integers(3, 7))
    phi = np.arctan2(vv, uu)
    rmod = 1.0 + 0.22 * np.sin(lobes * phi + phase)
    r = np.sqrt(uu * uu + vv * vv) / np.maximum(rmod, 0.3)
    edge = _smoothstep((1.0 - r) / 0.2)
    delta = rng.uniform(0.10, 0.20) * (1.0 if rng.random() < 0.5 else -1.0)
    win += edge * delta
    win += 0.02 * rng.standard_normal(win.shape) * edge


def _paint_saturation(win, uu, vv, rng) -> None:
    r = np.sqrt(uu * uu + vv * vv)
    core = _smoothstep((1.0 - r) / 0.25)
    target = 0.97 - 0.05 * r * r
    np.maximum(win, win * (1.0 - core) + core * target, out=win)


def _paint_bubbles(win, uu, vv, rng) -> None:
    r = np.sqrt(uu * uu + vv * vv)
    win += 0.30 * np.exp(-(((r - 0.78) / 0.10) ** 2))
    win -= 0.06 * _smoothstep((0.60 - r) / 0.15)


def _paint_blur(win, uu, vv, rng) -> None:
    r = np.sqrt(uu * uu + vv * vv)
    mask = _smoothstep((1.0 - r) / 0.25)
    mean = float(win.mean())
    win[:] = win * (1.0 - mask) + mask * (0.55 * (mean - 0.02) + 0.45 * win)


def _paint_contrast(win, uu, vv, rng) -> None:
    r = np.sqrt(uu * uu + vv * vv)
    mask = _smoothstep((1.0 - r) / 0.25)
    target = float(win.mean()) + rng.uniform(-0.05, 0.05)
    win[:] = win * (1.0 - mask) + mask * target


def _paint_instrument(win, uu, vv, rng) -> None:
    theta = rng.uniform(0.0, np.pi)
    ur = uu * np.cos(theta) + vv * np.sin(theta)
    vr = -uu * np.sin(theta) + vv * np.cos(theta)
    along = _smoothstep((0.92 - np.abs(ur)) / 0.10)
    core = along * _smoothstep((0.30 - np.abs(vr)) / 0.08)
    win[:] = win * (1.0 - core) + core * 0.12
    band = along * _smoothstep((0.48 - np.abs(vr)) / 0.08) * _smoothstep((np.abs(vr) - 0.30) / 0.08)
    win += 0.35 * band


def _paint_specularity(win, uu, vv, rng) -> None:
    r2 = uu * uu + vv * vv
    np.maximum(win, 0.50 + 0.48 * np.exp(-4.0 * r2), out=win)


_PAINTERS = {
    POLYP: _paint_polyp,
    "misc": _paint_misc,
    "saturation": _paint_saturation,
    "bubbles": _paint_bubbles,
    "blur": _paint_blur,
    "contrast": _paint_contrast,
    "instrument": _paint_instrument,
    "specularity": _paint_specularity,
}


def _place_boxes(rng: np.random.Generator, cfg: SceneConfig, count: int) -> list[BoundingBox]:
    boxes: list[BoundingBox] = []
    lo, hi = cfg.object_size
    margin = 2
    for _ in range(count):
        placed = False
        for _ in range(_PLACEMENT_ATTEMPTS):
            w = int(rng.integers(lo, hi + 1))
            h = int(rng.integers(lo, hi + 1))
            x = int(rng.integers(margin, cfg.image_size - margin - w + 1))
            y = int(rng.integers(margin, cfg.image_size - margin - h + 1))
            cand = BoundingBox(float(x), float(y), float(w), float(h))
            if all(iou(cand, other) <= cfg.max_overlap_iou for other in boxes):
                boxes.append(cand)
                placed = True
                break
        if not placed:
            raise RuntimeError(
                f"could not place {count} boxes after {_PLACEMENT_ATTEMPTS} attempts; "
                "reduce counts or sizes"
            )
    return boxes


def render_frame(
    rng: np.random.Generator, cfg: SceneConfig
) -> tuple[np.ndarray, list[tuple[str, BoundingBox]]]:
    """Render one frame; returns an RGB uint8 image and (label, box) pairs.

    Polyps come first in the returned list, then artifacts.
    """
    canvas = _background(rng, cfg.image_size)
    n_polyps = int(rng.integers(cfg.polyps_per_frame[0], cfg.polyps_per_frame[1] + 1))
    n_artifacts = int(
        rng.integers(cfg.artifacts_per_frame[0], cfg.artifacts_per_frame[1] + 1)
    )
    labels = [POLYP] * n_polyps + [
        str(lbl) for lbl in rng.choice(cfg.artifact_classes, size=n_artifacts)
    ]
    boxes = _place_boxes(rng, cfg, len(labels))
    objects = []
    for label, bbox in zip(labels, boxes):
        win, uu, vv = _window(canvas, bbox)
        painter = _PAINTERS[label]
        if label == POLYP and rng.random() < cfg.polyp_ambiguity:
            painter = _paint_misc
        painter(win, uu, vv, rng)
        objects.append((label, bbox))
    np.clip(canvas, 0.0, 1.0, out=canvas)
    rgb = np.stack([canvas, canvas * 0.82, canvas * 0.72], axis=2)
    return np.round(rgb * 255.0).astype(np.uint8), objects


def generate_dataset(cfg: SceneConfig, out_dir: str | Path) -> tuple[Dataset, Path, Path]:
    """Render a dataset to disk: images/, frames.jsonl, gt.jsonl.

    Returns the in-memory dataset (ground-truth detections) and the two
    file paths. Rendering is deterministic: each frame draws from a
    generator seeded by (rng_seed, video index, frame index).
    """
    out = Path(out_dir)
    images = out / "images"
    images.mkdir(parents=True, exist_ok=True)
    frames: list[FrameRecord] = []
    detections: dict[str, list[Detection]] = {}
    for vi in range(cfg.video_count):
        for fi in range(cfg.frames_per_video):
            rng = np.random.default_rng([cfg.rng_seed, vi, fi])
            rgb, objects = render_frame(rng, cfg)
            frame_id = f"v{vi:02d}f{fi:04d}"
            rel_path = f"images/{frame_id}.png"
            Image.fromarray(rgb).save(images / f"{frame_id}.png")
            frames.append(
                FrameRecord(
                    frame_id=frame_id,
                    image_path=rel_path,
                    width=cfg.image_size,
                    height=cfg.image_size,
                    video_id=f"v{vi:02d}",
                )
            )
            detections[frame_id] = [
                Detection(bbox=bbox, class_label=label, score=1.0, source=SOURCE_GT)
                for label, bbox in objects
            ]
    dataset = Dataset(frames=frames, detections=detections)
    frames_path = out / "frames.jsonl"
    gt_path = out / "gt.jsonl"
    save_frames(frames_path, frames)
    save_detections(gt_path, dataset)
    logger.info(
        "generated %d frames (%d detections) under %s",
        len(frames),
        dataset.num_detections,
        out,
    )
    return dataset, frames_path, gt_path


def _confused_label(rng: np.random.Generator, label: str, noise: DetectorNoiseConfig) -> str:
    row = noise.class_confusion.get(label)
    if not row:
        return label
    labels = sorted(row)
    probs = np.array([row[lbl] for lbl in labels], dtype=np.float64)
    probs = probs / probs.sum()
    return labels[int(rng.choice(len(labels), p=probs))]


def simulate_detector(dataset: Dataset, noise: DetectorNoiseConfig) -> Dataset:
    """Derive detector-style detections from a ground-truth dataset.

    Per frame, each ground-truth object is dropped with its class miss
    rate, jittered in position and size, relabeled through the confusion
    matrix, and scored from matched_score_range; then Poisson-many spurious
    boxes with random classes and low scores are added. Detections keep
    frame order: surviving objects first, then spurious boxes.
    """
    out: dict[str, list[Detection]] = {}
    for index, frame in enumerate(dataset.frames):
        rng = np.random.default_rng([noise.rng_seed, 911, index])
        rows: list[Detection] = []
        for det in dataset.detections_for(frame.frame_id):
            if rng.random() < noise.miss_rate_for(det.class_label):
                continue
            bbox = det.bbox
            if noise.localization_jitter > 0.0:
                j = noise.localization_jitter
                cx, cy = bbox.center
                w = bbox.width * float(np.exp(rng.normal(0.0, j)))
                h = bbox.height * float(np.exp(rng.normal(0.0, j)))
                cx = cx + float(rng.normal(0.0, j * bbox.width))
                cy = cy + float(rng.normal(0.0, j * bbox.height))
                w = max(w, 4.0)
                h = max(h, 4.0)
                x = min(max(cx - w / 2.0, 0.0), frame.width - w)
                y = min(max(cy - h / 2.0, 0.0), frame.height - h)
                if x < 0.0 or y < 0.0:  # box wider than the frame
                    x, y = 0.0, 0.0
                    w, h = min(w, frame.width), min(h, frame.height)
                bbox = BoundingBox(x, y, w, h)
            label = _confused_label(rng, det.class_label, noise)
            score = float(rng.uniform(*noise.matched_score_range))
            rows.append(Detection(bbox=bbox, class_label=label, score=score, source=SOURCE_DET))
        for _ in range(int(rng.poisson(noise.spurious_per_frame))):
            lo, hi = noise.spurious_size
            w = float(rng.integers(lo, hi + 1))
            h = float(rng.integers(lo, hi + 1))
            w = min(w, frame.width - 2.0)
            h = min(h, frame.height - 2.0)
            x = float(rng.integers(0, int(frame.width - w) + 1))
            y = float(rng.integers(0, int(frame.height - h) + 1))
            label = str(rng.choice(noise.spurious_classes))
            score = float(rng.uniform(*noise.spurious_score_range))
            rows.append(
                Detection(
                    bbox=BoundingBox(x, y, w, h),
                    class_label=label,
                    score=score,
                    source=SOURCE_DET,
                )
            )
        out[frame.frame_id] = rows
    return dataset.with_detections(out)
