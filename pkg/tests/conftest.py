"""Shared fixtures and builders for the test suite."""

from __future__ import annotations

import numpy as np
import pytest

from boxgraph.datasets import (
    Dataset,
    Detection,
    FrameRecord,
    SOURCE_DET,
    SOURCE_GT,
    save_detections,
)
from boxgraph.geometry import BoundingBox
from boxgraph.synthetic import (
    DetectorNoiseConfig,
    SceneConfig,
    generate_dataset,
    simulate_detector,
)


def box(x: float, y: float, w: float, h: float) -> BoundingBox:
    return BoundingBox(float(x), float(y), float(w), float(h))


def frame(
    frame_id: str,
    video_id: str = "v0",
    width: int = 200,
    height: int = 200,
) -> FrameRecord:
    return FrameRecord(
        frame_id=frame_id,
        video_id=video_id,
        image_path=f"images/{frame_id}.png",
        width=width,
        height=height,
    )


def det(
    bbox: BoundingBox,
    label: str = "polyp",
    score: float = 0.9,
    source: str = SOURCE_DET,
) -> Detection:
    if source == SOURCE_GT:
        score = 1.0
    return Detection(bbox=bbox, class_label=label, score=score, source=source)


def dataset(frames: list[FrameRecord], per_frame: dict[str, list[Detection]]) -> Dataset:
    return Dataset(frames, per_frame)


def random_box(rng: np.random.Generator, width: int = 200, height: int = 200) -> BoundingBox:
    w = float(rng.uniform(5.0, width / 2))
    h = float(rng.uniform(5.0, height / 2))
    x = float(rng.uniform(0.0, width - w))
    y = float(rng.uniform(0.0, height - h))
    return BoundingBox(x, y, w, h)


@pytest.fixture(scope="session")
def rendered_small(tmp_path_factory):
    """A small rendered dataset with simulated detections, shared read-only."""
    root = tmp_path_factory.mktemp("rendered_small")
    scene = SceneConfig(
        image_size=96,
        video_count=2,
        frames_per_video=4,
        object_size=(14, 30),
        rng_seed=42,
    )
    data, frames_path, gt_path = generate_dataset(scene, root)
    noise = DetectorNoiseConfig(
        localization_jitter=0.04,
        miss_rate=0.1,
        spurious_per_frame=0.5,
        spurious_classes=("polyp", "blur"),
        matched_score_range=(0.5, 0.95),
        spurious_score_range=(0.3, 0.7),
        rng_seed=9,
    )
    detected = simulate_detector(data, noise)
    detections_path = root / "detections.jsonl"
    save_detections(detections_path, detected)
    return {
        "root": root,
        "gt": data,
        "detections": detected,
        "frames_path": frames_path,
        "gt_path": gt_path,
        "detections_path": detections_path,
    }
