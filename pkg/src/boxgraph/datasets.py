"""Reading, writing and filtering of frames, detections and class vocabularies.

File formats are line-delimited JSON:

frames file, one object per frame:
    {"frame_id": str, "video_id": str, "image_path": str, "width": int, "height": int}

detections file, one object per detection:
    {"frame_id": str, "class": str, "score": float,
     "x": float, "y": float, "w": float, "h": float, "source": "gt"|"det"}

Coordinates are pixels with origin at the top-left corner. Boxes extending
beyond the frame are clipped with a warning; boxes entirely outside the frame
are a data error.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field, replace
from pathlib import Path

from .geometry import BoundingBox

log = logging.getLogger("boxgraph.datasets")

POLYP = "polyp"

# The seven artifact classes; "misc" is the filename-safe spelling of "misc.".
ARTIFACT_LABELS = (
    "saturation",
    "misc",
    "blur",
    "contrast",
    "bubbles",
    "instrument",
    "specularity",
)

ALL_LABELS = (POLYP,) + ARTIFACT_LABELS

SOURCE_GT = "gt"
SOURCE_DET = "det"


class DatasetError(ValueError):
    """Raised for malformed or inconsistent dataset files."""


@dataclass(frozen=True)
class FrameRecord:
    frame_id: str
    video_id: str
    image_path: str
    width: int
    height: int

    def __post_init__(self):
        if self.width <= 0 or self.height <= 0:
            raise DatasetError(
                f"frame {self.frame_id!r} has non-positive size {self.width}x{self.height}"
            )


@dataclass(frozen=True)
class Detection:
    bbox: BoundingBox
    class_label: str
    score: float
    source: str  # SOURCE_GT or SOURCE_DET

    def __post_init__(self):
        if self.source not in (SOURCE_GT, SOURCE_DET):
            raise DatasetError(f"unknown detection source {self.source!r}")
        if not 0.0 <= self.score <= 1.0:
            raise DatasetError(f"score {self.score} outside [0, 1]")
        if self.source == SOURCE_GT and self.score != 1.0:
            raise DatasetError(f"ground-truth detection must carry score 1.0, got {self.score}")

    @property
    def is_polyp(self) -> bool:
        return self.class_label == POLYP


@dataclass(frozen=True)
class ClassVocabulary:
    """Ordered class labels; 'polyp' always present and listed first."""

    labels: tuple[str, ...]

    def __post_init__(self):
        if len(set(self.labels)) != len(self.labels):
            raise DatasetError("vocabulary labels must be unique")
        if POLYP not in self.labels:
            raise DatasetError("vocabulary must contain 'polyp'")
        for label in self.labels:
            if label != POLYP and label not in ARTIFACT_LABELS:
                raise DatasetError(f"unknown artifact label {label!r}")

    def index(self, label: str) -> int:
        try:
            return self.labels.index(label)
        except ValueError:
            raise DatasetError(f"class {label!r} not in vocabulary {list(self.labels)}") from None

    def is_artifact(self, label: str) -> bool:
        return label != POLYP and label in self.labels

    @property
    def artifact_labels(self) -> tuple[str, ...]:
        return tuple(l for l in self.labels if l != POLYP)

    @property
    def polyp_index(self) -> int:
        return self.labels.index(POLYP)

    def __len__(self) -> int:
        return len(self.labels)

    def __contains__(self, label: str) -> bool:
        return label in self.labels


ARTIFACT_SETS = {
    "art1": (POLYP, "saturation", "misc", "blur", "contrast", "bubbles", "instrument"),
    "art2": (POLYP, "misc", "blur", "bubbles"),
    "art3": (POLYP, "saturation", "blur", "contrast", "instrument"),
}


def select_artifact_set(vocabulary_name: str) -> ClassVocabulary:
    """Return one of the named class vocabularies (art1, art2, art3)."""
    try:
        labels = ARTIFACT_SETS[vocabulary_name]
    except KeyError:
        raise DatasetError(
            f"unknown vocabulary {vocabulary_name!r}; expected one of {sorted(ARTIFACT_SETS)}"
        ) from None
    return ClassVocabulary(labels)


FULL_VOCABULARY = ClassVocabulary(ALL_LABELS)


@dataclass
class Dataset:
    """Frames in file order plus per-frame detection lists."""

    frames: list[FrameRecord]
    detections: dict[str, list[Detection]] = field(default_factory=dict)

    def __post_init__(self):
        self._by_id = {f.frame_id: f for f in self.frames}
        if len(self._by_id) != len(self.frames):
            raise DatasetError("duplicate frame_id in frames list")
        for frame_id in self.detections:
            if frame_id not in self._by_id:
                raise DatasetError(f"detections reference unknown frame_id {frame_id!r}")

    def frame(self, frame_id: str) -> FrameRecord:
        return self._by_id[frame_id]

    def detections_for(self, frame_id: str) -> list[Detection]:
        return self.detections.get(frame_id, [])

    @property
    def num_detections(self) -> int:
        return sum(len(v) for v in self.detections.values())

    def with_detections(self, detections: dict[str, list[Detection]]) -> Dataset:
        return Dataset(self.frames, detections)


def _parse_line(path: Path, lineno: int, line: str) -> dict:
    try:
        obj = json.loads(line)
    except json.JSONDecodeError as exc:
        raise DatasetError(f"{path}:{lineno}: invalid JSON ({exc.msg})") from None
    if not isinstance(obj, dict):
        raise DatasetError(f"{path}:{lineno}: expected a JSON object")
    return obj


def load_frames(frames_file: str | Path) -> list[FrameRecord]:
    path = Path(frames_file)
    frames = []
    seen = set()
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            obj = _parse_line(path, lineno, line)
            try:
                frame = FrameRecord(
                    frame_id=str(obj["frame_id"]),
                    video_id=str(obj["video_id"]),
                    image_path=str(obj["image_path"]),
                    width=int(obj["width"]),
                    height=int(obj["height"]),
                )
            except KeyError as exc:
                raise DatasetError(f"{path}:{lineno}: missing frame field {exc}") from None
            if frame.frame_id in seen:
                raise DatasetError(f"{path}:{lineno}: duplicate frame_id {frame.frame_id!r}")
            seen.add(frame.frame_id)
            frames.append(frame)
    return frames


def load_detections(
    detections_file: str | Path,
    frames: list[FrameRecord],
    vocabulary: ClassVocabulary = FULL_VOCABULARY,
) -> dict[str, list[Detection]]:
    """Parse a detections file, validating against the given frames.

    Boxes are clipped to frame bounds; a clipped box is logged as a warning.
    """
    path = Path(detections_file)
    by_id = {f.frame_id: f for f in frames}
    out: dict[str, list[Detection]] = {f.frame_id: [] for f in frames}
    clipped = 0
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            obj = _parse_line(path, lineno, line)
            try:
                frame_id = str(obj["frame_id"])
                label = str(obj["class"])
                score = float(obj["score"])
                box = BoundingBox(float(obj["x"]), float(obj["y"]), float(obj["w"]), float(obj["h"]))
                source = str(obj["source"])
            except KeyError as exc:
                raise DatasetError(f"{path}:{lineno}: missing detection field {exc}") from None
            except ValueError as exc:
                raise DatasetError(f"{path}:{lineno}: {exc}") from None
            frame = by_id.get(frame_id)
            if frame is None:
                raise DatasetError(f"{path}:{lineno}: unknown frame_id {frame_id!r}")
            if label not in vocabulary:
                raise DatasetError(f"{path}:{lineno}: unknown class_label {label!r}")
            if not 0.0 <= score <= 1.0:
                raise DatasetError(f"{path}:{lineno}: out-of-range score {score}")
            try:
                clipped_box = box.clipped(frame.width, frame.height)
            except ValueError as exc:
                raise DatasetError(f"{path}:{lineno}: {exc}") from None
            if clipped_box != box:
                clipped += 1
            try:
                det = Detection(clipped_box, label, score, source)
            except DatasetError as exc:
                raise DatasetError(f"{path}:{lineno}: {exc}") from None
            out[frame_id].append(det)
    if clipped:
        log.warning("%s: clipped %d box(es) to frame bounds", path, clipped)
    return out


def load_dataset(frames_file: str | Path, detections_file: str | Path,
                 vocabulary: ClassVocabulary = FULL_VOCABULARY) -> Dataset:
    frames = load_frames(frames_file)
    detections = load_detections(detections_file, frames, vocabulary)
    return Dataset(frames, detections)


def save_frames(frames_file: str | Path, frames: list[FrameRecord]) -> None:
    with open(frames_file, "w", encoding="utf-8") as fh:
        for f in frames:
            fh.write(json.dumps({
                "frame_id": f.frame_id,
                "video_id": f.video_id,
                "image_path": f.image_path,
                "width": f.width,
                "height": f.height,
            }) + "\n")


def detection_to_json(frame_id: str, det: Detection, extra: dict | None = None) -> str:
    obj = {
        "frame_id": frame_id,
        "class": det.class_label,
        "score": det.score,
        "x": det.bbox.x_min,
        "y": det.bbox.y_min,
        "w": det.bbox.width,
        "h": det.bbox.height,
        "source": det.source,
    }
    if extra:
        obj.update(extra)
    return json.dumps(obj)


def save_detections(detections_file: str | Path, dataset: Dataset) -> None:
    with open(detections_file, "w", encoding="utf-8") as fh:
        for frame in dataset.frames:
            for det in dataset.detections_for(frame.frame_id):
                fh.write(detection_to_json(frame.frame_id, det) + "\n")


def save_dataset(dataset: Dataset, frames_file: str | Path, detections_file: str | Path) -> None:
    save_frames(frames_file, dataset.frames)
    save_detections(detections_file, dataset)


def filter_by_score(
    detections: list[Detection],
    polyp_threshold: float = 0.25,
    artifact_threshold: float = 0.5,
) -> list[Detection]:
    """Keep polyps with score >= polyp_threshold and artifacts with
    score >= artifact_threshold; ground-truth detections always pass."""
    for name, value in (("polyp_threshold", polyp_threshold), ("artifact_threshold", artifact_threshold)):
        if not 0.0 <= value <= 1.0:
            raise ValueError(f"{name} must be in [0, 1], got {value}")
    kept = []
    for det in detections:
        if det.source == SOURCE_GT:
            kept.append(det)
        elif det.is_polyp:
            if det.score >= polyp_threshold:
                kept.append(det)
        elif det.score >= artifact_threshold:
            kept.append(det)
    return kept


def drop_classes(detections: list[Detection], excluded: set[str]) -> list[Detection]:
    """Remove detections whose class is in excluded; 'polyp' may not be excluded."""
    if POLYP in excluded:
        raise ValueError("cannot exclude the 'polyp' class")
    unknown = excluded - set(ARTIFACT_LABELS)
    if unknown:
        raise ValueError(f"cannot exclude unknown labels {sorted(unknown)}")
    return [d for d in detections if d.class_label not in excluded]


def restrict_to_vocabulary(detections: list[Detection], vocabulary: ClassVocabulary) -> list[Detection]:
    """Drop detections whose class lies outside the vocabulary."""
    excluded = set(ARTIFACT_LABELS) - set(vocabulary.labels)
    return drop_classes(detections, excluded)


def resolve_image_path(root: str | Path, frame: FrameRecord) -> Path:
    """Resolve a frame's image path relative to the dataset root."""
    p = Path(frame.image_path)
    return p if p.is_absolute() else Path(root) / p
