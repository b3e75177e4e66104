"""Graph-based post-processing for endoscopic object detections.

Builds a graph over polyp and artifact bounding boxes, trains an inductive
graph neural network on appearance features, and re-classifies detections on
unseen data to suppress false positives.
"""

__version__ = "0.1.0"

from .geometry import BoundingBox, center_inside, contains, iou
from .datasets import (
    ARTIFACT_LABELS,
    ARTIFACT_SETS,
    ClassVocabulary,
    Dataset,
    DatasetError,
    Detection,
    FrameRecord,
    POLYP,
    filter_by_score,
    load_dataset,
    load_detections,
    load_frames,
    select_artifact_set,
)

__all__ = [
    "ARTIFACT_LABELS",
    "ARTIFACT_SETS",
    "BoundingBox",
    "ClassVocabulary",
    "Dataset",
    "DatasetError",
    "Detection",
    "FrameRecord",
    "POLYP",
    "center_inside",
    "contains",
    "filter_by_score",
    "iou",
    "load_dataset",
    "load_detections",
    "load_frames",
    "select_artifact_set",
    "__version__",
]
