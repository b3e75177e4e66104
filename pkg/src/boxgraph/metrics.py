"""Detection counting and summary metrics.

A predicted box matches a ground-truth box when the prediction's center lies
inside it. Counting is per ground-truth object: a ground-truth box with at
least one matching prediction is one true positive, duplicates add nothing,
and predictions whose center lies in no ground-truth box are false
positives.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence

from .geometry import BoundingBox, center_inside


@dataclass(frozen=True)
class DetectionMetrics:
    """Counts plus precision, recall, F1, and F2.

    Ratios with a zero denominator are reported as 0.0 and listed in
    `undefined` so degenerate inputs are visible rather than silent.
    """

    tp: int
    fp: int
    fn: int
    precision: float
    recall: float
    f1: float
    f2: float
    undefined: tuple[str, ...] = ()

    @classmethod
    def from_counts(cls, tp: int, fp: int, fn: int) -> "DetectionMetrics":
        if min(tp, fp, fn) < 0:
            raise ValueError("counts must be non-negative")
        undefined = []
        if tp + fp > 0:
            precision = tp / (tp + fp)
        else:
            precision = 0.0
            undefined.append("precision")
        if tp + fn > 0:
            recall = tp / (tp + fn)
        else:
            recall = 0.0
            undefined.append("recall")
        if precision + recall > 0.0:
            f1 = 2.0 * precision * recall / (precision + recall)
            f2 = 5.0 * precision * recall / (4.0 * precision + recall)
        else:
            f1 = 0.0
            f2 = 0.0
            undefined.extend(["f1", "f2"])
        return cls(
            tp=tp,
            fp=fp,
            fn=fn,
            precision=precision,
            recall=recall,
            f1=f1,
            f2=f2,
            undefined=tuple(undefined),
        )

    def to_dict(self) -> dict:
        out = {
            "tp": self.tp,
            "fp": self.fp,
            "fn": self.fn,
            "precision": self.precision,
            "recall": self.recall,
            "f1": self.f1,
            "f2": self.f2,
        }
        if self.undefined:
            out["undefined"] = list(self.undefined)
        return out


def match_frame(
    predictions: Sequence[BoundingBox], ground_truth: Sequence[BoundingBox]
) -> tuple[int, int, int]:
    """Count (tp, fp, fn) for one frame by the center-in-box rule."""
    covered = [False] * len(ground_truth)
    fp = 0
    for pred in predictions:
        hit = False
        for gi, gt in enumerate(ground_truth):
            if center_inside(pred, gt):
                covered[gi] = True
                hit = True
        if not hit:
            fp += 1
    tp = sum(covered)
    fn = len(ground_truth) - tp
    return tp, fp, fn


def aggregate_counts(counts: Iterable[tuple[int, int, int]]) -> DetectionMetrics:
    """Sum per-frame (tp, fp, fn) triples into one metrics summary."""
    tp = fp = fn = 0
    for t, f, n in counts:
        tp += t
        fp += f
        fn += n
    return DetectionMetrics.from_counts(tp, fp, fn)


def evaluate_polyp_boxes(
    predictions: Mapping[str, Sequence[BoundingBox]],
    ground_truth: Mapping[str, Sequence[BoundingBox]],
) -> DetectionMetrics:
    """Match per frame over the union of frame ids and aggregate."""
    frames = set(predictions) | set(ground_truth)
    counts = [
        match_frame(predictions.get(f, ()), ground_truth.get(f, ()))
        for f in sorted(frames)
    ]
    return aggregate_counts(counts)
