"""Axis-aligned bounding-box arithmetic.

Boxes are stored as (x_min, y_min, width, height) in continuous pixel
coordinates, origin at the top-left corner. All containment decisions use
closed intervals, so boundary points count as inside.
"""

from __future__ import annotations

import math
from dataclasses import dataclass


@dataclass(frozen=True)
class BoundingBox:
    """A rectangle with strictly positive extent.

    Attributes:
        x_min, y_min: top-left corner in pixels.
        width, height: extents in pixels, both > 0.
    """

    x_min: float
    y_min: float
    width: float
    height: float

    def __post_init__(self):
        for name in ("x_min", "y_min", "width", "height"):
            v = getattr(self, name)
            if not math.isfinite(v):
                raise ValueError(f"box field {name} must be finite, got {v!r}")
        if self.width <= 0 or self.height <= 0:
            raise ValueError(
                f"box extent must be positive, got width={self.width} height={self.height}"
            )

    @classmethod
    def from_corners(cls, x_min: float, y_min: float, x_max: float, y_max: float) -> BoundingBox:
        return cls(x_min, y_min, x_max - x_min, y_max - y_min)

    @property
    def x_max(self) -> float:
        return self.x_min + self.width

    @property
    def y_max(self) -> float:
        return self.y_min + self.height

    @property
    def center(self) -> tuple[float, float]:
        return (self.x_min + self.width / 2.0, self.y_min + self.height / 2.0)

    @property
    def area(self) -> float:
        return self.width * self.height

    def clipped(self, frame_width: float, frame_height: float) -> BoundingBox:
        """Clip to [0, frame_width] x [0, frame_height].

        Raises ValueError when the box does not intersect the frame.
        """
        x0 = max(0.0, self.x_min)
        y0 = max(0.0, self.y_min)
        x1 = min(float(frame_width), self.x_max)
        y1 = min(float(frame_height), self.y_max)
        if x1 <= x0 or y1 <= y0:
            raise ValueError(
                f"box {self} lies outside the {frame_width}x{frame_height} frame"
            )
        if (x0, y0, x1, y1) == (self.x_min, self.y_min, self.x_max, self.y_max):
            return self
        return BoundingBox(x0, y0, x1 - x0, y1 - y0)


def iou(a: BoundingBox, b: BoundingBox) -> float:
    """Intersection over union of two boxes; 0 when disjoint, 1 when identical.

    All areas derive from the corner coordinates so the ratio stays within
    [0, 1] under floating-point rounding.
    """
    ix = min(a.x_max, b.x_max) - max(a.x_min, b.x_min)
    iy = min(a.y_max, b.y_max) - max(a.y_min, b.y_min)
    if ix <= 0 or iy <= 0:
        return 0.0
    inter = ix * iy
    area_a = (a.x_max - a.x_min) * (a.y_max - a.y_min)
    area_b = (b.x_max - b.x_min) * (b.y_max - b.y_min)
    union = area_a + area_b - inter
    return inter / union


def contains(outer: BoundingBox, inner: BoundingBox) -> bool:
    """True iff every point of inner lies within outer (closed intervals)."""
    return (
        inner.x_min >= outer.x_min
        and inner.y_min >= outer.y_min
        and inner.x_max <= outer.x_max
        and inner.y_max <= outer.y_max
    )


def center_inside(pred: BoundingBox, gt: BoundingBox) -> bool:
    """True iff the center point of pred lies within gt (closed intervals)."""
    cx, cy = pred.center
    return gt.x_min <= cx <= gt.x_max and gt.y_min <= cy <= gt.y_max
