"""Axis-aligned bounding-box geometry.

Boxes are `[x, y, w, h]` in pixels: (x, y) is the top-left corner, w and h
the width and height. All values are doubles; coordinates are continuous
(no integer snapping). A zero-area box is legal and denotes "no prediction".

Every function here is pure and safe to call concurrently.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .errors import DegenerateBoxError, GeometryError

__all__ = [
    "BoundingBox",
    "iou",
    "giou",
    "complete_iou",
    "center_error",
    "normalized_center_error",
]


@dataclass(frozen=True, slots=True)
class BoundingBox:
    """Axis-aligned box with non-negative size and finite coordinates."""

    x: float
    y: float
    w: float
    h: float

    def __post_init__(self) -> None:
        for name in ("x", "y", "w", "h"):
            v = getattr(self, name)
            if not isinstance(v, (int, float)) or not math.isfinite(v):
                raise GeometryError(f"box field {name!r} is not finite: {v!r}")
            object.__setattr__(self, name, float(v))
        if self.w < 0 or self.h < 0:
            raise GeometryError(f"box has negative size: w={self.w}, h={self.h}")

    @property
    def cx(self) -> float:
        return self.x + self.w / 2.0

    @property
    def cy(self) -> float:
        return self.y + self.h / 2.0

    @property
    def area(self) -> float:
        return self.w * self.h

    @property
    def is_degenerate(self) -> bool:
        """True for zero-area boxes (w == 0 or h == 0)."""
        return self.w == 0.0 or self.h == 0.0

    def as_tuple(self) -> tuple[float, float, float, float]:
        return (self.x, self.y, self.w, self.h)


def _intersection_area(a: BoundingBox, b: BoundingBox) -> float:
    iw = min(a.x + a.w, b.x + b.w) - max(a.x, b.x)
    ih = min(a.y + a.h, b.y + b.h) - max(a.y, b.y)
    if iw <= 0.0 or ih <= 0.0:
        return 0.0
    return iw * ih


def iou(a: BoundingBox, b: BoundingBox) -> float:
    """Intersection over union in [0, 1].

    Returns 0 when the union has zero area (both boxes degenerate).
    """
    inter = _intersection_area(a, b)
    union = a.area + b.area - inter
    if union <= 0.0:
        return 0.0
    # Rounding can push the ratio a few ulps past 1 (e.g. identical boxes
    # whose corner sums are inexact); the unit interval is contractual.
    return min(inter / union, 1.0)


def giou(a: BoundingBox, b: BoundingBox) -> float:
    """Generalized IoU in [-1, 1]: IoU minus the hull-waste penalty.

    Equals plain IoU whenever the enclosing hull coincides with the union
    (e.g. one box contains the other). Requires at least one box with
    positive area.
    """
    if a.is_degenerate and b.is_degenerate:
        raise DegenerateBoxError("giou needs at least one non-degenerate box")
    inter = _intersection_area(a, b)
    union = a.area + b.area - inter
    hull_w = max(a.x + a.w, b.x + b.w) - min(a.x, b.x)
    hull_h = max(a.y + a.h, b.y + b.h) - min(a.y, b.y)
    hull = hull_w * hull_h
    value = inter / union - (hull - union) / hull
    return min(max(value, -1.0), 1.0)


def complete_iou(gt: BoundingBox, pr: BoundingBox) -> float:
    """Overlap score that also penalizes aspect-ratio disagreement.

    IoU multiplied by min/max consistency of the two aspect ratios (w/h).
    The consistency factor is 1 when both boxes are degenerate and 0 when
    exactly one is, so the result is always within [0, iou(gt, pr)].
    """
    base = iou(gt, pr)
    gt_deg = gt.is_degenerate
    pr_deg = pr.is_degenerate
    if gt_deg and pr_deg:
        return base
    if gt_deg or pr_deg:
        return 0.0
    ar_gt = gt.w / gt.h
    ar_pr = pr.w / pr.h
    consistency = min(ar_gt, ar_pr) / max(ar_gt, ar_pr)
    return base * consistency


def center_error(gt: BoundingBox, pr: BoundingBox) -> float:
    """Euclidean distance between box centers, in pixels."""
    return math.hypot(gt.cx - pr.cx, gt.cy - pr.cy)


def normalized_center_error(gt: BoundingBox, pr: BoundingBox) -> float:
    """Center distance with each axis normalized by the ground-truth size.

    Raises DegenerateBoxError when the ground truth has zero width or
    height; callers evaluating sequences skip such frames.
    """
    if gt.w <= 0.0 or gt.h <= 0.0:
        raise DegenerateBoxError("normalized center error needs gt with w > 0 and h > 0")
    return math.hypot((gt.cx - pr.cx) / gt.w, (gt.cy - pr.cy) / gt.h)
