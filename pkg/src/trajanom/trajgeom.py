"""Bounding-box geometry and the prediction-error measures built on it.

Boxes are axis-aligned and stored in center format ``(x, y, w, h)``: pixel
coordinates of the box center plus width and height. All arithmetic is done
in double precision on the corner representation; nothing is snapped to an
integer pixel grid.

Three error measures compare a ground-truth box against a predicted one:

* ``iou_error``  -- 1 - IOU, in [0, 1]
* ``giou_error`` -- 1 - GIOU, in [0, 2)
* ``l2_error``   -- Euclidean norm of the (x, y, w, h) difference, >= 0

The ``MEASURES`` registry maps the wire-format identifiers ``m1``/``m2``/
``m3`` used in score files and on the command line to these functions.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .errors import GeometryError

__all__ = [
    "Box",
    "enclosing_box",
    "iou",
    "giou",
    "iou_error",
    "giou_error",
    "l2_error",
    "MEASURES",
]


@dataclass(frozen=True)
class Box:
    """Axis-aligned bounding box: center ``(x, y)``, width ``w``, height ``h``."""

    x: float
    y: float
    w: float
    h: float

    def __post_init__(self):
        # coerce numpy scalars etc. so repr-based serialization stays clean
        for name in ("x", "y", "w", "h"):
            value = getattr(self, name)
            if type(value) is not float:
                object.__setattr__(self, name, float(value))

    def corners(self) -> tuple[float, float, float, float]:
        """Return ``(x1, y1, x2, y2)`` top-left / bottom-right corners."""
        hw = self.w / 2.0
        hh = self.h / 2.0
        return (self.x - hw, self.y - hh, self.x + hw, self.y + hh)

    @classmethod
    def from_corners(cls, x1: float, y1: float, x2: float, y2: float) -> "Box":
        return cls((x1 + x2) / 2.0, (y1 + y2) / 2.0, x2 - x1, y2 - y1)

    def area(self) -> float:
        return self.w * self.h

    def as_tuple(self) -> tuple[float, float, float, float]:
        return (self.x, self.y, self.w, self.h)


def _require_finite(box: Box, name: str) -> None:
    for field, value in (("x", box.x), ("y", box.y), ("w", box.w), ("h", box.h)):
        if not math.isfinite(value):
            raise GeometryError(f"{name}.{field} is not finite: {value!r}")


def _require_positive_area(box: Box, name: str) -> None:
    _require_finite(box, name)
    if box.w <= 0 or box.h <= 0:
        raise GeometryError(
            f"{name} must have positive width and height, got w={box.w!r} h={box.h!r}"
        )


def _overlap_areas(a: Box, b: Box) -> tuple[float, float, float]:
    """Intersection, union, and smallest-enclosing-box areas for a box pair.

    All three areas are derived from the corner representation so that the
    ordering ``intersection <= union <= enclosing`` survives floating-point
    rounding (mixing ``w*h`` with corner differences can put IOU above 1 for
    far-from-origin boxes).
    """
    ax1, ay1, ax2, ay2 = a.corners()
    bx1, by1, bx2, by2 = b.corners()

    iw = min(ax2, bx2) - max(ax1, bx1)
    ih = min(ay2, by2) - max(ay1, by1)
    inter = max(0.0, iw) * max(0.0, ih)

    area_a = (ax2 - ax1) * (ay2 - ay1)
    area_b = (bx2 - bx1) * (by2 - by1)
    union = max(area_a + area_b - inter, inter)

    ew = max(ax2, bx2) - min(ax1, bx1)
    eh = max(ay2, by2) - min(ay1, by1)
    enclosing = max(ew * eh, union)
    if union <= 0.0:
        raise GeometryError(
            "box extent vanishes in double precision (width/height too small "
            "relative to the coordinates)"
        )
    return inter, union, enclosing


def enclosing_box(a: Box, b: Box) -> Box:
    """Smallest axis-aligned box containing both ``a`` and ``b``."""
    _require_positive_area(a, "a")
    _require_positive_area(b, "b")
    ax1, ay1, ax2, ay2 = a.corners()
    bx1, by1, bx2, by2 = b.corners()
    return Box.from_corners(min(ax1, bx1), min(ay1, by1), max(ax2, bx2), max(ay2, by2))


def iou(a: Box, b: Box) -> float:
    """Intersection over union of two boxes, in [0, 1].

    Boxes that only share an edge have zero intersection area and therefore
    IOU 0. Raises :class:`GeometryError` for non-finite or non-positive
    dimensions.
    """
    _require_positive_area(a, "a")
    _require_positive_area(b, "b")
    inter, union, _ = _overlap_areas(a, b)
    return inter / union


def giou(a: Box, b: Box) -> float:
    """Generalized IOU: IOU minus the enclosing-box penalty, in (-1, 1].

    The penalty is ``(area(C) - area(a | b)) / area(C)`` where ``C`` is the
    smallest axis-aligned box containing both inputs. GIOU equals IOU when
    the enclosing box adds no area beyond the union footprint and drops
    below it (possibly past zero) as the boxes separate.
    """
    _require_positive_area(a, "a")
    _require_positive_area(b, "b")
    inter, union, enclosing = _overlap_areas(a, b)
    return inter / union - (enclosing - union) / enclosing


def iou_error(gt: Box, pred: Box) -> float:
    """``1 - IOU`` between ground truth and prediction, in [0, 1]."""
    return 1.0 - iou(gt, pred)


def giou_error(gt: Box, pred: Box) -> float:
    """``1 - GIOU`` between ground truth and prediction, in [0, 2)."""
    return 1.0 - giou(gt, pred)


def l2_error(gt: Box, pred: Box) -> float:
    """Euclidean norm of the center-format 4-vector difference, >= 0.

    Operates directly on ``(x, y, w, h)``; unlike the IOU-based measures it
    only requires finite fields, not positive areas.
    """
    _require_finite(gt, "gt")
    _require_finite(pred, "pred")
    return math.hypot(gt.x - pred.x, gt.y - pred.y, gt.w - pred.w, gt.h - pred.h)


# Wire-format measure identifiers (score files, CLI flags).
MEASURES = {
    "m1": iou_error,
    "m2": giou_error,
    "m3": l2_error,
}
