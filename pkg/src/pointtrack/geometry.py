"""Geometric and tracking data model shared by every other module.

Boxes are stored center+size. Corner form is derived on demand.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence, Tuple, Union

Vec2 = Tuple[float, float]
Vec3 = Tuple[float, float, float]


def _finite(*values: float) -> bool:
    return all(math.isfinite(v) for v in values)


@dataclass(frozen=True, slots=True)
class BBox:
    """Axis-aligned box in pixels, center (cx, cy) and size (w, h)."""

    cx: float
    cy: float
    w: float
    h: float

    def __post_init__(self):
        if not _finite(self.cx, self.cy, self.w, self.h):
            raise ValueError(f"non-finite box {self!r}")
        if self.w <= 0 or self.h <= 0:
            raise ValueError(f"box size must be positive, got w={self.w}, h={self.h}")

    @classmethod
    def from_ltwh(cls, left: float, top: float, width: float, height: float) -> "BBox":
        return cls(left + width / 2.0, top + height / 2.0, width, height)

    @classmethod
    def from_corners(cls, x1: float, y1: float, x2: float, y2: float) -> "BBox":
        return cls((x1 + x2) / 2.0, (y1 + y2) / 2.0, x2 - x1, y2 - y1)

    @property
    def center(self) -> Vec2:
        return (self.cx, self.cy)

    @property
    def size(self) -> Vec2:
        return (self.w, self.h)

    @property
    def area(self) -> float:
        return self.w * self.h

    @property
    def geometric_mean(self) -> float:
        return math.sqrt(self.w * self.h)

    @property
    def corners(self) -> Tuple[float, float, float, float]:
        """(x1, y1, x2, y2)."""
        hw, hh = self.w / 2.0, self.h / 2.0
        return (self.cx - hw, self.cy - hh, self.cx + hw, self.cy + hh)

    @property
    def ltwh(self) -> Tuple[float, float, float, float]:
        return (self.cx - self.w / 2.0, self.cy - self.h / 2.0, self.w, self.h)

    def translated(self, dx: float, dy: float) -> "BBox":
        return BBox(self.cx + dx, self.cy + dy, self.w, self.h)


@dataclass(frozen=True, slots=True)
class AmodalBox:
    """Box given by an in-frame anchor and distances to its four borders.

    The anchor is the detected (in-frame) center; the full box may extend
    past the image and need not be centered on the anchor.
    """

    anchor_x: float
    anchor_y: float
    top: float
    left: float
    bottom: float
    right: float

    def __post_init__(self):
        vals = (self.anchor_x, self.anchor_y, self.top, self.left, self.bottom, self.right)
        if not _finite(*vals):
            raise ValueError(f"non-finite amodal box {self!r}")
        if min(self.top, self.left, self.bottom, self.right) < 0:
            raise ValueError("border distances must be >= 0")
        if self.left + self.right <= 0 or self.top + self.bottom <= 0:
            raise ValueError("amodal box has zero width or height")

    @property
    def anchor(self) -> Vec2:
        return (self.anchor_x, self.anchor_y)

    @property
    def borders(self) -> Tuple[float, float, float, float]:
        """(top, left, bottom, right)."""
        return (self.top, self.left, self.bottom, self.right)


def amodal_to_bbox(a: AmodalBox) -> BBox:
    x1 = a.anchor_x - a.left
    x2 = a.anchor_x + a.right
    y1 = a.anchor_y - a.top
    y2 = a.anchor_y + a.bottom
    return BBox.from_corners(x1, y1, x2, y2)


def bbox_to_amodal(box: BBox, anchor: Vec2) -> AmodalBox:
    """Border distances of ``box`` measured from ``anchor`` (inverse of amodal_to_bbox)."""
    x1, y1, x2, y2 = box.corners
    ax, ay = anchor
    return AmodalBox(ax, ay, ay - y1, ax - x1, y2 - ay, x2 - ax)


AnyBox = Union[BBox, AmodalBox]


@dataclass(frozen=True, slots=True)
class Detection:
    """One point-centered observation.

    ``offset`` is the displacement from the object's previous-frame center to
    its current center, so ``center - offset`` back-projects the detection
    into the previous frame.
    """

    box: AnyBox
    confidence: float
    offset: Vec2 = (0.0, 0.0)
    class_id: int = 0
    pos3d: Optional[Vec3] = None

    def __post_init__(self):
        if not (0.0 <= self.confidence <= 1.0):
            raise ValueError(f"confidence must be in [0, 1], got {self.confidence}")
        if len(self.offset) != 2 or not _finite(*self.offset):
            raise ValueError(f"offset must be a finite 2-vector, got {self.offset}")

    @property
    def bbox(self) -> BBox:
        if isinstance(self.box, AmodalBox):
            return amodal_to_bbox(self.box)
        return self.box

    @property
    def center(self) -> Vec2:
        # amodal detections are localized by their in-frame anchor
        if isinstance(self.box, AmodalBox):
            return self.box.anchor
        return self.box.center

    @property
    def geometric_mean(self) -> float:
        return self.bbox.geometric_mean


@dataclass(frozen=True, slots=True)
class Track:
    """Identity-carrying object state.

    ``inactive_age`` is 0 for active tracks and counts consecutive unmatched
    frames otherwise. ``motion_state`` is owned by the motion model (a
    KalmanState for the Kalman model, None for the others).
    """

    id: int
    box: BBox
    confidence: float
    inactive_age: int = 0
    motion_state: object = None
    last_frame: int = 0
    class_id: int = 0
    pos3d: Optional[Vec3] = None

    @property
    def active(self) -> bool:
        return self.inactive_age == 0

    @property
    def center(self) -> Vec2:
        return self.box.center

    @property
    def geometric_mean(self) -> float:
        return self.box.geometric_mean


def gating_radius(det: Union[Detection, BBox, Vec2], trk: Union[Track, BBox, Vec2]) -> float:
    """Association radius: the smaller geometric mean of the two box sizes.

    Accepts detections, tracks, boxes, or raw (w, h) pairs.
    """
    return min(_gm(det), _gm(trk))


def _gm(obj) -> float:
    if isinstance(obj, (Detection, Track, BBox)):
        return obj.geometric_mean
    w, h = obj
    if w <= 0 or h <= 0:
        raise ValueError("sizes must be positive")
    return math.sqrt(w * h)


def iou(a: BBox, b: BBox) -> float:
    ax1, ay1, ax2, ay2 = a.corners
    bx1, by1, bx2, by2 = b.corners
    iw = min(ax2, bx2) - max(ax1, bx1)
    ih = min(ay2, by2) - max(ay1, by1)
    if iw <= 0 or ih <= 0:
        return 0.0
    inter = iw * ih
    union = a.area + b.area - inter
    return min(1.0, inter / union)


@dataclass(frozen=True, slots=True)
class LabeledBox:
    """A box with an identity, as stored in ground-truth or result sequences."""

    id: int
    box: BBox
    confidence: float = 1.0
    class_id: int = 0
    pos3d: Optional[Vec3] = None


@dataclass(frozen=True, slots=True)
class Frame:
    index: int
    objects: Tuple[LabeledBox, ...] = ()

    def __post_init__(self):
        seen = set()
        for obj in self.objects:
            key = (obj.id, obj.class_id)
            if key in seen:
                raise ValueError(f"duplicate (id, class) {key} in frame {self.index}")
            seen.add(key)


@dataclass(frozen=True)
class SequenceData:
    """Labeled boxes over an ordered list of frames."""

    frames: Tuple[Frame, ...]
    image_size: Tuple[int, int] = (1920, 1080)
    framerate: float = 30.0
    meta: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "frames", tuple(self.frames))
        for prev, cur in zip(self.frames, self.frames[1:]):
            if cur.index <= prev.index:
                raise ValueError(
                    f"frame indices must be strictly increasing ({prev.index} -> {cur.index})"
                )

    def __len__(self) -> int:
        return len(self.frames)

    @property
    def frame_indices(self) -> Tuple[int, ...]:
        return tuple(f.index for f in self.frames)

    @property
    def ids(self) -> set:
        return {o.id for f in self.frames for o in f.objects}

    def num_boxes(self) -> int:
        return sum(len(f.objects) for f in self.frames)

    def frame(self, index: int) -> Frame:
        for f in self.frames:
            if f.index == index:
                return f
        raise KeyError(index)

    def with_frames(self, frames: Iterable[Frame], **kw) -> "SequenceData":
        args = dict(image_size=self.image_size, framerate=self.framerate, meta=dict(self.meta))
        args.update(kw)
        return SequenceData(tuple(frames), **args)


def sequence_from_lists(
    boxes_per_frame: Sequence[Sequence[LabeledBox]],
    first_index: int = 1,
    **kw,
) -> SequenceData:
    """Build a SequenceData with consecutive frame indices."""
    frames = tuple(
        Frame(first_index + i, tuple(objs)) for i, objs in enumerate(boxes_per_frame)
    )
    return SequenceData(frames, **kw)
