"""Boxes, displacements, detections and tracklets shared by every stage."""
import math
from dataclasses import dataclass, field
from enum import Enum

import numpy as np


@dataclass(frozen=True)
class Displacement:
    dx: float
    dy: float

    def __post_init__(self):
        if not (math.isfinite(self.dx) and math.isfinite(self.dy)):
            raise ValueError(f"Displacement must be finite, got ({self.dx}, {self.dy})")

    @classmethod
    def zero(cls):
        return cls(0.0, 0.0)

    @classmethod
    def from_array(cls, values):
        return cls(float(values[0]), float(values[1]))

    def as_array(self):
        return np.array([self.dx, self.dy], dtype=float)


@dataclass(frozen=True)
class BoundingBox:
    """Axis-aligned box in continuous pixel coordinates (left, top, width, height)."""
    x: float
    y: float
    w: float
    h: float

    def __post_init__(self):
        if not (self.w > 0 and self.h > 0):
            raise ValueError(f"BoundingBox needs positive size, got w={self.w} h={self.h}")

    def area(self):
        return self.w * self.h

    def center(self):
        return (self.x + self.w / 2.0, self.y + self.h / 2.0)

    def diagonal(self):
        return math.hypot(self.w, self.h)

    def shifted(self, d: Displacement):
        return BoundingBox(self.x + d.dx, self.y + d.dy, self.w, self.h)

    def rounded(self, places=2):
        return BoundingBox(round(self.x, places), round(self.y, places),
                           round(self.w, places), round(self.h, places))

    def as_tuple(self):
        return (self.x, self.y, self.w, self.h)


@dataclass(frozen=True)
class Detection:
    frame: int
    box: BoundingBox
    score: float = 1.0

    def __post_init__(self):
        if self.frame < 1:
            raise ValueError(f"Detection frame must be >= 1, got {self.frame}")


class Provenance(str, Enum):
    DETECTION = "detection"
    AVERAGED = "averaged"
    VIRTUAL = "virtual"


class Status(str, Enum):
    CANDIDATE = "candidate"
    ACTIVE = "active"
    OCCLUDED = "occluded"
    TERMINATED = "terminated"


@dataclass(frozen=True)
class HistoryEntry:
    frame: int
    box: BoundingBox
    provenance: Provenance


@dataclass
class Tracklet:
    """Identity plus its per-frame boxes. Candidates carry negative provisional ids."""
    id: int
    history: list = field(default_factory=list)
    status: Status = Status.CANDIDATE
    last_evidence_mean: Displacement = None
    first_output_frame: int = None

    def append(self, frame, box, provenance):
        if self.history and frame != self.history[-1].frame + 1:
            raise ValueError(f"Tracklet {self.id}: frame {frame} does not follow {self.history[-1].frame}")
        self.history.append(HistoryEntry(frame, box, Provenance(provenance)))

    @property
    def last_box(self):
        return self.history[-1].box

    @property
    def last_frame(self):
        return self.history[-1].frame

    @property
    def missed_count(self):
        count = 0
        for entry in reversed(self.history):
            if entry.provenance is not Provenance.VIRTUAL:
                break
            count += 1
        return count

    @property
    def candidate_count(self):
        return len(self.history)

    @property
    def speed(self):
        """Last committed frame-to-frame center displacement (virtual boxes included)."""
        if len(self.history) >= 2:
            (x1, y1), (x0, y0) = self.history[-1].box.center(), self.history[-2].box.center()
            return Displacement(x1 - x0, y1 - y0)
        if self.last_evidence_mean is not None:
            return self.last_evidence_mean
        return Displacement.zero()

    def mean_speed(self, window):
        """Center displacement per frame averaged over the last `window` steps."""
        steps = min(window, len(self.history) - 1)
        if steps < 1:
            return self.speed
        (x1, y1), (x0, y0) = self.history[-1].box.center(), self.history[-1 - steps].box.center()
        return Displacement((x1 - x0) / steps, (y1 - y0) / steps)


def iou(a: BoundingBox, b: BoundingBox):
    if a == b:
        return 1.0
    ix = min(a.x + a.w, b.x + b.w) - max(a.x, b.x)
    iy = min(a.y + a.h, b.y + b.h) - max(a.y, b.y)
    if ix <= 0 or iy <= 0:
        return 0.0
    inter = ix * iy
    return inter / (a.area() + b.area() - inter)


def enlarge_box(b: BoundingBox, width_factor, height_factor):
    """Center-preserving enlargement used as the displacement context window."""
    if width_factor < 1 or height_factor < 1:
        raise ValueError("enlarge_box factors must be >= 1")
    cx, cy = b.center()
    w, h = b.w * width_factor, b.h * height_factor
    return BoundingBox(cx - w / 2.0, cy - h / 2.0, w, h)


def average_boxes(a: BoundingBox, b: BoundingBox):
    return BoundingBox((a.x + b.x) / 2.0, (a.y + b.y) / 2.0, (a.w + b.w) / 2.0, (a.h + b.h) / 2.0)


def center_displacement(before: BoundingBox, after: BoundingBox):
    (x1, y1), (x0, y0) = after.center(), before.center()
    return Displacement(x1 - x0, y1 - y0)
