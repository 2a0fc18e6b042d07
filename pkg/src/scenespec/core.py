"""Geometry and domain types shared by every stage of the pipeline.

Boxes use top-left + width/height integer pixel coordinates with half-open
semantics: a box covers pixel columns [u, u+w) and rows [v, v+h), so its
area is exactly w*h. IoU is computed in integer arithmetic and divided at
the end, which keeps tie comparisons exact during anchor assignment.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field


@dataclass(frozen=True)
class BoundingBox:
    """Axis-aligned box: top-left corner (u, v), size w x h, in pixels."""

    u: int
    v: int
    w: int
    h: int

    def __post_init__(self) -> None:
        if self.w <= 0 or self.h <= 0:
            raise ValueError(f"box size must be positive, got w={self.w}, h={self.h}")
        if self.u < 0 or self.v < 0:
            raise ValueError(f"box origin must be non-negative, got u={self.u}, v={self.v}")

    @property
    def area(self) -> int:
        return self.w * self.h

    @property
    def right(self) -> int:
        """One past the last covered column."""
        return self.u + self.w

    @property
    def bottom(self) -> int:
        """One past the last covered row."""
        return self.v + self.h

    def as_tuple(self) -> tuple[int, int, int, int]:
        return self.u, self.v, self.w, self.h

    def clamped(self, width: int, height: int) -> BoundingBox | None:
        """Intersection with the frame rectangle, or None if nothing remains."""
        u0 = max(self.u, 0)
        v0 = max(self.v, 0)
        u1 = min(self.right, width)
        v1 = min(self.bottom, height)
        if u1 <= u0 or v1 <= v0:
            return None
        return BoundingBox(u0, v0, u1 - u0, v1 - v0)


def intersection_area(a, b) -> int:
    """Pixel count shared by two box-like objects (anything with u/v/w/h)."""
    iw = min(a.u + a.w, b.u + b.w) - max(a.u, b.u)
    ih = min(a.v + a.h, b.v + b.h) - max(a.v, b.v)
    if iw <= 0 or ih <= 0:
        return 0
    return iw * ih


def iou(a, b) -> float:
    """Intersection-over-union of two boxes; 0.0 when disjoint.

    Accepts any objects exposing integer u/v/w/h, so anchors that extend
    past the frame participate with their full geometry.
    """
    inter = intersection_area(a, b)
    if inter == 0:
        return 0.0
    union = a.w * a.h + b.w * b.h - inter
    return inter / union


@dataclass(frozen=True)
class Sample:
    """A localized object hypothesis: box + class label + confidence score."""

    box: BoundingBox
    label: str
    score: float
    frame: int

    def __post_init__(self) -> None:
        if not 0.0 <= self.score <= 1.0:
            raise ValueError(f"score must lie in [0,1], got {self.score}")
        if self.frame < 0:
            raise ValueError(f"frame id must be >= 0, got {self.frame}")

    def identity(self) -> tuple[int, tuple[int, int, int, int], str]:
        """Key used for duplicate counting: (frame, box, label)."""
        return self.frame, self.box.as_tuple(), self.label


@dataclass(frozen=True)
class WeightedSample:
    """A sample with the weight assigned by the observation function."""

    sample: Sample
    weight: float

    def __post_init__(self) -> None:
        if not 0.0 <= self.weight <= 1.0:
            raise ValueError(f"weight must lie in [0,1], got {self.weight}")


@dataclass(frozen=True)
class SpecializedDataset:
    """The resampled pseudo-labeled dataset produced at one loop iteration."""

    iteration: int
    samples: tuple[Sample, ...]

    def __len__(self) -> int:
        return len(self.samples)

    def multiplicities(self) -> Counter:
        """Copy counts per (frame, box, label) identity, for cap checks."""
        return Counter(s.identity() for s in self.samples)


@dataclass(frozen=True)
class FrameEntry:
    frame_id: int
    path: str


@dataclass(frozen=True)
class FrameSequence:
    """An ordered set of frames sharing one resolution.

    Frames are referenced by path; pixel data is loaded on demand (see
    scenespec.io.load_image). frame_id values are unique and ordering is
    the temporal order of extraction.
    """

    entries: tuple[FrameEntry, ...]
    width: int
    height: int

    _index: dict = field(default_factory=dict, compare=False, repr=False)

    def __post_init__(self) -> None:
        seen = {}
        for pos, e in enumerate(self.entries):
            if e.frame_id in seen:
                raise ValueError(f"duplicate frame id {e.frame_id} in sequence")
            seen[e.frame_id] = pos
        object.__setattr__(self, "_index", seen)

    def __len__(self) -> int:
        return len(self.entries)

    def frame_ids(self) -> list[int]:
        return [e.frame_id for e in self.entries]

    def position_of(self, frame_id: int) -> int:
        try:
            return self._index[frame_id]
        except KeyError:
            raise KeyError(f"frame id {frame_id} not in sequence") from None

    def __contains__(self, frame_id: int) -> bool:
        return frame_id in self._index

    def slice(self, start: int, stop: int | None = None) -> FrameSequence:
        """Sub-sequence by position, preserving order and dimensions."""
        return FrameSequence(self.entries[start:stop], self.width, self.height)
