"""Detection scoring: greedy overlap matching, recall/FPPI curves, confusion.

Matching follows the usual PASCAL protocol: detections are visited in
descending score order and each claims the unmatched ground-truth box with
the highest IoU at or above the threshold. Because matching is greedy in
score order, the outcome of every detection is the same whether the whole
set or any score-prefix of it is matched, which lets the curve sweep run
the matching once and accumulate counts per distinct score.
"""

from __future__ import annotations

import csv
import io as _stringio
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .core import BoundingBox, Sample, iou

GroundTruth = tuple[BoundingBox, str]


@dataclass(frozen=True)
class MatchResult:
    """Outcome of matching one frame's detections against its ground truth."""

    tp_pairs: tuple[tuple[Sample, GroundTruth], ...]
    fps: tuple[Sample, ...]
    fns: tuple[GroundTruth, ...]
    iou_threshold: float

    @property
    def tp_count(self) -> int:
        return len(self.tp_pairs)


def match_detections(
    dets: Sequence[Sample],
    gt: Sequence[GroundTruth],
    iou_threshold: float = 0.5,
    class_aware: bool = True,
) -> MatchResult:
    """Greedy one-frame matching; every detection and GT box classified once.

    class_aware requires label equality for a match; the class-agnostic
    mode matches on geometry alone (used by the confusion matrix). IoU ties
    go to the earliest ground-truth box, score ties keep input order.
    """
    if not 0.0 < iou_threshold <= 1.0:
        raise ValueError(f"iou_threshold must lie in (0,1], got {iou_threshold}")
    order = sorted(range(len(dets)), key=lambda i: -dets[i].score)
    taken = [False] * len(gt)
    tp_pairs = []
    fps = []
    for i in order:
        det = dets[i]
        best_iou = 0.0
        best_j = -1
        for j, (box, label) in enumerate(gt):
            if taken[j]:
                continue
            if class_aware and label != det.label:
                continue
            overlap = iou(det.box, box)
            if overlap >= iou_threshold and overlap > best_iou:
                best_iou = overlap
                best_j = j
        if best_j >= 0:
            taken[best_j] = True
            tp_pairs.append((det, gt[best_j]))
        else:
            fps.append(det)
    fns = tuple(g for j, g in enumerate(gt) if not taken[j])
    return MatchResult(tuple(tp_pairs), tuple(fps), fns, iou_threshold)


@dataclass(frozen=True)
class CurvePoint:
    threshold: float
    fppi: float
    recall: float


@dataclass(frozen=True)
class EvaluationCurve:
    """Recall/FPPI sweep points, ordered by descending score threshold.

    FPPI never decreases along the points (lowering the threshold only
    admits more detections), so the order is also ascending-FPPI.
    """

    points: tuple[CurvePoint, ...]

    def recall_at_fppi(self, target: float) -> float:
        """Best recall among points with fppi <= target (step readoff).

        Returns 0.0 when even the strictest threshold exceeds the budget.
        """
        best = 0.0
        for p in self.points:
            if p.fppi <= target:
                best = max(best, p.recall)
        return best

    def to_csv(self) -> str:
        out = _stringio.StringIO()
        writer = csv.writer(out, lineterminator="\n")
        writer.writerow(["threshold", "fppi", "recall"])
        for p in self.points:
            writer.writerow([repr(p.threshold), repr(p.fppi), repr(p.recall)])
        return out.getvalue()

    def as_dict(self) -> dict:
        return {
            "points": [
                {"threshold": p.threshold, "fppi": p.fppi, "recall": p.recall}
                for p in self.points
            ]
        }


def recall_fppi_curve(
    detections: Sequence[Sample],
    annotations: Mapping[int, Sequence[GroundTruth]],
    iou_threshold: float = 0.5,
    class_aware: bool = True,
) -> EvaluationCurve:
    """Sweep the score threshold over all distinct detection scores.

    annotations maps frame id -> ground-truth boxes and defines both the
    frame universe (FPPI divides by its size) and the recall denominator.
    Every detection must land on an annotated frame; at least one GT box
    must exist overall for recall to mean anything.
    """
    if not annotations:
        raise ValueError("no annotated frames; FPPI undefined")
    total_gt = sum(len(v) for v in annotations.values())
    if total_gt == 0:
        raise ValueError("no ground-truth boxes; recall undefined")
    stray = {d.frame for d in detections} - set(annotations)
    if stray:
        raise ValueError(f"detections reference unannotated frames {sorted(stray)}")
    num_frames = len(annotations)

    if not detections:
        return EvaluationCurve(points=(CurvePoint(1.0, 0.0, 0.0),))

    by_frame: dict[int, list[Sample]] = {}
    for d in detections:
        by_frame.setdefault(d.frame, []).append(d)
    tp_scores = []
    fp_scores = []
    for frame, dets in by_frame.items():
        result = match_detections(dets, annotations[frame], iou_threshold, class_aware)
        tp_scores.extend(d.score for d, _ in result.tp_pairs)
        fp_scores.extend(d.score for d in result.fps)

    tp_scores = np.sort(np.asarray(tp_scores))
    fp_scores = np.sort(np.asarray(fp_scores))
    thresholds = sorted({d.score for d in detections}, reverse=True)
    points = []
    for s in thresholds:
        tp = len(tp_scores) - int(np.searchsorted(tp_scores, s, side="left"))
        fp = len(fp_scores) - int(np.searchsorted(fp_scores, s, side="left"))
        points.append(CurvePoint(threshold=s, fppi=fp / num_frames, recall=tp / total_gt))
    return EvaluationCurve(points=tuple(points))


@dataclass(frozen=True)
class ConfusionMatrix:
    """Actual class (rows) vs predicted class (columns) over matched pairs."""

    classes: tuple[str, ...]
    counts: np.ndarray  # |classes| x |classes|, non-negative ints

    def __post_init__(self) -> None:
        if self.counts.shape != (len(self.classes), len(self.classes)):
            raise ValueError("counts must be square over the class list")
        self.counts.setflags(write=False)

    def count(self, actual: str, predicted: str) -> int:
        return int(self.counts[self.classes.index(actual), self.classes.index(predicted)])

    def total(self) -> int:
        return int(self.counts.sum())

    def to_csv(self) -> str:
        out = _stringio.StringIO()
        writer = csv.writer(out, lineterminator="\n")
        writer.writerow(["actual\\predicted", *self.classes])
        for i, name in enumerate(self.classes):
            writer.writerow([name, *(int(c) for c in self.counts[i])])
        return out.getvalue()

    def as_dict(self) -> dict:
        return {"classes": list(self.classes), "counts": self.counts.tolist()}


def confusion_matrix(
    detections: Sequence[Sample],
    annotations: Mapping[int, Sequence[GroundTruth]],
    iou_threshold: float = 0.5,
    classes: Sequence[str] | None = None,
) -> ConfusionMatrix:
    """Count predicted-vs-actual labels over geometric matches.

    Matching ignores labels (otherwise off-diagonals could never occur);
    unmatched detections and unmatched ground truth are not counted. The
    class list defaults to the sorted union of labels seen on either side.
    """
    if classes is None:
        seen = {label for v in annotations.values() for _, label in v}
        seen.update(d.label for d in detections)
        classes = sorted(seen)
    classes = tuple(classes)
    index = {c: i for i, c in enumerate(classes)}
    counts = np.zeros((len(classes), len(classes)), dtype=np.int64)

    by_frame: dict[int, list[Sample]] = {}
    for d in detections:
        by_frame.setdefault(d.frame, []).append(d)
    for frame, dets in by_frame.items():
        gt = annotations.get(frame, ())
        result = match_detections(dets, gt, iou_threshold, class_aware=False)
        for det, (_box, actual) in result.tp_pairs:
            if actual not in index:
                raise ValueError(f"ground-truth label {actual!r} not in classes")
            if det.label not in index:
                raise ValueError(f"predicted label {det.label!r} not in classes")
            counts[index[actual], index[det.label]] += 1
    return ConfusionMatrix(classes=classes, counts=counts)
