"""Proposal weighting: detector confidence fused with foreground overlap.

A proposal whose confidence score clears the dynamic threshold keeps its
score as weight. Below the threshold, the weight falls back to a visual
cue: the Dice overlap between the proposal's RoI and the bounding box of
the foreground blob it most intersects. Overlap below ``overlap_threshold``
zeroes the weight, so background hallucinations drop out of the resampled
dataset.

The score threshold starts at ``alpha0`` and is rescaled each iteration by
the ratio of consecutive mean proposal scores, clamped into (0, 1].
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping, Sequence

from .background import ForegroundMask, foreground_blobs
from .core import BoundingBox, Sample, WeightedSample, intersection_area


@dataclass(frozen=True)
class LikelihoodParams:
    alpha0: float = 0.5
    overlap_threshold: float = 0.5  # alpha_p; empirical, no canonical value

    def __post_init__(self) -> None:
        if not 0.0 < self.alpha0 <= 1.0:
            raise ValueError("alpha0 must lie in (0,1]")
        if not 0.0 <= self.overlap_threshold <= 1.0:
            raise ValueError("overlap_threshold must lie in [0,1]")


@dataclass
class ThresholdState:
    """Dynamic score-threshold recursion state.

    alpha holds the current threshold; mean_score_history holds the mean
    proposal score of each completed iteration. The first iteration keeps
    the initial threshold (no previous mean exists to form a ratio), so for
    k >= 1 the closed form alpha_k = alpha0 * mean_k / mean_1 holds as long
    as the clamp never engages.
    """

    alpha0: float = 0.5
    mean_score_history: list[float] = field(default_factory=list)
    alpha: float = field(init=False)

    def __post_init__(self) -> None:
        self.alpha = self.alpha0

    @property
    def iteration(self) -> int:
        return len(self.mean_score_history)


def update_threshold(state: ThresholdState, mean_score: float) -> float:
    """Advance the threshold recursion with this iteration's mean score."""
    if mean_score <= 0.0:
        raise ValueError("mean proposal score is zero; detector produced no confident output")
    if mean_score > 1.0:
        raise ValueError(f"mean score must lie in (0,1], got {mean_score}")
    if state.mean_score_history:
        ratio = mean_score / state.mean_score_history[-1]
        state.alpha = min(1.0, ratio * state.alpha)
    else:
        state.alpha = state.alpha0
    state.mean_score_history.append(mean_score)
    return state.alpha


def _best_blob_dice(blob_boxes: Sequence[BoundingBox], roi: BoundingBox) -> float:
    """Dice of the RoI against the blob box it most intersects; 0 if none."""
    best_inter = 0
    best_box = None
    for box in blob_boxes:
        inter = intersection_area(roi, box)
        if inter > best_inter:
            best_inter = inter
            best_box = box
    if best_box is None:
        return 0.0
    return 2.0 * best_inter / (roi.area + best_box.area)


def overlap_score(mask: ForegroundMask, roi: BoundingBox) -> float:
    """Foreground-overlap cue in [0, 1] for one RoI against one mask.

    The RoI is clamped to the frame first; the score is the Dice coefficient
    2*|roi n B| / (|roi| + |B|) where B is the bounding box of the foreground
    blob with the largest intersection with the RoI.
    """
    clamped = roi.clamped(mask.width, mask.height)
    if clamped is None:
        return 0.0
    boxes = [box for box, _ in foreground_blobs(mask)]
    return _best_blob_dice(boxes, clamped)


def assign_weights(
    proposals: Sequence[Sample],
    masks: Mapping[int, ForegroundMask],
    alpha_k: float,
    params: LikelihoodParams,
) -> list[WeightedSample]:
    """Weight every proposal per the score/overlap observation function.

    masks maps frame id -> cleaned foreground mask; a proposal referencing a
    frame with no mask is an error. Blob extraction is done once per frame.
    """
    missing = {p.frame for p in proposals} - set(masks)
    if missing:
        raise ValueError(f"no foreground mask for frames {sorted(missing)}")
    blob_cache: dict[int, list[BoundingBox]] = {}
    out = []
    for p in proposals:
        if p.score >= alpha_k:
            out.append(WeightedSample(p, p.score))
            continue
        if p.frame not in blob_cache:
            blob_cache[p.frame] = [box for box, _ in foreground_blobs(masks[p.frame])]
        mask = masks[p.frame]
        clamped = p.box.clamped(mask.width, mask.height)
        lam = _best_blob_dice(blob_cache[p.frame], clamped) if clamped else 0.0
        out.append(WeightedSample(p, lam if lam >= params.overlap_threshold else 0.0))
    return out


def normalize_weights(weighted: Sequence[WeightedSample]) -> list[WeightedSample]:
    """Scale weights to sum to 1, preserving order and ratios."""
    total = sum(w.weight for w in weighted)
    if total <= 0.0:
        raise ValueError("all proposal weights are zero; no usable target samples")
    return [WeightedSample(w.sample, w.weight / total) for w in weighted]
