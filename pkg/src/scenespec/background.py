"""Per-pixel adaptive Gaussian-mixture background model.

The model keeps up to ``max_components`` Gaussians per pixel, updated online
in the classic adaptive-mixture style: a new frame value is matched against
the existing components (within ``match_threshold_sigmas`` standard
deviations); the matched component moves toward the value, unmatched
components decay, and an unmatched pixel replaces its weakest component with
a fresh wide Gaussian. Components are kept sorted by weight/sqrt(variance)
and the background set is the smallest prefix of that ordering whose
cumulative weight reaches ``background_ratio``. A pixel is foreground when
no background-designated component matches it.

All per-pixel state lives in (H, W, M) float arrays so one frame update is a
handful of vectorized numpy passes. Frames must be presented in temporal
order; the first frame ever seen yields an all-foreground mask by
construction (empty mixtures match nothing).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .core import BoundingBox

# 8-connectivity structuring element for blob labeling.
_CONN8 = np.ones((3, 3), dtype=bool)


@dataclass(frozen=True)
class BackgroundParams:
    learning_rate: float = 0.005
    max_components: int = 5
    match_threshold_sigmas: float = 3.0
    background_ratio: float = 0.9
    initial_variance: float = 225.0
    variance_floor: float = 4.0
    prune_weight: float = 0.001

    def __post_init__(self) -> None:
        if not 0.0 < self.learning_rate < 1.0:
            raise ValueError("learning_rate must lie in (0,1)")
        if self.max_components < 1:
            raise ValueError("max_components must be >= 1")
        if self.match_threshold_sigmas <= 0:
            raise ValueError("match_threshold_sigmas must be positive")
        if not 0.0 < self.background_ratio < 1.0:
            raise ValueError("background_ratio must lie in (0,1)")
        if self.initial_variance <= 0 or self.variance_floor <= 0:
            raise ValueError("variances must be positive")
        if self.prune_weight < 0:
            raise ValueError("prune_weight must be >= 0")


@dataclass(frozen=True)
class ForegroundMask:
    """Binary foreground map; True marks foreground pixels."""

    bits: np.ndarray  # bool, shape (height, width)

    def __post_init__(self) -> None:
        if self.bits.ndim != 2 or self.bits.dtype != np.bool_:
            raise ValueError("mask bits must be a 2-D boolean array")
        self.bits.setflags(write=False)

    @property
    def width(self) -> int:
        return self.bits.shape[1]

    @property
    def height(self) -> int:
        return self.bits.shape[0]

    def foreground_count(self) -> int:
        return int(self.bits.sum())


def to_grayscale(frame: np.ndarray) -> np.ndarray:
    """Luma conversion (0.299/0.587/0.114) for color frames; pass-through for gray."""
    if frame.ndim == 2:
        return np.asarray(frame, dtype=np.float64)
    if frame.ndim == 3 and frame.shape[2] == 3:
        weights = np.array([0.299, 0.587, 0.114])
        return frame.astype(np.float64) @ weights
    raise ValueError(f"expected HxW or HxWx3 frame, got shape {frame.shape}")


class PixelMixtureModel:
    """Online Gaussian mixture state for every pixel of one camera view."""

    def __init__(self, width: int, height: int, params: BackgroundParams | None = None):
        self.params = params or BackgroundParams()
        self.width = width
        self.height = height
        m = self.params.max_components
        # weight == 0 marks an unused slot.
        self.weights = np.zeros((height, width, m), dtype=np.float64)
        self.means = np.zeros((height, width, m), dtype=np.float64)
        self.variances = np.full((height, width, m), self.params.initial_variance, dtype=np.float64)
        self.frames_seen = 0

    def component_counts(self) -> np.ndarray:
        return (self.weights > 0).sum(axis=2)

    def _sort_by_fitness(self) -> None:
        # Descending weight/sqrt(variance); unused slots (weight 0) sink to the end.
        fitness = self.weights / np.sqrt(self.variances)
        order = np.argsort(-fitness, axis=2, kind="stable")
        self.weights = np.take_along_axis(self.weights, order, axis=2)
        self.means = np.take_along_axis(self.means, order, axis=2)
        self.variances = np.take_along_axis(self.variances, order, axis=2)

    def update_and_classify(self, frame: np.ndarray) -> ForegroundMask:
        """Fold one frame into the model and return its foreground mask.

        Must be called in temporal order; mutates the model in place.
        """
        p = self.params
        gray = to_grayscale(np.asarray(frame))
        if gray.shape != (self.height, self.width):
            raise ValueError(
                f"frame shape {gray.shape} does not match model "
                f"({self.height}, {self.width})"
            )

        active = self.weights > 0
        diff = gray[:, :, None] - self.means
        matched = active & (np.abs(diff) < p.match_threshold_sigmas * np.sqrt(self.variances))
        any_match = matched.any(axis=2)
        # First matching slot in fitness order (arrays are kept sorted).
        match_idx = np.argmax(matched, axis=2)

        # Background designation uses the pre-update mixture: cumulative weight
        # prefix over the fitness ordering.
        cum = np.cumsum(self.weights, axis=2)
        prefix = np.zeros_like(cum, dtype=bool)
        prefix[:, :, 0] = True
        prefix[:, :, 1:] = cum[:, :, :-1] < p.background_ratio
        prefix &= active
        bg_hit = np.take_along_axis(prefix, match_idx[:, :, None], axis=2)[:, :, 0]
        foreground = ~(any_match & bg_hit)

        # Decay every active component, then reinforce/update the matched one.
        self.weights[active] *= 1.0 - p.learning_rate
        rows, cols = np.nonzero(any_match)
        sel = match_idx[rows, cols]
        self.weights[rows, cols, sel] += p.learning_rate
        d = gray[rows, cols] - self.means[rows, cols, sel]
        self.means[rows, cols, sel] += p.learning_rate * d
        var = self.variances[rows, cols, sel]
        var += p.learning_rate * (d * d - var)
        self.variances[rows, cols, sel] = np.maximum(var, p.variance_floor)

        # No match: replace the weakest slot (argmin weight; an unused slot has
        # weight 0 so it is taken first) with a fresh wide component.
        nrows, ncols = np.nonzero(~any_match)
        if nrows.size:
            weakest = np.argmin(self.weights[nrows, ncols], axis=1)
            self.weights[nrows, ncols, weakest] = p.learning_rate
            self.means[nrows, ncols, weakest] = gray[nrows, ncols]
            self.variances[nrows, ncols, weakest] = p.initial_variance

        # Prune negligible components, renormalize to sum 1, restore ordering.
        self.weights[self.weights < p.prune_weight] = 0.0
        totals = self.weights.sum(axis=2, keepdims=True)
        np.divide(self.weights, totals, out=self.weights, where=totals > 0)
        self._sort_by_fitness()
        self.frames_seen += 1

        return ForegroundMask(foreground)


def morphological_clean(mask: ForegroundMask, kernel_radius: int = 1) -> ForegroundMask:
    """Morphological opening with a square element of side 2*radius+1."""
    if kernel_radius < 1:
        raise ValueError("kernel_radius must be >= 1")
    side = 2 * kernel_radius + 1
    se = np.ones((side, side), dtype=bool)
    eroded = ndimage.binary_erosion(mask.bits, structure=se, border_value=0)
    opened = ndimage.binary_dilation(eroded, structure=se, border_value=0)
    return ForegroundMask(opened)


def remove_small_blobs(mask: ForegroundMask, min_area: int) -> ForegroundMask:
    """Clear 8-connected components with strictly fewer than min_area pixels."""
    if min_area < 0:
        raise ValueError("min_area must be >= 0")
    if min_area == 0:
        return mask
    labels, count = ndimage.label(mask.bits, structure=_CONN8)
    if count == 0:
        return mask
    areas = np.bincount(labels.ravel())
    keep = areas >= min_area
    keep[0] = False
    return ForegroundMask(keep[labels])


def foreground_blobs(mask: ForegroundMask) -> list[tuple[BoundingBox, int]]:
    """Tight bounding box and pixel area of every 8-connected component."""
    labels, count = ndimage.label(mask.bits, structure=_CONN8)
    if count == 0:
        return []
    areas = np.bincount(labels.ravel())
    blobs = []
    for i, sl in enumerate(ndimage.find_objects(labels), start=1):
        if sl is None:
            continue
        rs, cs = sl
        box = BoundingBox(cs.start, rs.start, cs.stop - cs.start, rs.stop - rs.start)
        blobs.append((box, int(areas[i])))
    return blobs
