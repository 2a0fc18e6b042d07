"""Importance resampling with a per-sample duplication cap.

Draws are sequential multinomial: each draw picks a sample with probability
proportional to its current weight. Once an identity (frame, box, label)
has been drawn ``max_copies`` times, every pool entry with that identity is
removed and the remaining weights are renormalized before subsequent draws,
so the cap is enforced exactly and the procedure always terminates.
Zero-weight samples can never be drawn.

The generator is numpy's PCG64 (seeded), recorded as ``RNG_ALGORITHM`` so a
run's configuration pins the algorithm for replay.
"""

from __future__ import annotations

from bisect import bisect_right
from dataclasses import dataclass
from itertools import accumulate

import numpy as np

from .core import SpecializedDataset, WeightedSample

RNG_ALGORITHM = "numpy-pcg64"

_SUM_TOLERANCE = 1e-6


@dataclass(frozen=True)
class ResamplingConfig:
    draw_count: int | None = None  # None: draw as many as the weighted set holds
    max_copies: int = 2
    seed: int = 0

    def __post_init__(self) -> None:
        if self.draw_count is not None and self.draw_count < 0:
            raise ValueError("draw_count must be >= 0")
        if self.max_copies < 1:
            raise ValueError("max_copies must be >= 1")


def importance_resample(
    weighted: list[WeightedSample],
    config: ResamplingConfig,
    iteration: int = 0,
) -> SpecializedDataset:
    """Draw a specialized dataset from a normalized weighted set.

    The input weights must sum to 1 within 1e-6. If every identity reaches
    the cap before draw_count draws are made, the dataset is returned short.
    """
    if not weighted:
        raise ValueError("cannot resample an empty weighted set")
    total = sum(w.weight for w in weighted)
    if abs(total - 1.0) > _SUM_TOLERANCE:
        raise ValueError(f"weights must be normalized (sum to 1), got sum {total!r}")

    draw_count = config.draw_count if config.draw_count is not None else len(weighted)
    rng = np.random.Generator(np.random.PCG64(config.seed))
    uniforms = rng.random(draw_count)

    weights = [w.weight for w in weighted]
    identities = [w.sample.identity() for w in weighted]
    index_of: dict = {}
    for j, ident in enumerate(identities):
        index_of.setdefault(ident, []).append(j)

    copies: dict = {}
    drawn: list = []
    # Cumulative weights are rebuilt only when a cap removal changes the pool;
    # bisect_right skips zero-weight entries because they repeat a cum value.
    cum = list(accumulate(weights))
    for u in uniforms:
        live_total = cum[-1]
        if live_total <= 0.0:
            break  # pool exhausted; return short
        idx = bisect_right(cum, u * live_total)
        if idx >= len(weights):  # u*total rounded up onto the final cum value
            idx = len(weights) - 1
        while weights[idx] == 0.0:  # never hand back a removed or zero-weight entry
            idx -= 1
        drawn.append(weighted[idx].sample)
        key = identities[idx]
        n = copies.get(key, 0) + 1
        copies[key] = n
        if n >= config.max_copies:
            for j in index_of[key]:
                weights[j] = 0.0
            cum = list(accumulate(weights))
    return SpecializedDataset(iteration=iteration, samples=tuple(drawn))
