"""From raw proposals to a training dataset, step by step.

A handful of hand-made proposals against one foreground mask: confident
ones keep their score as weight, uncertain ones fall back to foreground
overlap, and the rest are zeroed. Normalized weights then drive the capped
importance resampler, and the multiplicity table at the end shows how
probability mass turned into sample copies.
"""

import numpy as np

from scenespec import (
    BoundingBox,
    ForegroundMask,
    LikelihoodParams,
    ResamplingConfig,
    Sample,
    assign_weights,
    importance_resample,
    normalize_weights,
)


def main():
    bits = np.zeros((40, 60), dtype=bool)
    bits[5:25, 10:30] = True  # one 20x20 blob
    mask = ForegroundMask(bits)

    proposals = [
        Sample(frame=0, box=BoundingBox(10, 5, 20, 20), label="car", score=0.92),
        Sample(frame=0, box=BoundingBox(12, 6, 20, 20), label="car", score=0.81),
        Sample(frame=0, box=BoundingBox(11, 5, 18, 22), label="car", score=0.35),
        Sample(frame=0, box=BoundingBox(40, 28, 12, 8), label="car", score=0.40),
        Sample(frame=0, box=BoundingBox(45, 30, 10, 6), label="car", score=0.15),
    ]

    weighted = assign_weights(proposals, {0: mask}, alpha_k=0.5, params=LikelihoodParams())
    print("proposal weights (score >= 0.5 keeps the score, otherwise Dice overlap):")
    for w in weighted:
        print(f"  box={w.sample.box.as_tuple()} score={w.sample.score:.2f} -> {w.weight:.3f}")

    normalized = normalize_weights(weighted)
    print(f"\nnormalized weights sum to {sum(w.weight for w in normalized):.6f}")

    dataset = importance_resample(
        normalized, ResamplingConfig(draw_count=6, max_copies=2, seed=9), iteration=1
    )
    print(f"\nresampled dataset, {len(dataset)} samples (each proposal at most twice):")
    for identity, copies in sorted(dataset.multiplicities().items()):
        frame, box, label = identity
        print(f"  {label} {box} x{copies}")


if __name__ == "__main__":
    main()
