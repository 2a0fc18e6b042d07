"""Anchor grids and how target boxes recruit them.

Generates a three-scale anchor set over a 256x256 image and labels every
anchor against two target boxes. The first target is anchor-sized, so a
whole neighborhood of anchors clears the 0.7 IoU bar; the second is
smaller than every anchor shape and would go unrepresented under the
thresholds alone, but the best-anchor rule recruits its closest match as
positive anyway.
"""

import numpy as np

from scenespec import (
    IGNORE,
    NEGATIVE,
    POSITIVE,
    AnchorSpec,
    BoundingBox,
    assign_anchor_labels,
    generate_anchors,
    iou,
)


def main():
    spec = AnchorSpec(areas=(32**2, 64**2, 128**2), stride=16)
    anchors = generate_anchors(spec, 256, 256)
    positions = (256 // spec.stride) ** 2
    print(f"{len(anchors)} anchors: {positions} positions x {spec.anchors_per_position} shapes")
    off_frame = sum(1 for a in anchors if a.cross_boundary)
    print(f"{off_frame} hang off the frame edge (kept, flagged cross_boundary)")

    targets = [
        BoundingBox(40, 40, 64, 64),  # matches the middle anchor scale
        BoundingBox(200, 16, 10, 12),  # smaller than every anchor shape
    ]
    labels = assign_anchor_labels(anchors, targets, 0.7, 0.3)
    counts = {
        "positive": int(np.sum(labels == POSITIVE)),
        "negative": int(np.sum(labels == NEGATIVE)),
        "ignored": int(np.sum(labels == IGNORE)),
    }
    print(f"\nlabel bands against {len(targets)} boxes: {counts}")

    for t in targets:
        best = max(iou(a, t) for a in anchors)
        recruited = "clears 0.7" if best >= 0.7 else "recruited via best-anchor rule"
        print(f"  target {t.as_tuple()}: best anchor IoU {best:.3f} ({recruited})")


if __name__ == "__main__":
    main()
