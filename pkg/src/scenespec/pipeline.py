"""The specialization loop: predict, weight, resample, fine-tune, repeat.

Each iteration k runs four steps against the specialization frames:

1. predict: detect with the iteration-(k-1) model to get proposals;
2. update: advance the dynamic score threshold with the mean proposal
   score, then weight every proposal (confidence or foreground overlap)
   and normalize;
3. sample: importance-resample the weighted set into dataset D_k under
   the duplication cap;
4. fine-tune: train a fresh model on D_k.

Foreground masks are computed once per run: the background mixture warms
up over the whole sequence first (the camera is fixed, so a second pass is
cheap and every collected mask is past burn-in quality), then a replay
pass collects one cleaned mask per frame.

When an output directory is given, every artifact is written as soon as it
exists: masks/, then iter<k>/weighted.json, iter<k>/dataset.json and
iter<k>/report.json per iteration, plus config.json up front. A failing
iteration aborts the run with a diagnostic naming it; artifacts of
completed iterations stay on disk.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Mapping

import numpy as np

from . import detector as det
from .background import (
    BackgroundParams,
    ForegroundMask,
    PixelMixtureModel,
    morphological_clean,
    remove_small_blobs,
)
from .core import FrameSequence, SpecializedDataset
from .detector import DetectorHandle
from .io import load_image, save_detections, save_masks, write_json
from .likelihood import (
    LikelihoodParams,
    ThresholdState,
    assign_weights,
    normalize_weights,
    update_threshold,
)
from .resampling import RNG_ALGORITHM, ResamplingConfig, importance_resample


class SpecializationError(RuntimeError):
    """An iteration of the loop could not complete."""


@dataclass(frozen=True)
class SpecializationConfig:
    label_space: tuple[str, ...]
    iterations: int = 2
    likelihood: LikelihoodParams = field(default_factory=LikelihoodParams)
    resampling: ResamplingConfig = field(default_factory=ResamplingConfig)
    background: BackgroundParams = field(default_factory=BackgroundParams)
    min_blob_area: int = 100
    morph_radius: int = 1
    burn_in: int = 30
    hyper: Mapping | None = None  # None: detector defaults
    seed: int = 0

    def __post_init__(self) -> None:
        if self.iterations < 0:
            raise ValueError("iterations must be >= 0")
        if not self.label_space:
            raise ValueError("label_space must be non-empty")
        if self.min_blob_area < 0:
            raise ValueError("min_blob_area must be >= 0")
        if self.morph_radius < 1:
            raise ValueError("morph_radius must be >= 1")
        if self.burn_in < 1:
            raise ValueError("burn_in must be >= 1")

    def as_dict(self) -> dict:
        return {
            "label_space": list(self.label_space),
            "iterations": self.iterations,
            "likelihood": asdict(self.likelihood),
            "resampling": dict(asdict(self.resampling), algorithm=RNG_ALGORITHM),
            "background": asdict(self.background),
            "min_blob_area": self.min_blob_area,
            "morph_radius": self.morph_radius,
            "burn_in": self.burn_in,
            "hyper": dict(self.hyper) if self.hyper is not None else dict(det.DEFAULT_HYPER),
            "seed": self.seed,
        }


@dataclass(frozen=True)
class IterationReport:
    """Loop observables for one iteration, in execution order."""

    iteration: int
    proposal_count: int
    mean_score: float
    alpha: float
    weight_min: float
    weight_max: float
    weight_mean: float
    zero_weight_fraction: float
    dataset_size: int
    model_before: str
    model_after: str

    def __post_init__(self) -> None:
        if self.proposal_count < 0 or self.dataset_size < 0:
            raise ValueError("counts must be non-negative")
        if not 0.0 < self.alpha <= 1.0:
            raise ValueError(f"alpha must lie in (0,1], got {self.alpha}")


def split_sequence(frames: FrameSequence, fraction: float = 0.5) -> tuple[FrameSequence, FrameSequence]:
    """Split into (specialization, evaluation) parts at floor(len*fraction)."""
    if not 0.0 < fraction < 1.0:
        raise ValueError(f"split fraction must lie in (0,1), got {fraction}")
    cut = int(len(frames) * fraction)
    return frames.slice(0, cut), frames.slice(cut)


def compute_masks(
    frames: FrameSequence,
    params: BackgroundParams,
    min_blob_area: int = 100,
    morph_radius: int = 1,
) -> dict[int, ForegroundMask]:
    """Warm the background model over the sequence, then collect masks.

    Returns one cleaned mask (opening, then small-blob removal) per frame
    id. Two passes over the frames: the first only updates the mixture,
    the second updates and keeps the classification.
    """
    model = PixelMixtureModel(frames.width, frames.height, params)
    for entry in frames.entries:
        model.update_and_classify(load_image(entry.path))
    masks: dict[int, ForegroundMask] = {}
    for entry in frames.entries:
        raw = model.update_and_classify(load_image(entry.path))
        cleaned = morphological_clean(raw, kernel_radius=morph_radius)
        masks[entry.frame_id] = remove_small_blobs(cleaned, min_blob_area)
    return masks


def _iteration_seed(base: int, k: int) -> int:
    """Independent per-iteration resampling seed derived from the base seed."""
    return int(np.random.SeedSequence(entropy=base, spawn_key=(k,)).generate_state(1)[0])


def _write_weighted(path: Path, weighted, normalized, alpha: float, mean_score: float) -> None:
    rows = [
        {
            "frame": w.sample.frame,
            "label": w.sample.label,
            "u": w.sample.box.u,
            "v": w.sample.box.v,
            "w": w.sample.box.w,
            "h": w.sample.box.h,
            "score": w.sample.score,
            "weight": w.weight,
            "normalized_weight": n.weight,
        }
        for w, n in zip(weighted, normalized)
    ]
    write_json(path, {"alpha": alpha, "mean_score": mean_score, "proposals": rows})


def specialize(
    config: SpecializationConfig,
    generic: DetectorHandle,
    frames: FrameSequence,
    out_dir=None,
) -> tuple[DetectorHandle, list[SpecializedDataset], list[IterationReport]]:
    """Run the full loop and return (final handle, datasets, reports).

    frames is the specialization sequence (already split and subsampled by
    the caller). out_dir of None keeps everything in memory; otherwise the
    run directory layout is written incrementally.
    """
    if config.iterations == 0:
        return generic, [], []
    if len(frames) == 0:
        raise ValueError("frame sequence is empty")
    if len(frames) < config.burn_in:
        raise ValueError(
            f"sequence has {len(frames)} frames, shorter than the "
            f"{config.burn_in}-frame burn-in"
        )

    out = Path(out_dir) if out_dir is not None else None
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
        write_json(
            out / "config.json",
            dict(config.as_dict(), generic_model_id=generic.model_id, frames={
                "count": len(frames),
                "width": frames.width,
                "height": frames.height,
                "ids": frames.frame_ids(),
            }),
        )

    masks = compute_masks(frames, config.background, config.min_blob_area, config.morph_radius)
    if out is not None:
        save_masks(masks, out / "masks")

    state = ThresholdState(alpha0=config.likelihood.alpha0)
    handle = generic
    datasets: list[SpecializedDataset] = []
    reports: list[IterationReport] = []
    for k in range(1, config.iterations + 1):
        try:
            proposals = det.detect(handle, frames, config.label_space)
            if not proposals:
                raise ValueError("detector returned no proposals")
            mean_score = sum(p.score for p in proposals) / len(proposals)
            alpha = update_threshold(state, mean_score)
            weighted = assign_weights(proposals, masks, alpha, config.likelihood)
            normalized = normalize_weights(weighted)

            iter_dir = None
            if out is not None:
                iter_dir = out / f"iter{k}"
                iter_dir.mkdir(exist_ok=True)
                _write_weighted(iter_dir / "weighted.json", weighted, normalized, alpha, mean_score)

            resample_cfg = ResamplingConfig(
                draw_count=config.resampling.draw_count,
                max_copies=config.resampling.max_copies,
                seed=_iteration_seed(config.resampling.seed, k),
            )
            dataset = importance_resample(normalized, resample_cfg, iteration=k)
            if iter_dir is not None:
                save_detections(iter_dir / "dataset.json", dataset.samples)

            tuned = det.finetune(handle, frames, dataset, config.hyper)

            weights = [w.weight for w in weighted]
            report = IterationReport(
                iteration=k,
                proposal_count=len(proposals),
                mean_score=mean_score,
                alpha=alpha,
                weight_min=min(weights),
                weight_max=max(weights),
                weight_mean=sum(weights) / len(weights),
                zero_weight_fraction=sum(1 for w in weights if w == 0.0) / len(weights),
                dataset_size=len(dataset),
                model_before=handle.model_id,
                model_after=tuned.model_id,
            )
            if iter_dir is not None:
                write_json(iter_dir / "report.json", asdict(report))

            datasets.append(dataset)
            reports.append(report)
            handle = tuned
        except Exception as exc:
            raise SpecializationError(f"iteration {k} failed: {exc}") from exc
    return handle, datasets, reports
