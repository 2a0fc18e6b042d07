"""Scene-specific specialization of generic object detectors.

The library adapts a detector to one fixed camera by iterating a
sequential Monte Carlo loop over the scene's video: detect proposals,
weight them by confidence or foreground overlap, importance-resample a
pseudo-labeled dataset, and fine-tune. Detectors are external workers
behind a line-oriented JSON protocol; a statistical mock ships in-process
so everything runs without a GPU.
"""

from .background import (
    BackgroundParams,
    ForegroundMask,
    PixelMixtureModel,
    foreground_blobs,
    morphological_clean,
    remove_small_blobs,
    to_grayscale,
)
from .core import (
    BoundingBox,
    FrameEntry,
    FrameSequence,
    Sample,
    SpecializedDataset,
    WeightedSample,
    intersection_area,
    iou,
)
from .detector import (
    DEFAULT_HYPER,
    IGNORE,
    NEGATIVE,
    POSITIVE,
    Anchor,
    AnchorSpec,
    DetectorHandle,
    MockDetector,
    MockDetectorConfig,
    ScoreModel,
    SubprocessWorker,
    WorkerError,
    assign_anchor_labels,
    detect,
    finetune,
    generate_anchors,
    initialize,
    serve_stdio,
)
from .evaluation import (
    ConfusionMatrix,
    CurvePoint,
    EvaluationCurve,
    MatchResult,
    confusion_matrix,
    match_detections,
    recall_fppi_curve,
)
from .io import (
    ObjectTemplate,
    SynthSceneConfig,
    default_run_root,
    generate_synthetic_scene,
    load_annotations,
    load_detections,
    load_image,
    load_sequence,
    save_annotations,
    save_detections,
    save_masks,
    uniform_subsample,
    write_json,
)
from .likelihood import (
    LikelihoodParams,
    ThresholdState,
    assign_weights,
    normalize_weights,
    overlap_score,
    update_threshold,
)
from .pipeline import (
    IterationReport,
    SpecializationConfig,
    SpecializationError,
    compute_masks,
    specialize,
    split_sequence,
)
from .resampling import RNG_ALGORITHM, ResamplingConfig, importance_resample

__version__ = "0.1.0"

__all__ = [
    "Anchor",
    "AnchorSpec",
    "BackgroundParams",
    "BoundingBox",
    "ConfusionMatrix",
    "CurvePoint",
    "DEFAULT_HYPER",
    "DetectorHandle",
    "EvaluationCurve",
    "ForegroundMask",
    "FrameEntry",
    "FrameSequence",
    "IGNORE",
    "IterationReport",
    "LikelihoodParams",
    "MatchResult",
    "MockDetector",
    "MockDetectorConfig",
    "NEGATIVE",
    "ObjectTemplate",
    "POSITIVE",
    "PixelMixtureModel",
    "RNG_ALGORITHM",
    "ResamplingConfig",
    "Sample",
    "ScoreModel",
    "SpecializationConfig",
    "SpecializationError",
    "SpecializedDataset",
    "SubprocessWorker",
    "SynthSceneConfig",
    "ThresholdState",
    "WeightedSample",
    "WorkerError",
    "assign_anchor_labels",
    "assign_weights",
    "compute_masks",
    "confusion_matrix",
    "default_run_root",
    "detect",
    "finetune",
    "foreground_blobs",
    "generate_anchors",
    "generate_synthetic_scene",
    "importance_resample",
    "initialize",
    "intersection_area",
    "iou",
    "load_annotations",
    "load_detections",
    "load_image",
    "load_sequence",
    "match_detections",
    "morphological_clean",
    "normalize_weights",
    "overlap_score",
    "recall_fppi_curve",
    "remove_small_blobs",
    "save_annotations",
    "save_detections",
    "save_masks",
    "serve_stdio",
    "specialize",
    "split_sequence",
    "to_grayscale",
    "uniform_subsample",
    "update_threshold",
    "write_json",
]
