"""Command-line front end.

Subcommands wrap the library one-to-one: specialize drives the full loop
against a worker subprocess, evaluate scores a detection file against
annotations, synth renders a synthetic scene, bgsub dumps foreground
masks, and mock-detector serves the built-in mock over stdio so the wire
path can be exercised end to end.

Exit codes: 0 on success, 1 for usage errors, 2 for runtime failures.
"""

from __future__ import annotations

import argparse
import json
import sys
import time
from pathlib import Path

from .background import BackgroundParams
from .detector import (
    MockDetector,
    MockDetectorConfig,
    ScoreModel,
    SubprocessWorker,
    initialize,
    serve_stdio,
)
from .evaluation import confusion_matrix, recall_fppi_curve
from .io import (
    SynthSceneConfig,
    default_run_root,
    generate_synthetic_scene,
    load_annotations,
    load_detections,
    load_sequence,
    save_masks,
    write_json,
    write_text,
)
from .likelihood import LikelihoodParams
from .pipeline import SpecializationConfig, compute_masks, specialize, split_sequence
from .resampling import ResamplingConfig


class _Parser(argparse.ArgumentParser):
    # argparse exits with 2 on bad usage; this tool reserves 2 for runtime
    # failures and reports usage problems as 1.
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _labels_arg(text: str) -> tuple[str, ...]:
    labels = tuple(part.strip() for part in text.split(",") if part.strip())
    if not labels:
        raise argparse.ArgumentTypeError("label list is empty")
    return labels


def _fppi_arg(text: str) -> tuple[float, ...]:
    try:
        targets = tuple(float(part) for part in text.split(",") if part.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad FPPI list: {text!r}")
    if not targets or any(t < 0 for t in targets):
        raise argparse.ArgumentTypeError(f"bad FPPI list: {text!r}")
    return targets


def _build_parser() -> _Parser:
    parser = _Parser(prog="scenespec", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("specialize", help="run the specialization loop")
    p.add_argument("--manifest", required=True, help="frame sequence manifest JSON")
    p.add_argument("--detector-cmd", required=True, help="worker command line")
    p.add_argument("--labels", required=True, type=_labels_arg, help="comma-separated class labels")
    p.add_argument("--model", default="generic", help="model name passed to the worker's init")
    p.add_argument("--iterations", type=int, default=2)
    p.add_argument("--alpha0", type=float, default=0.5, help="initial score threshold")
    p.add_argument("--alpha-p", type=float, default=0.5, help="overlap acceptance threshold")
    p.add_argument("--min-blob", type=int, default=100, help="minimum foreground blob area")
    p.add_argument("--split", type=float, default=0.5, help="fraction of frames used to specialize")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default=None, help="run directory (default: <run root>/<timestamp>)")

    p = sub.add_parser("evaluate", help="score detections against annotations")
    p.add_argument("--detections", required=True)
    p.add_argument("--annotations", required=True)
    p.add_argument("--iou", type=float, default=0.5)
    p.add_argument("--fppi", type=_fppi_arg, default=(0.5, 1.0), help="comma-separated FPPI targets")
    p.add_argument("--out", required=True, help="directory for curve.csv, confusion.csv, summary.json")

    p = sub.add_parser("synth", help="render a synthetic scene with ground truth")
    p.add_argument("--config", default=None, help="scene config JSON (defaults used if omitted)")
    p.add_argument("--seed", type=int, default=None, help="override the config seed")
    p.add_argument("--out", required=True)

    p = sub.add_parser("bgsub", help="dump foreground masks for inspection")
    p.add_argument("--manifest", required=True)
    p.add_argument("--min-blob", type=int, default=100)
    p.add_argument("--out", required=True)

    p = sub.add_parser("mock-detector", help="serve the built-in mock worker on stdio")
    p.add_argument("--config", required=True, help="mock config JSON")

    return parser


def _cmd_specialize(args) -> int:
    frames = load_sequence(args.manifest)
    spec_frames, _held_out = split_sequence(frames, args.split)
    if len(spec_frames) == 0:
        raise ValueError("specialization split is empty; raise --split or add frames")
    out_dir = Path(args.out) if args.out else default_run_root() / time.strftime("%Y%m%dT%H%M%S")
    config = SpecializationConfig(
        label_space=args.labels,
        iterations=args.iterations,
        likelihood=LikelihoodParams(alpha0=args.alpha0, overlap_threshold=args.alpha_p),
        resampling=ResamplingConfig(seed=args.seed),
        background=BackgroundParams(),
        min_blob_area=args.min_blob,
        seed=args.seed,
    )
    with SubprocessWorker(args.detector_cmd) as worker:
        generic = initialize(worker, args.model, args.labels)
        final, _datasets, reports = specialize(config, generic, spec_frames, out_dir)
        for r in reports:
            print(
                f"iter {r.iteration}: proposals={r.proposal_count} "
                f"alpha={r.alpha:.4f} dataset={r.dataset_size} "
                f"model {r.model_before} -> {r.model_after}"
            )
        print(f"specialized model: {final.model_id}")
    print(f"run directory: {out_dir}")
    return 0


def _cmd_evaluate(args) -> int:
    detections = load_detections(args.detections)
    annotations = load_annotations(args.annotations)
    curve = recall_fppi_curve(detections, annotations, iou_threshold=args.iou)
    confusion = confusion_matrix(detections, annotations, iou_threshold=args.iou)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    write_text(out_dir / "curve.csv", curve.to_csv())
    write_text(out_dir / "confusion.csv", confusion.to_csv())
    recall_at = {repr(t): curve.recall_at_fppi(t) for t in args.fppi}
    write_json(
        out_dir / "summary.json",
        {
            "iou_threshold": args.iou,
            "recall_at_fppi": recall_at,
            "curve": curve.as_dict(),
            "confusion": confusion.as_dict(),
        },
    )
    for target in args.fppi:
        print(f"recall at {target} FPPI: {curve.recall_at_fppi(target):.4f}")
    print(f"reports written to {out_dir}")
    return 0


def _cmd_synth(args) -> int:
    if args.config is not None:
        data = json.loads(Path(args.config).read_text(encoding="utf-8"))
    else:
        data = {}
    if args.seed is not None:
        data["seed"] = args.seed
    config = SynthSceneConfig.from_dict(data)
    sequence, annotations = generate_synthetic_scene(config, args.out)
    objects = sum(len(v) for v in annotations.values())
    print(f"wrote {len(sequence)} frames, {objects} ground-truth boxes to {args.out}")
    return 0


def _cmd_bgsub(args) -> int:
    frames = load_sequence(args.manifest)
    masks = compute_masks(frames, BackgroundParams(), min_blob_area=args.min_blob)
    save_masks(masks, args.out)
    print(f"wrote {len(masks)} masks to {args.out}")
    return 0


def _cmd_mock_detector(args) -> int:
    data = json.loads(Path(args.config).read_text(encoding="utf-8"))
    annotations = load_annotations(data["annotations"])
    ground_truth = {frame: tuple(objs) for frame, objs in annotations.items()}
    scores = ScoreModel(**data.get("scores", {}))
    config = MockDetectorConfig(
        ground_truth=ground_truth,
        frame_width=data["width"],
        frame_height=data["height"],
        base_recall=data.get("base_recall", 0.4),
        recall_gain_per_coverage=data.get("recall_gain_per_coverage", 0.5),
        false_positive_rate=data.get("false_positive_rate", 1.0),
        scores=scores,
        seed=data.get("seed", 0),
    )
    serve_stdio(MockDetector(config))
    return 0


_COMMANDS = {
    "specialize": _cmd_specialize,
    "evaluate": _cmd_evaluate,
    "synth": _cmd_synth,
    "bgsub": _cmd_bgsub,
    "mock-detector": _cmd_mock_detector,
}


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except Exception as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
