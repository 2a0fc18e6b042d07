"""Detector boundary: wire protocol client, mock detector, anchor machinery.

The engine never runs a neural network itself. Detection and fine-tuning
are requests to a worker that speaks newline-delimited JSON over its
standard streams:

    -> {"id":1,"op":"init","model":"<name>","labels":["car",...]}
    <- {"id":1,"ok":true,"model_id":"m0"}
    -> {"id":2,"op":"detect","model_id":"m0","frames":["/abs/f.png",...]}
    <- {"id":2,"ok":true,"detections":[[frame_index,"car",0.91,120,44,60,38],...]}
    -> {"id":3,"op":"finetune","model_id":"m0","frames":[...],
        "samples":[[frame_index,"car",120,44,60,38],...],"hyper":{...}}
    <- {"id":3,"ok":true,"model_id":"m1"}

Failures come back as {"id":N,"ok":false,"error":"..."}; unknown fields are
ignored and the id always echoes the request. One request is in flight per
connection at a time.

The built-in MockDetector simulates a detector statistically (per-frame
recall draws against known ground truth plus Poisson false positives) so
the whole loop can run without a deep-learning runtime. It answers the
same request dicts as a live worker and can be served over stdio, which
makes the in-process path and the subprocess path interchangeable.

Anchor generation and positive/negative/ignore assignment live here too:
fine-tune workers need them, and keeping a reference implementation in the
engine lets tests exercise the assignment rules directly.
"""

from __future__ import annotations

import json
import math
import re
import shlex
import subprocess
import sys
import threading
from collections import deque
from dataclasses import dataclass, field
from queue import Empty, Queue
from typing import Mapping, Sequence

import numpy as np

from .core import BoundingBox, FrameSequence, Sample, SpecializedDataset, iou

POSITIVE = 1
NEGATIVE = 0
IGNORE = -1

DEFAULT_HYPER = {"momentum": 0.9, "weight_decay": 0.0005}

DEFAULT_TIMEOUT = 300.0  # seconds per request; fine-tuning is slow


# ---------------------------------------------------------------------------
# Anchors


@dataclass(frozen=True)
class Anchor:
    """A reference box on the sliding-window grid.

    Unlike BoundingBox, the corner may be negative and the far edge may
    pass the frame: anchors near the border keep their full geometry and
    carry cross_boundary so consumers can filter them if they want to.
    """

    u: int
    v: int
    w: int
    h: int
    cross_boundary: bool = False

    def __post_init__(self) -> None:
        if self.w <= 0 or self.h <= 0:
            raise ValueError(f"anchor size must be positive, got w={self.w}, h={self.h}")


@dataclass(frozen=True)
class AnchorSpec:
    """Sliding-window anchor shapes: h:w aspect ratios x pixel areas."""

    ratios: tuple[float, ...] = (2.0, 1.0, 0.5)
    areas: tuple[int, ...] = (128**2, 256**2, 512**2)
    stride: int = 16

    def __post_init__(self) -> None:
        if self.stride < 1:
            raise ValueError(f"stride must be >= 1, got {self.stride}")
        if not self.ratios or any(r <= 0 for r in self.ratios):
            raise ValueError("ratios must be a non-empty list of positive values")
        if not self.areas or any(a <= 0 for a in self.areas):
            raise ValueError("areas must be a non-empty list of positive values")

    @property
    def anchors_per_position(self) -> int:
        return len(self.ratios) * len(self.areas)


def generate_anchors(spec: AnchorSpec, image_w: int, image_h: int) -> list[Anchor]:
    """All anchors for an image: one per (grid position, ratio, area).

    Grid centers sit at stride/2 + i*stride; a ratio r (read h:w) and area
    A give h = round(sqrt(A*r)) and w = round(sqrt(A/r)). The corner is
    floor(center - side/2) computed in doubled coordinates so no float
    rounding is involved. Anchors are emitted row-major by position, then
    in (ratio, area) order.
    """
    shapes = []
    for ratio in spec.ratios:
        for area in spec.areas:
            h = round(math.sqrt(area * ratio))
            w = round(math.sqrt(area / ratio))
            shapes.append((w, h))

    stride = spec.stride
    anchors = []
    for gy in range(image_h // stride):
        cy2 = stride + 2 * gy * stride  # doubled y center
        for gx in range(image_w // stride):
            cx2 = stride + 2 * gx * stride
            for w, h in shapes:
                u = (cx2 - w) // 2
                v = (cy2 - h) // 2
                outside = u < 0 or v < 0 or u + w > image_w or v + h > image_h
                anchors.append(Anchor(u, v, w, h, cross_boundary=outside))
    return anchors


def assign_anchor_labels(
    anchors: Sequence,
    gt: Sequence,
    pos_thresh: float = 0.7,
    neg_thresh: float = 0.3,
) -> np.ndarray:
    """Label each anchor POSITIVE, NEGATIVE, or IGNORE against target boxes.

    An anchor is positive when its best IoU reaches pos_thresh, or when it
    is the best anchor for some target box (all ties included), so every
    box with at least one overlapping anchor recruits a positive. Anchors
    below neg_thresh are negative; the band in between is ignored. With no
    target boxes everything is negative.
    """
    if not 0.0 <= neg_thresh <= 1.0 or not 0.0 <= pos_thresh <= 1.0:
        raise ValueError("thresholds must lie in [0,1]")
    if pos_thresh <= neg_thresh:
        raise ValueError(
            f"pos_thresh must exceed neg_thresh, got {pos_thresh} <= {neg_thresh}"
        )
    labels = np.full(len(anchors), NEGATIVE, dtype=np.int64)
    if len(gt) == 0 or len(anchors) == 0:
        return labels

    ious = np.array([[iou(a, g) for g in gt] for a in anchors])
    best_per_anchor = ious.max(axis=1)
    labels[:] = IGNORE
    labels[best_per_anchor < neg_thresh] = NEGATIVE
    labels[best_per_anchor >= pos_thresh] = POSITIVE
    for j in range(len(gt)):
        column = ious[:, j]
        best = column.max()
        if best > 0.0:
            labels[column == best] = POSITIVE
    return labels


# ---------------------------------------------------------------------------
# Wire protocol client


class WorkerError(RuntimeError):
    """A detector worker failed: transport, protocol, or reported error."""

    def __init__(self, message: str, stderr_tail: str = ""):
        super().__init__(message)
        self.stderr_tail = stderr_tail

    def __str__(self) -> str:
        base = super().__str__()
        if self.stderr_tail:
            return f"{base}\n--- worker stderr tail ---\n{self.stderr_tail}"
        return base


class SubprocessWorker:
    """Client for a worker subprocess speaking the line protocol.

    Requests are strictly serialized; each gets a fresh id and the reply
    must echo it. Worker stderr is retained (last lines only) so failures
    can surface what the worker said before dying.
    """

    def __init__(self, cmd: str | Sequence[str], timeout: float = DEFAULT_TIMEOUT):
        argv = shlex.split(cmd) if isinstance(cmd, str) else list(cmd)
        self.timeout = timeout
        self._proc = subprocess.Popen(
            argv,
            stdin=subprocess.PIPE,
            stdout=subprocess.PIPE,
            stderr=subprocess.PIPE,
            text=True,
            bufsize=1,
        )
        self._lock = threading.Lock()
        self._next_id = 1
        self._lines: Queue = Queue()
        self._stderr: deque = deque(maxlen=40)
        threading.Thread(target=self._pump_stdout, daemon=True).start()
        threading.Thread(target=self._pump_stderr, daemon=True).start()

    def _pump_stdout(self) -> None:
        for line in self._proc.stdout:
            self._lines.put(line)
        self._lines.put(None)  # EOF marker

    def _pump_stderr(self) -> None:
        for line in self._proc.stderr:
            self._stderr.append(line.rstrip("\n"))

    @property
    def stderr_tail(self) -> str:
        return "\n".join(self._stderr)

    def request(self, payload: dict) -> dict:
        """Send one op and return the response dict (id stripped)."""
        with self._lock:
            rid = self._next_id
            self._next_id += 1
            message = {"id": rid, **payload}
            try:
                self._proc.stdin.write(json.dumps(message, separators=(",", ":")) + "\n")
                self._proc.stdin.flush()
            except (BrokenPipeError, OSError) as exc:
                raise WorkerError(f"worker pipe closed: {exc}", self.stderr_tail) from exc
            try:
                line = self._lines.get(timeout=self.timeout)
            except Empty:
                raise WorkerError(
                    f"worker response timed out after {self.timeout}s", self.stderr_tail
                ) from None
            if line is None:
                raise WorkerError("worker exited before responding", self.stderr_tail)
            try:
                response = json.loads(line)
            except json.JSONDecodeError as exc:
                raise WorkerError(
                    f"malformed worker response line: {line!r}", self.stderr_tail
                ) from exc
            if not isinstance(response, dict) or response.get("id") != rid:
                raise WorkerError(
                    f"worker response id mismatch (sent {rid}): {line!r}",
                    self.stderr_tail,
                )
            response.pop("id")
            return response

    def close(self) -> None:
        if self._proc.poll() is None:
            try:
                self._proc.stdin.close()
            except OSError:
                pass
            try:
                self._proc.wait(timeout=5)
            except subprocess.TimeoutExpired:
                self._proc.terminate()
                try:
                    self._proc.wait(timeout=5)
                except subprocess.TimeoutExpired:
                    self._proc.kill()
                    self._proc.wait()

    def __enter__(self) -> "SubprocessWorker":
        return self

    def __exit__(self, *exc_info) -> None:
        self.close()


# ---------------------------------------------------------------------------
# Handle and module-level operations


@dataclass(frozen=True)
class DetectorHandle:
    """An opaque reference to one parameter set held by a worker."""

    worker: object  # anything with request(dict) -> dict
    model_id: str


def _call(worker, payload: dict) -> dict:
    response = worker.request(payload)
    if not response.get("ok"):
        raise WorkerError(
            f"worker rejected {payload['op']!r}: {response.get('error', 'no message')}"
        )
    return response


def initialize(worker, model: str, labels: Sequence[str]) -> DetectorHandle:
    """Register a model with the worker and return its handle."""
    if not labels:
        raise ValueError("label space is empty")
    response = _call(worker, {"op": "init", "model": model, "labels": list(labels)})
    model_id = response.get("model_id")
    if not isinstance(model_id, str) or not model_id:
        raise WorkerError(f"init returned no usable model_id: {response!r}")
    return DetectorHandle(worker=worker, model_id=model_id)


def detect(
    handle: DetectorHandle, frames: FrameSequence, label_space: Sequence[str]
) -> list[Sample]:
    """Run the current model over frames and return validated samples.

    Box coordinates are clamped to the frame rectangle; scores outside
    [0,1], labels outside label_space, and boxes lying entirely off-frame
    are treated as protocol violations.
    """
    if len(frames) == 0:
        raise ValueError("frame sequence is empty")
    if not label_space:
        raise ValueError("label_space is empty; nothing to detect")
    response = _call(
        handle.worker,
        {
            "op": "detect",
            "model_id": handle.model_id,
            "frames": [e.path for e in frames.entries],
        },
    )
    rows = response.get("detections")
    if not isinstance(rows, list):
        raise WorkerError(f"detect response carries no detections list: {response!r}")
    allowed = set(label_space)
    return [_sample_from_row(row, frames, allowed) for row in rows]


def _is_int(x) -> bool:
    return isinstance(x, int) and not isinstance(x, bool)


def _sample_from_row(row, frames: FrameSequence, allowed: set) -> Sample:
    if not isinstance(row, (list, tuple)) or len(row) != 7:
        raise WorkerError(f"malformed detection row: {row!r}")
    frame_index, label, score, u, v, w, h = row
    if not _is_int(frame_index) or not 0 <= frame_index < len(frames):
        raise WorkerError(f"detection frame index out of range: {row!r}")
    if not isinstance(label, str) or label not in allowed:
        raise WorkerError(f"detection label outside the label space: {row!r}")
    if isinstance(score, bool) or not isinstance(score, (int, float)) or not 0 <= score <= 1:
        raise WorkerError(f"detection score outside [0,1]: {row!r}")
    if not all(_is_int(c) for c in (u, v, w, h)) or w < 1 or h < 1:
        raise WorkerError(f"detection box malformed: {row!r}")
    u0, v0 = max(u, 0), max(v, 0)
    u1, v1 = min(u + w, frames.width), min(v + h, frames.height)
    if u1 <= u0 or v1 <= v0:
        raise WorkerError(f"detection box lies outside the frame: {row!r}")
    return Sample(
        box=BoundingBox(u0, v0, u1 - u0, v1 - v0),
        label=label,
        score=float(score),
        frame=frames.entries[frame_index].frame_id,
    )


def finetune(
    handle: DetectorHandle,
    frames: FrameSequence,
    dataset: SpecializedDataset,
    hyper: Mapping | None = None,
) -> DetectorHandle:
    """Fine-tune on a specialized dataset; returns a fresh-model handle.

    Duplicate samples are passed through as-is (the dataset's duplication
    cap is the only bound on copies). Every sample must reference a frame
    present in the sequence.
    """
    if len(frames) == 0:
        raise ValueError("frame sequence is empty")
    if len(dataset) == 0:
        raise ValueError("specialized dataset is empty; nothing to train on")
    missing = sorted({s.frame for s in dataset.samples} - set(frames.frame_ids()))
    if missing:
        raise ValueError(f"dataset references frames not in the sequence: {missing}")
    rows = [
        [frames.position_of(s.frame), s.label, *s.box.as_tuple()]
        for s in dataset.samples
    ]
    response = _call(
        handle.worker,
        {
            "op": "finetune",
            "model_id": handle.model_id,
            "frames": [e.path for e in frames.entries],
            "samples": rows,
            "hyper": dict(DEFAULT_HYPER if hyper is None else hyper),
        },
    )
    new_id = response.get("model_id")
    if not isinstance(new_id, str) or not new_id or new_id == handle.model_id:
        raise WorkerError(f"fine-tune did not produce a fresh model_id: {response!r}")
    return DetectorHandle(worker=handle.worker, model_id=new_id)


# ---------------------------------------------------------------------------
# Mock detector


@dataclass(frozen=True)
class ScoreModel:
    """Uniform score ranges for true and false detections."""

    tp_low: float = 0.45
    tp_high: float = 0.95
    fp_low: float = 0.05
    fp_high: float = 0.5

    def __post_init__(self) -> None:
        for lo, hi in ((self.tp_low, self.tp_high), (self.fp_low, self.fp_high)):
            if not 0.0 <= lo <= hi <= 1.0:
                raise ValueError(f"score range must satisfy 0 <= low <= high <= 1, got [{lo}, {hi}]")


@dataclass(frozen=True)
class MockDetectorConfig:
    """Statistical stand-in for a real detector.

    Detection is simulated against known ground truth: each true box is
    emitted with probability equal to the model's effective recall, plus a
    Poisson number of false positives per frame at random positions.
    Fine-tuning stands for retraining the generic weights on the provided
    set, so the new model's effective recall is a function of that set
    alone: base_recall + recall_gain_per_coverage times the fraction of
    ground-truth boxes the set covers at IoU 0.5, clamped to [0,1]. All
    draws derive from (seed, model generation, frame id), so detection is
    reproducible regardless of batching.

    Frame paths must carry the frame id as the last digit run in the file
    name (e.g. frame_000012.png), which is how the sequence writer names
    them; the mock never reads pixels.
    """

    ground_truth: Mapping[int, Sequence[tuple[BoundingBox, str]]]
    frame_width: int
    frame_height: int
    base_recall: float = 0.4
    recall_gain_per_coverage: float = 0.5
    false_positive_rate: float = 1.0
    scores: ScoreModel = field(default_factory=ScoreModel)
    seed: int = 0

    def __post_init__(self) -> None:
        if not 0.0 <= self.base_recall <= 1.0:
            raise ValueError(f"base_recall must lie in [0,1], got {self.base_recall}")
        if self.recall_gain_per_coverage < 0:
            raise ValueError("recall_gain_per_coverage must be >= 0")
        if self.false_positive_rate < 0:
            raise ValueError("false_positive_rate must be >= 0")
        if self.frame_width < 1 or self.frame_height < 1:
            raise ValueError("frame dimensions must be positive")


def _frame_id_from_path(path: str) -> int:
    stem = path.rsplit("/", 1)[-1].rsplit(".", 1)[0]
    digits = re.findall(r"\d+", stem)
    if not digits:
        raise ValueError(f"cannot infer a frame id from path {path!r}")
    return int(digits[-1])


class MockDetector:
    """In-process worker simulating detect/finetune against known truth.

    Answers the same request dicts as a subprocess worker (minus the id
    envelope), so a DetectorHandle can hold either interchangeably. A lock
    serializes requests; the per-model effective recall registry is the
    only mutable state.
    """

    def __init__(self, config: MockDetectorConfig):
        self.config = config
        self._lock = threading.Lock()
        self._recall: dict[str, float] = {}
        self._generation: dict[str, int] = {}
        self._labels: list[str] = []
        self._next = 0

    def request(self, payload: dict) -> dict:
        op = payload.get("op")
        with self._lock:
            try:
                if op == "init":
                    return self._init(payload)
                if op == "detect":
                    return self._detect(payload)
                if op == "finetune":
                    return self._finetune(payload)
                raise ValueError(f"unknown op {op!r}")
            except Exception as exc:
                return {"ok": False, "error": str(exc)}

    def _register(self, recall: float) -> str:
        model_id = f"m{self._next}"
        self._recall[model_id] = recall
        self._generation[model_id] = self._next
        self._next += 1
        return model_id

    def _model_recall(self, payload: dict) -> tuple[str, float]:
        model_id = payload.get("model_id")
        if model_id not in self._recall:
            raise ValueError(f"unknown model_id {model_id!r}")
        return model_id, self._recall[model_id]

    def _init(self, payload: dict) -> dict:
        labels = payload.get("labels")
        if not isinstance(labels, list) or not labels:
            raise ValueError("init requires a non-empty labels list")
        self._labels = [str(x) for x in labels]
        return {"ok": True, "model_id": self._register(self.config.base_recall)}

    def _rng(self, model_id: str, frame_id: int) -> np.random.Generator:
        entropy = (self.config.seed, self._generation[model_id], frame_id)
        return np.random.Generator(np.random.PCG64(np.random.SeedSequence(entropy)))

    def _detect(self, payload: dict) -> dict:
        model_id, recall = self._model_recall(payload)
        frames = payload.get("frames")
        if not isinstance(frames, list) or not frames:
            raise ValueError("detect requires a non-empty frames list")
        cfg = self.config
        rows = []
        for frame_index, path in enumerate(frames):
            frame_id = _frame_id_from_path(str(path))
            rng = self._rng(model_id, frame_id)
            for box, label in cfg.ground_truth.get(frame_id, ()):
                if rng.random() < recall:
                    score = float(rng.uniform(cfg.scores.tp_low, cfg.scores.tp_high))
                    rows.append([frame_index, label, score, *box.as_tuple()])
            for _ in range(int(rng.poisson(cfg.false_positive_rate))):
                w = int(rng.integers(8, max(9, cfg.frame_width // 3)))
                h = int(rng.integers(8, max(9, cfg.frame_height // 3)))
                u = int(rng.integers(0, max(1, cfg.frame_width - w + 1)))
                v = int(rng.integers(0, max(1, cfg.frame_height - h + 1)))
                label = self._labels[int(rng.integers(len(self._labels)))]
                score = float(rng.uniform(cfg.scores.fp_low, cfg.scores.fp_high))
                rows.append([frame_index, label, score, u, v, w, h])
        return {"ok": True, "detections": rows}

    def _finetune(self, payload: dict) -> dict:
        self._model_recall(payload)  # the fine-tuned model must exist
        frames = payload.get("frames")
        samples = payload.get("samples")
        if not isinstance(frames, list) or not frames:
            raise ValueError("finetune requires a non-empty frames list")
        if not isinstance(samples, list) or not samples:
            raise ValueError("finetune requires a non-empty samples list")

        by_frame: dict[int, list[BoundingBox]] = {}
        for row in samples:
            frame_index, _label, u, v, w, h = row
            if not 0 <= frame_index < len(frames):
                raise ValueError(f"sample frame index out of range: {row!r}")
            frame_id = _frame_id_from_path(str(frames[frame_index]))
            by_frame.setdefault(frame_id, []).append(BoundingBox(u, v, w, h))

        # Coverage: fraction of true boxes (over the supplied frames) that
        # some training box hits at IoU >= 0.5, label ignored.
        total = 0
        matched = 0
        for path in frames:
            frame_id = _frame_id_from_path(str(path))
            candidates = by_frame.get(frame_id, [])
            for gt_box, _gt_label in self.config.ground_truth.get(frame_id, ()):
                total += 1
                if any(iou(gt_box, b) >= 0.5 for b in candidates):
                    matched += 1
        coverage = matched / total if total else 0.0

        new_recall = min(
            1.0,
            max(0.0, self.config.base_recall + self.config.recall_gain_per_coverage * coverage),
        )
        return {"ok": True, "model_id": self._register(new_recall)}


def serve_stdio(mock: MockDetector, stdin=None, stdout=None) -> None:
    """Serve the wire protocol over text streams until EOF.

    Every input line gets exactly one response line echoing its id; op
    failures come back as ok:false rather than killing the loop.
    """
    stdin = sys.stdin if stdin is None else stdin
    stdout = sys.stdout if stdout is None else stdout
    for line in stdin:
        line = line.strip()
        if not line:
            continue
        rid = None
        try:
            payload = json.loads(line)
            if not isinstance(payload, dict):
                raise ValueError("request must be a JSON object")
            rid = payload.pop("id", None)
            response = mock.request(payload)
        except Exception as exc:
            response = {"ok": False, "error": str(exc)}
        stdout.write(json.dumps({"id": rid, **response}, separators=(",", ":")) + "\n")
        stdout.flush()
