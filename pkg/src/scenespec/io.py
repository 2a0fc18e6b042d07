"""Dataset ingestion, annotation files, and the synthetic scene generator.

Frame sequences live on disk as PNG files plus a JSON manifest:

    {"width": 320, "height": 240,
     "frames": [{"id": 0, "path": "frame_000000.png"}, ...]}

Annotations and detections share one schema (detections add "score"):

    {"labels": ["car", ...],
     "frames": [{"frame": 0,
                 "objects": [{"label": "car", "u": 1, "v": 2,
                              "w": 3, "h": 4}, ...]}, ...]}

All JSON artifacts are written atomically (temp file, then rename) with
sorted keys, so identical runs produce byte-identical files.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np
from PIL import Image, UnidentifiedImageError

from .background import ForegroundMask
from .core import BoundingBox, FrameEntry, FrameSequence, Sample


def default_run_root() -> Path:
    """Output root for run directories; SMC_RUN_DIR overrides ./run."""
    return Path(os.environ.get("SMC_RUN_DIR", "run"))


def write_json(path, obj) -> None:
    """Serialize deterministically and rename into place."""
    path = Path(path)
    text = json.dumps(obj, indent=2, sort_keys=True) + "\n"
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(text, encoding="utf-8")
    os.replace(tmp, path)


def write_text(path, text: str) -> None:
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(text, encoding="utf-8")
    os.replace(tmp, path)


def _read_json(path) -> dict:
    path = Path(path)
    try:
        data = json.loads(path.read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise ValueError(f"file not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise ValueError(f"invalid JSON in {path}: {exc}") from exc
    if not isinstance(data, dict):
        raise ValueError(f"expected a JSON object at the top of {path}")
    return data


# ---------------------------------------------------------------------------
# Sequence manifests


def load_sequence(manifest_path) -> FrameSequence:
    """Load a manifest, verify every frame exists at the declared size.

    Paths in the manifest are taken relative to the manifest's directory
    and stored absolute, since they travel over the detector wire.
    """
    manifest_path = Path(manifest_path)
    data = _read_json(manifest_path)
    for key in ("width", "height", "frames"):
        if key not in data:
            raise ValueError(f"manifest {manifest_path} is missing {key!r}")
    width, height = data["width"], data["height"]
    root = manifest_path.parent
    entries = []
    for item in data["frames"]:
        frame_id, rel = item["id"], item["path"]
        path = Path(rel)
        if not path.is_absolute():
            path = root / path
        if not path.is_file():
            raise ValueError(f"frame file missing: {path}")
        try:
            with Image.open(path) as im:
                size = im.size
        except UnidentifiedImageError as exc:
            raise ValueError(f"cannot decode frame {path}: {exc}") from exc
        if size != (width, height):
            raise ValueError(
                f"frame {path} is {size[0]}x{size[1]}, manifest declares {width}x{height}"
            )
        entries.append(FrameEntry(frame_id=frame_id, path=str(path.resolve())))
    return FrameSequence(entries=tuple(entries), width=width, height=height)


def load_image(path) -> np.ndarray:
    """Read one frame as a grayscale uint8 array of shape (height, width)."""
    try:
        with Image.open(path) as im:
            return np.asarray(im.convert("L"), dtype=np.uint8)
    except (FileNotFoundError, UnidentifiedImageError) as exc:
        raise ValueError(f"cannot load image {path}: {exc}") from exc


def save_masks(masks: Mapping[int, ForegroundMask], directory) -> None:
    """Dump masks as black/white PNGs named mask_<frame id>.png."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    for frame_id in sorted(masks):
        arr = masks[frame_id].bits.astype(np.uint8) * 255
        Image.fromarray(arr, mode="L").save(directory / f"mask_{frame_id:06d}.png")


def uniform_subsample(seq: FrameSequence, count: int) -> FrameSequence:
    """Pick count frames at evenly spaced positions, endpoints included.

    Position i maps to round(i*(L-1)/(count-1)) with exact halves rounded
    down; the arithmetic stays in integers so every implementation of this
    rule agrees. count = 1 keeps the first frame.
    """
    length = len(seq)
    if not 1 <= count <= length:
        raise ValueError(f"count must lie in [1, {length}], got {count}")
    if count == 1:
        return FrameSequence(seq.entries[:1], seq.width, seq.height)
    q = count - 1
    picked = []
    for i in range(count):
        p = i * (length - 1)
        index = -(-(2 * p - q) // (2 * q))  # ceil((2p-q)/(2q)) = round-half-down(p/q)
        picked.append(seq.entries[index])
    return FrameSequence(tuple(picked), seq.width, seq.height)


# ---------------------------------------------------------------------------
# Annotation and detection files


def _object_entry(box: BoundingBox, label: str) -> dict:
    return {"label": label, "u": box.u, "v": box.v, "w": box.w, "h": box.h}


def _parse_box(obj: Mapping, path, frame) -> BoundingBox:
    try:
        return BoundingBox(obj["u"], obj["v"], obj["w"], obj["h"])
    except (KeyError, ValueError) as exc:
        raise ValueError(f"bad box in {path}, frame {frame}: {exc}") from exc


def save_annotations(path, annotations: Mapping[int, Sequence[tuple[BoundingBox, str]]]) -> None:
    labels = sorted({label for objs in annotations.values() for _, label in objs})
    frames = [
        {
            "frame": frame,
            "objects": [_object_entry(box, label) for box, label in annotations[frame]],
        }
        for frame in sorted(annotations)
    ]
    write_json(path, {"labels": labels, "frames": frames})


def load_annotations(path) -> dict[int, list[tuple[BoundingBox, str]]]:
    """Ground-truth boxes per frame id; labels checked against the declared list."""
    data = _read_json(path)
    declared = data.get("labels")
    out: dict[int, list[tuple[BoundingBox, str]]] = {}
    for entry in data.get("frames", []):
        frame = entry["frame"]
        objects = []
        for obj in entry.get("objects", []):
            label = obj["label"]
            if declared is not None and label not in declared:
                raise ValueError(
                    f"label {label!r} in {path} is not in the declared label space"
                )
            objects.append((_parse_box(obj, path, frame), label))
        out[frame] = objects
    return out


def save_detections(path, samples: Iterable[Sample]) -> None:
    by_frame: dict[int, list[Sample]] = {}
    for s in samples:
        by_frame.setdefault(s.frame, []).append(s)
    labels = sorted({s.label for group in by_frame.values() for s in group})
    frames = [
        {
            "frame": frame,
            "objects": [
                dict(_object_entry(s.box, s.label), score=s.score)
                for s in by_frame[frame]
            ],
        }
        for frame in sorted(by_frame)
    ]
    write_json(path, {"labels": labels, "frames": frames})


def load_detections(path) -> list[Sample]:
    data = _read_json(path)
    declared = data.get("labels")
    out = []
    for entry in data.get("frames", []):
        frame = entry["frame"]
        for obj in entry.get("objects", []):
            label = obj["label"]
            if declared is not None and label not in declared:
                raise ValueError(
                    f"label {label!r} in {path} is not in the declared label space"
                )
            if "score" not in obj:
                raise ValueError(f"detection in {path}, frame {frame} has no score")
            out.append(
                Sample(
                    box=_parse_box(obj, path, frame),
                    label=label,
                    score=obj["score"],
                    frame=frame,
                )
            )
    return out


# ---------------------------------------------------------------------------
# Synthetic scenes


@dataclass(frozen=True)
class ObjectTemplate:
    """One class of moving rectangles: size range, fill intensity, count."""

    label: str
    count: int = 1
    min_size: int = 16
    max_size: int = 32
    intensity: int = 180

    def __post_init__(self) -> None:
        if self.count < 0:
            raise ValueError("count must be >= 0")
        if not 1 <= self.min_size <= self.max_size:
            raise ValueError("size range must satisfy 1 <= min_size <= max_size")
        if not 0 <= self.intensity <= 255:
            raise ValueError("intensity must be a uint8 value")


DEFAULT_TEMPLATES = (
    ObjectTemplate(label="car", count=2, min_size=24, max_size=40, intensity=205),
    ObjectTemplate(label="pedestrian", count=2, min_size=14, max_size=20, intensity=150),
    ObjectTemplate(label="cyclist", count=1, min_size=18, max_size=26, intensity=235),
)


@dataclass(frozen=True)
class SynthSceneConfig:
    """A fixed camera over a noisy plate with constant-velocity rectangles.

    The background plate is seeded noise in [40, 90); object intensities
    should sit well above that so foreground separation is clean. Each
    object gets an integer velocity with per-axis magnitude ranges and a
    random sign; starting positions are chosen so the whole trajectory
    stays inside the frame, and a configuration whose objects cannot fit
    for the full sequence is rejected up front.
    """

    width: int = 320
    height: int = 240
    frame_count: int = 200
    templates: tuple[ObjectTemplate, ...] = DEFAULT_TEMPLATES
    speed_x: tuple[int, int] = (1, 1)
    speed_y: tuple[int, int] = (0, 0)
    texture_seed: int = 7
    seed: int = 0

    def __post_init__(self) -> None:
        if self.width < 1 or self.height < 1:
            raise ValueError("frame dimensions must be positive")
        if self.frame_count < 1:
            raise ValueError("frame_count must be >= 1")
        for name, (lo, hi) in (("speed_x", self.speed_x), ("speed_y", self.speed_y)):
            if not 0 <= lo <= hi:
                raise ValueError(f"{name} range must satisfy 0 <= min <= max")
        span = self.frame_count - 1
        for t in self.templates:
            need_w = t.max_size + self.speed_x[1] * span
            need_h = t.max_size + self.speed_y[1] * span
            if need_w > self.width or need_h > self.height:
                raise ValueError(
                    f"object {t.label!r} cannot fit: worst-case trajectory needs "
                    f"{need_w}x{need_h} inside {self.width}x{self.height}"
                )

    @staticmethod
    def from_dict(data: Mapping) -> "SynthSceneConfig":
        templates = tuple(
            ObjectTemplate(**t) for t in data.get("templates", [])
        ) or DEFAULT_TEMPLATES
        fields = {k: data[k] for k in (
            "width", "height", "frame_count", "texture_seed", "seed"
        ) if k in data}
        for k in ("speed_x", "speed_y"):
            if k in data:
                fields[k] = tuple(data[k])
        return SynthSceneConfig(templates=templates, **fields)


@dataclass(frozen=True)
class _Trajectory:
    label: str
    box0: BoundingBox
    velocity: tuple[int, int]
    intensity: int

    def at(self, t: int) -> BoundingBox:
        return BoundingBox(
            self.box0.u + self.velocity[0] * t,
            self.box0.v + self.velocity[1] * t,
            self.box0.w,
            self.box0.h,
        )


def _signed_speed(rng: np.random.Generator, lo: int, hi: int) -> int:
    speed = int(rng.integers(lo, hi + 1))
    if speed and rng.random() < 0.5:
        speed = -speed
    return speed


def _start_range(extent: int, size: int, velocity: int, span: int) -> tuple[int, int]:
    """Inclusive range of start coordinates keeping the box inside for all t."""
    lo, hi = 0, extent - size
    if velocity > 0:
        hi -= velocity * span
    elif velocity < 0:
        lo -= velocity * span
    return lo, hi


def generate_synthetic_scene(config: SynthSceneConfig, out_dir):
    """Render the scene to out_dir and return (sequence, annotations).

    Writes frame_<id>.png per frame plus manifest.json and
    annotations.json. Ground truth is emitted from the same trajectory
    objects that drive rendering, so a box at frame t is exactly the
    rectangle painted at frame t.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence(config.seed)))
    plate_rng = np.random.Generator(
        np.random.PCG64(np.random.SeedSequence(config.texture_seed))
    )
    plate = plate_rng.integers(40, 90, size=(config.height, config.width), dtype=np.uint8)

    span = config.frame_count - 1
    trajectories = []
    for template in config.templates:
        for _ in range(template.count):
            w = int(rng.integers(template.min_size, template.max_size + 1))
            h = int(rng.integers(template.min_size, template.max_size + 1))
            vx = _signed_speed(rng, *config.speed_x)
            vy = _signed_speed(rng, *config.speed_y)
            ulo, uhi = _start_range(config.width, w, vx, span)
            vlo, vhi = _start_range(config.height, h, vy, span)
            u0 = int(rng.integers(ulo, uhi + 1))
            v0 = int(rng.integers(vlo, vhi + 1))
            trajectories.append(
                _Trajectory(template.label, BoundingBox(u0, v0, w, h), (vx, vy), template.intensity)
            )

    entries = []
    annotations: dict[int, list[tuple[BoundingBox, str]]] = {}
    for t in range(config.frame_count):
        frame = plate.copy()
        objects = []
        for traj in trajectories:
            box = traj.at(t)
            frame[box.v : box.bottom, box.u : box.right] = traj.intensity
            objects.append((box, traj.label))
        name = f"frame_{t:06d}.png"
        Image.fromarray(frame, mode="L").save(out_dir / name)
        entries.append({"id": t, "path": name})
        annotations[t] = objects

    write_json(
        out_dir / "manifest.json",
        {"width": config.width, "height": config.height, "frames": entries},
    )
    save_annotations(out_dir / "annotations.json", annotations)
    sequence = load_sequence(out_dir / "manifest.json")
    return sequence, annotations
