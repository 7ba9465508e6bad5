"""Annotation, prediction, shot and binary tensor file formats; shot snapping; corpus statistics.

JSON documents (``schema_version`` 1)::

    annotations.json  {"split": "val", "videos": [{"video_id", "duration",
                        "scenes": [{"start", "end", "labels": [int, ...]}]}]}
    predictions.json  {"videos": [{"video_id", "segments":
                        [{"start", "end", "scores": {"<class id>": float}}]}]}
    shots.json        {"videos": [{"video_id", "boundaries": [float, ...]}]}

Binary tensor container (little endian)::

    magic "SSGF" | version u16 | tag 10s | T u32 | D u32 | fps f64 | duration f64 | nblocks u32
    then ``nblocks`` float32 blocks, row-major.

Feature files hold one T x D block. Frame-output files use D = C and hold three
blocks: label scores (T x C), boundary probability (T), boundary offsets (T).
"""

from __future__ import annotations

import io
import json
import logging
import math
import struct
from bisect import bisect_left
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .core import (
    PredictedScene,
    PredictedSceneSet,
    Scene,
    SceneSegError,
    Taxonomy,
    VideoAnnotation,
    Violation,
    internal_boundaries,
    validate_annotation,
    validate_predictions,
)

log = logging.getLogger(__name__)

SCHEMA_VERSION = 1
TIME_DECIMALS = 6
SPLIT_NAMES = ("train", "val", "test")


class ParseError(SceneSegError, ValueError):
    pass


class AnnotationValidationError(SceneSegError, ValueError):
    def __init__(self, video_id: str, violations):
        self.video_id = video_id
        self.violations = list(violations)
        super().__init__(f"video {video_id!r}: " + "; ".join(f"{v.kind}: {v.detail}" for v in self.violations))


class PredictionRejected(ParseError):
    def __init__(self, video_id: str, violations):
        self.video_id = video_id
        self.violations = list(violations)
        super().__init__(f"predictions for video {video_id!r} rejected: " + "; ".join(v.detail for v in self.violations))


@dataclass(frozen=True)
class ShotBoundarySet:
    video_id: str
    boundaries: tuple[float, ...]


@dataclass(frozen=True)
class DatasetSplit:
    name: str
    annotations: tuple[VideoAnnotation, ...]

    def __post_init__(self):
        ids = [a.video_id for a in self.annotations]
        dup = [k for k, n in Counter(ids).items() if n > 1]
        if dup:
            raise ParseError(f"duplicate video ids in split {self.name!r}: {sorted(dup)}")

    def by_id(self) -> dict[str, VideoAnnotation]:
        return {a.video_id: a for a in self.annotations}

    def __len__(self) -> int:
        return len(self.annotations)


def _t(x: float) -> float:
    return round(float(x), TIME_DECIMALS)


def _load_json(document: bytes | str) -> dict:
    try:
        doc = json.loads(document)
    except json.JSONDecodeError as e:
        raise ParseError(f"invalid JSON at line {e.lineno}, column {e.colno}: {e.msg}") from e
    if not isinstance(doc, dict) or not isinstance(doc.get("videos"), list):
        raise ParseError("document must be an object with a 'videos' list")
    return doc


def _number(value, where: str) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ParseError(f"{where}: expected a number, got {value!r}")
    return float(value)


def _dumps(doc: dict) -> str:
    return json.dumps(doc, indent=1, sort_keys=True) + "\n"


# ---------------------------------------------------------------------------
# annotations


def parse_annotations(document: bytes | str, tax: Taxonomy | None = None, name: str | None = None,
                      strict: bool = True) -> DatasetSplit:
    """Parse an annotations document; every video is checked for partition structure and label ids.

    With ``strict=False`` only the document shape is checked, so a linter can
    report every violation instead of stopping at the first bad video.
    """
    doc = _load_json(document)
    split_name = name or doc.get("split", "test")
    annotations = []
    for i, v in enumerate(doc["videos"]):
        where = f"videos[{i}]"
        try:
            video_id = str(v["video_id"])
            duration = _number(v["duration"], f"{where}.duration")
            scenes = []
            for j, s in enumerate(v["scenes"]):
                labels = s["labels"]
                if not isinstance(labels, list) or not all(isinstance(c, int) and not isinstance(c, bool) for c in labels):
                    raise ParseError(f"{where}.scenes[{j}].labels: expected a list of integers")
                scenes.append(Scene(_number(s["start"], f"{where}.scenes[{j}].start"),
                                    _number(s["end"], f"{where}.scenes[{j}].end"), frozenset(labels)))
        except (KeyError, TypeError) as e:
            raise ParseError(f"{where}: missing or malformed field {e}") from e
        ann = VideoAnnotation(video_id, duration, tuple(sorted(scenes, key=lambda s: s.start_s)))
        if not strict:
            annotations.append(ann)
            continue
        report = validate_annotation(ann, tax)
        structural = [x for x in report.violations if x.kind != "mutual-exclusion"]
        if tax is None:
            structural += [Violation(video_id, "unknown-label", f"negative class id in scene starting at {s.start_s}")
                           for s in ann.scenes if any(c < 0 for c in s.labels)]
        if structural:
            raise AnnotationValidationError(video_id, structural)
        annotations.append(ann)
    return DatasetSplit(split_name, tuple(annotations))


def serialize_annotations(split: DatasetSplit) -> str:
    videos = [
        {
            "video_id": a.video_id,
            "duration": _t(a.duration_s),
            "scenes": [{"start": _t(s.start_s), "end": _t(s.end_s), "labels": sorted(s.labels)} for s in a.scenes],
        }
        for a in split.annotations
    ]
    return _dumps({"schema_version": SCHEMA_VERSION, "split": split.name, "videos": videos})


# ---------------------------------------------------------------------------
# predictions


def parse_predictions(document: bytes | str, tax: Taxonomy | None = None) -> list[PredictedSceneSet]:
    """Parse a predictions document, rejecting overlapping segments and out-of-range scores.

    Segments are sorted by start time before the overlap check; an absent class means score 0.
    """
    doc = _load_json(document)
    out = []
    seen = set()
    for i, v in enumerate(doc["videos"]):
        where = f"videos[{i}]"
        try:
            video_id = str(v["video_id"])
            segs = []
            for j, s in enumerate(v["segments"]):
                scores = {}
                for k, val in (s.get("scores") or {}).items():
                    try:
                        c = int(k)
                    except ValueError as e:
                        raise ParseError(f"{where}.segments[{j}].scores: class key {k!r} is not an integer") from e
                    val = _number(val, f"{where}.segments[{j}].scores[{k}]")
                    if not math.isfinite(val):
                        raise PredictionRejected(video_id, [Violation(video_id, "score-range", f"segment {j} class {c} score {val} is not finite")])
                    scores[c] = val
                segs.append(PredictedScene(_number(s["start"], f"{where}.segments[{j}].start"),
                                           _number(s["end"], f"{where}.segments[{j}].end"), scores))
        except (KeyError, TypeError, AttributeError) as e:
            raise ParseError(f"{where}: missing or malformed field {e}") from e
        if video_id in seen:
            raise ParseError(f"{where}: duplicate video id {video_id!r}")
        seen.add(video_id)
        pset = PredictedSceneSet(video_id, tuple(sorted(segs, key=lambda s: (s.start_s, s.end_s))))
        report = validate_predictions(pset, tax)
        if not report.valid:
            raise PredictionRejected(video_id, report.violations)
        out.append(pset)
    return out


def serialize_predictions(preds: Iterable[PredictedSceneSet], drop_zero: bool = True) -> str:
    videos = []
    for p in preds:
        segs = []
        for s in p.segments:
            scores = {str(c): float(v) for c, v in sorted(s.scores.items()) if not (drop_zero and v == 0.0)}
            segs.append({"start": _t(s.start_s), "end": _t(s.end_s), "scores": scores})
        videos.append({"video_id": p.video_id, "segments": segs})
    return _dumps({"schema_version": SCHEMA_VERSION, "videos": videos})


# ---------------------------------------------------------------------------
# shots


def parse_shots(document: bytes | str) -> dict[str, ShotBoundarySet]:
    doc = _load_json(document)
    out = {}
    for i, v in enumerate(doc["videos"]):
        try:
            bounds = tuple(_number(b, f"videos[{i}].boundaries") for b in v["boundaries"])
            video_id = str(v["video_id"])
        except (KeyError, TypeError) as e:
            raise ParseError(f"videos[{i}]: missing or malformed field {e}") from e
        if any(b2 <= b1 for b1, b2 in zip(bounds, bounds[1:])):
            raise ParseError(f"videos[{i}] ({video_id}): shot boundaries must be strictly increasing")
        out[video_id] = ShotBoundarySet(video_id, bounds)
    return out


def serialize_shots(shots: Iterable[ShotBoundarySet]) -> str:
    videos = [{"video_id": s.video_id, "boundaries": [_t(b) for b in s.boundaries]} for s in shots]
    return _dumps({"schema_version": SCHEMA_VERSION, "videos": videos})


# ---------------------------------------------------------------------------
# shot snapping


@dataclass(frozen=True)
class SnapMove:
    index: int          # interior boundary index (0-based)
    old_s: float
    new_s: float
    shot_s: float
    applied: bool


def _nearest(sorted_vals: Sequence[float], x: float) -> float | None:
    if not sorted_vals:
        return None
    i = bisect_left(sorted_vals, x)
    cands = [sorted_vals[j] for j in (i - 1, i) if 0 <= j < len(sorted_vals)]
    # earlier shot wins ties
    return min(cands, key=lambda s: (abs(s - x), s))


def plan_snaps(ann: VideoAnnotation, shots: ShotBoundarySet, eps_s: float = 0.1) -> list[SnapMove]:
    """Boundaries within `eps_s` of a shot cut, with whether the move keeps the partition valid.

    One left-to-right pass; a move is applied only if the new time stays strictly
    between the (already updated) left neighbour and the current right neighbour.
    """
    if not eps_s > 0:
        raise ValueError(f"eps_s must be positive, got {eps_s}")
    cuts = internal_boundaries(ann)
    vals = sorted(shots.boundaries)
    moves = []
    current = list(cuts)
    for i, b in enumerate(cuts):
        s = _nearest(vals, b)
        if s is None or s == b or abs(s - b) > eps_s + 1e-9:
            continue
        left = current[i - 1] if i > 0 else 0.0
        right = current[i + 1] if i + 1 < len(current) else ann.duration_s
        ok = left < s < right
        if ok:
            current[i] = s
        else:
            log.warning("%s: snapping boundary %.3f to shot %.3f would collapse a scene; left unchanged",
                        ann.video_id, b, s)
        moves.append(SnapMove(i, b, s if ok else b, s, ok))
    return moves


def _apply(ann: VideoAnnotation, cuts: Sequence[float]) -> VideoAnnotation:
    edges = [ann.scenes[0].start_s, *cuts, ann.scenes[-1].end_s]
    scenes = tuple(Scene(a, b, s.labels) for a, b, s in zip(edges, edges[1:], ann.scenes))
    return VideoAnnotation(ann.video_id, ann.duration_s, scenes)


def snap_to_shots(ann: VideoAnnotation, shots: ShotBoundarySet, eps_s: float = 0.1) -> VideoAnnotation:
    """Replace each scene boundary by the nearest shot cut when they are within `eps_s`.

    Passes repeat until nothing moves, so the result is a fixed point (idempotent).
    A boundary moves at most once, to a shot within `eps_s` of its original time.
    """
    out = ann
    for _ in range(len(ann.scenes) + 1):
        moves = [m for m in plan_snaps(out, shots, eps_s) if m.applied]
        if not moves:
            break
        cuts = internal_boundaries(out)
        for m in moves:
            cuts[m.index] = m.new_s
        out = _apply(out, cuts)
    return out


# ---------------------------------------------------------------------------
# statistics


@dataclass
class StatsReport:
    num_videos: int
    num_scenes: int
    class_counts: np.ndarray
    scenes_per_video: dict[int, int]
    duration_hist: tuple[np.ndarray, np.ndarray]
    mean_duration_s: float
    mean_labels_per_scene: float
    class_names: list[str] = field(default_factory=list)

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write("class_id,name,scene_count\n")
        for i, n in enumerate(self.class_counts):
            name = self.class_names[i] if i < len(self.class_names) else ""
            buf.write(f"{i},{name},{int(n)}\n")
        return buf.getvalue()

    def to_text(self) -> str:
        lines = [
            f"videos               {self.num_videos}",
            f"scenes               {self.num_scenes}",
            f"mean duration (s)    {self.mean_duration_s:.2f}",
            f"mean labels / scene  {self.mean_labels_per_scene:.3f}",
            "scenes per video:",
        ]
        lines += [f"  {k:>3}: {v}" for k, v in sorted(self.scenes_per_video.items())]
        counts, edges = self.duration_hist
        lines.append("duration histogram (s):")
        lines += [f"  [{a:5.1f}, {b:5.1f}): {int(n)}" for a, b, n in zip(edges, edges[1:], counts)]
        order = np.argsort(-self.class_counts, kind="stable")
        lines.append("classes by scene count:")
        for i in order:
            name = self.class_names[i] if i < len(self.class_names) else str(i)
            lines.append(f"  {int(self.class_counts[i]):6d}  {name}")
        return "\n".join(lines) + "\n"


def dataset_stats(split: DatasetSplit, tax: Taxonomy, bin_s: float = 5.0) -> StatsReport:
    counts = np.zeros(tax.num_classes, dtype=np.int64)
    per_video = Counter()
    n_labels = 0
    n_scenes = 0
    for a in split.annotations:
        per_video[len(a.scenes)] += 1
        for s in a.scenes:
            n_scenes += 1
            n_labels += len(s.labels)
            for c in s.labels:
                counts[c] += 1
    durations = np.array([a.duration_s for a in split.annotations], dtype=float)
    top = bin_s * max(1, math.ceil(durations.max() / bin_s)) if durations.size else bin_s
    hist = np.histogram(durations, bins=np.arange(0.0, top + bin_s / 2, bin_s))
    return StatsReport(
        num_videos=len(split),
        num_scenes=n_scenes,
        class_counts=counts,
        scenes_per_video=dict(per_video),
        duration_hist=hist,
        mean_duration_s=float(durations.mean()) if durations.size else 0.0,
        mean_labels_per_scene=n_labels / n_scenes if n_scenes else 0.0,
        class_names=[c.name for c in tax.classes],
    )


# ---------------------------------------------------------------------------
# binary tensor container

_MAGIC = b"SSGF"
_HEADER = struct.Struct("<4sH10sIIddI")


@dataclass
class Container:
    tag: str
    fps: float
    duration_s: float
    blocks: list[np.ndarray]

    @property
    def shape(self) -> tuple[int, int]:
        b = self.blocks[0]
        return (b.shape[0], b.shape[1] if b.ndim > 1 else 1)


def write_container(path: str | Path, tag: str, blocks: Sequence[np.ndarray], fps: float, duration_s: float = 0.0) -> None:
    blocks = [np.asarray(b, dtype="<f4") for b in blocks]
    T = blocks[0].shape[0]
    D = blocks[0].shape[1] if blocks[0].ndim > 1 else 1
    if any(b.shape[0] != T for b in blocks):
        raise ValueError("all blocks must share the leading dimension T")
    tag_b = tag.encode("ascii")
    if len(tag_b) > 10:
        raise ValueError(f"tag {tag!r} longer than 10 bytes")
    with open(path, "wb") as f:
        f.write(_HEADER.pack(_MAGIC, 1, tag_b, T, D, float(fps), float(duration_s), len(blocks)))
        for b in blocks:
            f.write(np.ascontiguousarray(b).tobytes())


def read_container(path: str | Path, block_widths: Sequence[int | None] | None = None) -> Container:
    """Read a container; `block_widths` gives each block's column count.

    ``None``, as the whole argument or as an entry, stands for the header width D.
    """
    data = Path(path).read_bytes()
    if len(data) < _HEADER.size:
        raise ParseError(f"{path}: truncated header")
    magic, version, tag, T, D, fps, duration, nblocks = _HEADER.unpack_from(data)
    if magic != _MAGIC or version != 1:
        raise ParseError(f"{path}: not a tensor container (magic {magic!r}, version {version})")
    widths = [D if w is None else w for w in block_widths] if block_widths is not None else [D] * nblocks
    if len(widths) != nblocks:
        raise ParseError(f"{path}: expected {len(widths)} blocks, file has {nblocks}")
    expected = _HEADER.size + 4 * T * sum(widths)
    if len(data) != expected:
        raise ParseError(f"{path}: size {len(data)} bytes, expected {expected}")
    blocks = []
    off = _HEADER.size
    for w in widths:
        arr = np.frombuffer(data, dtype="<f4", count=T * w, offset=off).astype(np.float64)
        blocks.append(arr.reshape(T, w) if w == D else arr)
        off += 4 * T * w
    return Container(tag.rstrip(b"\0").decode("ascii"), fps, duration, blocks)


def write_features(path: str | Path, features: np.ndarray, fps: float, modality: str) -> None:
    write_container(path, modality, [np.atleast_2d(features)], fps)


def read_features(path: str | Path) -> tuple[np.ndarray, float, str]:
    c = read_container(path)
    x = c.blocks[0]
    return (x if x.ndim == 2 else x[:, None]), c.fps, c.tag
