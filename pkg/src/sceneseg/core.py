"""Domain types, taxonomy, interval arithmetic and annotation validation."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Iterable, Sequence

Interval = tuple[float, float]


class SceneSegError(Exception):
    """Base class for errors raised by this package."""


class InvalidIntervalError(SceneSegError, ValueError):
    pass


class TaxonomyError(SceneSegError, ValueError):
    pass


@dataclass(frozen=True)
class ClassLabel:
    id: int
    name: str
    group: int
    path: tuple[str, ...]
    exclusion_group: int | None = None


@dataclass(frozen=True)
class Taxonomy:
    """Three-group, up-to-three-level class hierarchy with dense class ids."""

    groups: tuple[str, ...]
    classes: tuple[ClassLabel, ...]

    def __post_init__(self):
        for i, c in enumerate(self.classes):
            if c.id != i:
                raise TaxonomyError(f"class ids must be dense 0..N-1, got id {c.id} at position {i}")
            if not 0 <= c.group < len(self.groups):
                raise TaxonomyError(f"class {c.id} ({c.name!r}) has unknown group {c.group}")
            if not 1 <= len(c.path) <= 3:
                raise TaxonomyError(f"class {c.id} ({c.name!r}) has path depth {len(c.path)}, expected 1..3")

    @property
    def num_classes(self) -> int:
        return len(self.classes)

    @property
    def group_sizes(self) -> tuple[int, ...]:
        sizes = [0] * len(self.groups)
        for c in self.classes:
            sizes[c.group] += 1
        return tuple(sizes)

    def is_valid_id(self, class_id: int) -> bool:
        return 0 <= class_id < len(self.classes)

    def to_dict(self) -> dict:
        classes = []
        for c in self.classes:
            d = {"id": c.id, "name": c.name, "group": c.group, "path": list(c.path)}
            if c.exclusion_group is not None:
                d["exclusion_group"] = c.exclusion_group
            classes.append(d)
        return {"schema_version": 1, "groups": list(self.groups), "classes": classes}

    @classmethod
    def from_dict(cls, doc: dict) -> "Taxonomy":
        try:
            groups = tuple(doc["groups"])
            classes = tuple(
                ClassLabel(
                    id=int(c["id"]),
                    name=str(c["name"]),
                    group=int(c["group"]),
                    path=tuple(c.get("path") or [c["name"]]),
                    exclusion_group=c.get("exclusion_group"),
                )
                for c in doc["classes"]
            )
        except (KeyError, TypeError, ValueError) as e:
            raise TaxonomyError(f"malformed taxonomy document: {e}") from e
        return cls(groups=groups, classes=classes)


def load_taxonomy(path: str | Path | None = None) -> Taxonomy:
    """Load a taxonomy JSON file, or the bundled 82-class default when `path` is None."""
    if path is None:
        text = resources.files("sceneseg").joinpath("data/default_taxonomy.json").read_text()
    else:
        text = Path(path).read_text()
    return Taxonomy.from_dict(json.loads(text))


def default_taxonomy() -> Taxonomy:
    return load_taxonomy(None)


def toy_taxonomy(num_classes: int, exclusion: dict[int, int] | None = None) -> Taxonomy:
    """Flat taxonomy with classes spread round-robin over the three default groups."""
    groups = ("presentation form", "style", "place")
    exclusion = exclusion or {}
    classes = tuple(
        ClassLabel(i, f"class_{i}", i % 3, (groups[i % 3], f"class_{i}"), exclusion.get(i))
        for i in range(num_classes)
    )
    return Taxonomy(groups=groups, classes=classes)


@dataclass(frozen=True)
class Scene:
    start_s: float
    end_s: float
    labels: frozenset[int]

    @property
    def duration(self) -> float:
        return self.end_s - self.start_s


@dataclass(frozen=True)
class VideoAnnotation:
    video_id: str
    duration_s: float
    scenes: tuple[Scene, ...]


@dataclass(frozen=True)
class PredictedScene:
    start_s: float
    end_s: float
    scores: dict[int, float] = field(default_factory=dict, hash=False)

    def score(self, class_id: int) -> float:
        return self.scores.get(class_id, 0.0)


@dataclass(frozen=True)
class PredictedSceneSet:
    video_id: str
    segments: tuple[PredictedScene, ...]

    def boundaries(self) -> list[float]:
        """Interior cut points: every segment start except the first."""
        return [s.start_s for s in self.segments[1:]]


def tiou(a: Interval, b: Interval) -> float:
    """Temporal intersection-over-union of two intervals."""
    if not a[1] > a[0] or not b[1] > b[0]:
        raise InvalidIntervalError(f"intervals must have positive length, got {a} and {b}")
    inter = min(a[1], b[1]) - max(a[0], b[0])
    if inter <= 0:
        return 0.0
    union = max(a[1], b[1]) - min(a[0], b[0])
    return inter / union


def internal_boundaries(ann: VideoAnnotation) -> list[float]:
    """Interior cut points of the scene partition (video start and end excluded)."""
    return [s.start_s for s in ann.scenes[1:]]


def perfect_predictions(ann: VideoAnnotation) -> PredictedSceneSet:
    """Ground-truth scenes as a submission, every GT label at score 1.0."""
    segs = tuple(PredictedScene(s.start_s, s.end_s, {c: 1.0 for c in sorted(s.labels)}) for s in ann.scenes)
    return PredictedSceneSet(ann.video_id, segs)


@dataclass(frozen=True)
class Violation:
    video_id: str
    kind: str
    detail: str

    def __str__(self) -> str:
        return f"{self.video_id}: {self.kind}: {self.detail}"


@dataclass
class ValidationReport:
    violations: list[Violation] = field(default_factory=list)

    @property
    def valid(self) -> bool:
        return not self.violations

    def kinds(self) -> list[str]:
        return [v.kind for v in self.violations]

    def extend(self, other: "ValidationReport") -> None:
        self.violations.extend(other.violations)

    def __len__(self) -> int:
        return len(self.violations)


def validate_annotation(ann: VideoAnnotation, tax: Taxonomy | None = None, tol: float = 0.0) -> ValidationReport:
    """Check partition structure, label ids and mutual exclusion; never raises.

    Boundary comparisons are exact unless `tol` > 0.
    """
    report = ValidationReport()

    def add(kind: str, detail: str) -> None:
        report.violations.append(Violation(ann.video_id, kind, detail))

    if not ann.duration_s > 0:
        add("duration", f"duration {ann.duration_s} is not positive")
    if not ann.scenes:
        add("empty", "video has no scenes")
        return report

    for i, s in enumerate(ann.scenes):
        if not s.end_s > s.start_s:
            add("non-positive", f"scene {i} [{s.start_s}, {s.end_s}] has non-positive length")
        if not s.labels:
            add("empty-labels", f"scene {i} [{s.start_s}, {s.end_s}] has no labels")
        if tax is not None:
            for c in sorted(s.labels):
                if not tax.is_valid_id(c):
                    add("unknown-label", f"scene {i} carries unknown class id {c}")

    if abs(ann.scenes[0].start_s) > tol:
        add("start", f"first scene starts at {ann.scenes[0].start_s}, expected 0")
    if abs(ann.scenes[-1].end_s - ann.duration_s) > tol:
        add("end", f"last scene ends at {ann.scenes[-1].end_s}, expected duration {ann.duration_s}")
    for i, (a, b) in enumerate(zip(ann.scenes, ann.scenes[1:])):
        if b.start_s - a.end_s > tol:
            add("gap", f"gap between scene {i} (ends {a.end_s}) and scene {i + 1} (starts {b.start_s})")
        elif a.end_s - b.start_s > tol:
            add("overlap", f"scene {i} (ends {a.end_s}) overlaps scene {i + 1} (starts {b.start_s})")

    if tax is not None:
        seen: dict[int, set[int]] = {}
        for s in ann.scenes:
            for c in s.labels:
                if tax.is_valid_id(c) and tax.classes[c].exclusion_group is not None:
                    seen.setdefault(tax.classes[c].exclusion_group, set()).add(c)
        for group, members in sorted(seen.items()):
            if len(members) > 1:
                names = ", ".join(tax.classes[c].name for c in sorted(members))
                add("mutual-exclusion", f"exclusion group {group} has {len(members)} classes in one video: {names}")
    return report


def validate_predictions(pset: PredictedSceneSet, tax: Taxonomy | None = None) -> ValidationReport:
    """Check a submission: positive lengths, sorted, non-overlapping, finite scores in [0, 1]."""
    report = ValidationReport()

    def add(kind: str, detail: str) -> None:
        report.violations.append(Violation(pset.video_id, kind, detail))

    for i, s in enumerate(pset.segments):
        if not s.end_s > s.start_s:
            add("non-positive", f"segment {i} [{s.start_s}, {s.end_s}] has non-positive length")
        for c, v in s.scores.items():
            if not (0.0 <= v <= 1.0):
                add("score-range", f"segment {i} class {c} score {v} outside [0, 1]")
            if tax is not None and not tax.is_valid_id(c):
                add("unknown-label", f"segment {i} scores unknown class id {c}")
    for i, (a, b) in enumerate(zip(pset.segments, pset.segments[1:])):
        if b.start_s < a.start_s:
            add("order", f"segment {i + 1} starts before segment {i}")
        elif b.start_s < a.end_s:
            add("overlap", f"segments {i} [{a.start_s}, {a.end_s}] and {i + 1} [{b.start_s}, {b.end_s}] overlap")
    return report


def make_annotation(video_id: str, cuts: Sequence[float], labels: Iterable[Iterable[int]], duration_s: float) -> VideoAnnotation:
    """Build a partition annotation from interior cut points and per-scene label sets."""
    edges = [0.0, *cuts, duration_s]
    labels = list(labels)
    if len(labels) != len(edges) - 1:
        raise ValueError(f"{len(edges) - 1} scenes but {len(labels)} label sets")
    scenes = tuple(Scene(float(a), float(b), frozenset(l)) for a, b, l in zip(edges, edges[1:], labels))
    return VideoAnnotation(video_id, float(duration_s), scenes)
