"""Multi-label temporal scene segmentation toolkit: data model, metrics, decoding, model and synthetic data."""

from .annotation_io import (
    DatasetSplit,
    ShotBoundarySet,
    dataset_stats,
    parse_annotations,
    parse_predictions,
    parse_shots,
    serialize_annotations,
    serialize_predictions,
    serialize_shots,
    snap_to_shots,
)
from .core import (
    ClassLabel,
    PredictedScene,
    PredictedSceneSet,
    Scene,
    Taxonomy,
    VideoAnnotation,
    default_taxonomy,
    internal_boundaries,
    load_taxonomy,
    tiou,
    validate_annotation,
)
from .decode import (
    FrameOutputs,
    framewise_threshold_decode,
    label_segments,
    pick_boundaries,
    segments_from_boundaries,
)
from .metrics import avg_f1, avg_map, boundary_match, evaluate

__version__ = "0.1.0"
