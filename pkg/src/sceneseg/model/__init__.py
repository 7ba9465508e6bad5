"""Desk-scale numpy implementation of the multi-modal scene segmentation network."""

from .config import FeatureBundle, ModelConfig, ModelWeights, read_bundle, write_bundle
from .fit import FitConfig, FitHistory, fit
from .layers import (
    cross_attention_fusion,
    heads_forward,
    mstcn_forward,
    receptive_radius,
    se_fusion,
    temporal_difference,
)
from .losses import loss_asl, loss_boundary_bce, loss_multiscale, loss_offset_smooth_l1
from .network import ForwardResult, forward
from .targets import RasterTargets, rasterize_targets

__all__ = [
    "FeatureBundle", "ModelConfig", "ModelWeights", "read_bundle", "write_bundle",
    "FitConfig", "FitHistory", "fit",
    "cross_attention_fusion", "heads_forward", "mstcn_forward", "receptive_radius", "se_fusion",
    "temporal_difference",
    "loss_asl", "loss_boundary_bce", "loss_multiscale", "loss_offset_smooth_l1",
    "ForwardResult", "forward", "RasterTargets", "rasterize_targets",
]
