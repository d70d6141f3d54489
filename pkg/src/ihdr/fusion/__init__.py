"""Fusion network, training machinery, baseline fuser, and MAC accounting."""

from ihdr.fusion.autodiff import NanError, Tensor, backward, set_nan_guard
from ihdr.fusion.baseline import baseline_fuse, well_exposedness
from ihdr.fusion.blocks import ScatParams, init_scat_params, mdta_attention, scat_attention
from ihdr.fusion.checkpoint import load_model, save_model
from ihdr.fusion.macs import MacReport, attention_macs, conv_macs, count_macs, depthwise_macs
from ihdr.fusion.network import FusionConfig, FusionModel, dihdr_forward
from ihdr.fusion.training import (
    AdamW,
    TrainConfig,
    TrainResult,
    TrainingDiverged,
    cosine_lr,
    gradient,
    loss,
    train,
)

__all__ = [
    "AdamW",
    "FusionConfig",
    "FusionModel",
    "MacReport",
    "NanError",
    "ScatParams",
    "Tensor",
    "TrainConfig",
    "TrainResult",
    "TrainingDiverged",
    "attention_macs",
    "backward",
    "baseline_fuse",
    "conv_macs",
    "cosine_lr",
    "count_macs",
    "depthwise_macs",
    "dihdr_forward",
    "gradient",
    "init_scat_params",
    "load_model",
    "loss",
    "mdta_attention",
    "save_model",
    "scat_attention",
    "set_nan_guard",
    "train",
    "well_exposedness",
]
