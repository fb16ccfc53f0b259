"""Ratio- and domain-conditioned discrete diffusion over label grids."""

from .model import ConditioningEmbedding, LayoutDenoiser, StageAModel, embed_condition
from .objective import (
    CE_WEIGHT,
    UNCONSTRAINED_RATIO_WEIGHT,
    TorchScheduleOps,
    estimated_ratio,
    ratio_loss,
    stage_a_loss,
)
from .sample import sample_layout, sample_layouts
from .schedule import TransitionSchedule, corrupt, forward_marginal, true_posterior
from .train import StageAConfig, TrainResult, prepare_corpus, train_stage_a
from .types import RatioTarget, layout_classes, one_hot_layout

__all__ = [
    "ConditioningEmbedding",
    "LayoutDenoiser",
    "StageAModel",
    "embed_condition",
    "CE_WEIGHT",
    "UNCONSTRAINED_RATIO_WEIGHT",
    "TorchScheduleOps",
    "estimated_ratio",
    "ratio_loss",
    "stage_a_loss",
    "sample_layout",
    "sample_layouts",
    "TransitionSchedule",
    "corrupt",
    "forward_marginal",
    "true_posterior",
    "StageAConfig",
    "TrainResult",
    "prepare_corpus",
    "train_stage_a",
    "RatioTarget",
    "layout_classes",
    "one_hot_layout",
]
