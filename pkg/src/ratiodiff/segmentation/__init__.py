"""Downstream segmentation verification harness."""

from .harness import MixSpec, SegConfig, cross_domain_eval, train_segmenter
from .metrics import (
    ConfusionMatrix,
    SummaryMetrics,
    per_class_f1,
    per_class_iou,
    render_comparison_table,
    summary_metrics,
)
from .model import SegNet, default_model_factory

__all__ = [
    "MixSpec",
    "SegConfig",
    "cross_domain_eval",
    "train_segmenter",
    "ConfusionMatrix",
    "SummaryMetrics",
    "per_class_f1",
    "per_class_iou",
    "render_comparison_table",
    "summary_metrics",
    "SegNet",
    "default_model_factory",
]
