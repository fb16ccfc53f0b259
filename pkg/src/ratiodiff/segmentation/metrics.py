"""Confusion-matrix based segmentation metrics: per-class IoU/F1, mIoU, mF1, OA."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import ShapeMismatch


class ConfusionMatrix:
    """K x K counts (rows = ground truth, cols = prediction); ignore pixels
    are excluded at update time."""

    def __init__(self, num_classes: int):
        self.num_classes = num_classes
        self.counts = np.zeros((num_classes, num_classes), dtype=np.int64)

    def update(self, truth: np.ndarray, pred: np.ndarray) -> None:
        """Accumulate from stored-value arrays (0 = ignore, 1..K = classes)."""
        if truth.shape != pred.shape:
            raise ShapeMismatch(f"truth {truth.shape} vs pred {pred.shape}")
        valid = truth > 0
        t = truth[valid] - 1
        p = np.clip(pred[valid] - 1, 0, self.num_classes - 1)
        flat = self.num_classes * t + p
        binned = np.bincount(flat, minlength=self.num_classes**2)
        self.counts += binned.reshape(self.num_classes, self.num_classes)

    def merge(self, other: "ConfusionMatrix") -> "ConfusionMatrix":
        out = ConfusionMatrix(self.num_classes)
        out.counts = self.counts + other.counts
        return out

    @property
    def total(self) -> int:
        return int(self.counts.sum())


def per_class_iou(cm: ConfusionMatrix) -> np.ndarray:
    """IoU_k = TP / (TP + FP + FN); classes with empty union come back NaN."""
    tp = np.diag(cm.counts).astype(np.float64)
    union = cm.counts.sum(axis=0) + cm.counts.sum(axis=1) - np.diag(cm.counts)
    with np.errstate(invalid="ignore", divide="ignore"):
        iou = np.where(union > 0, tp / union, np.nan)
    return iou


def per_class_f1(cm: ConfusionMatrix) -> np.ndarray:
    tp = np.diag(cm.counts).astype(np.float64)
    denom = cm.counts.sum(axis=0) + cm.counts.sum(axis=1)
    with np.errstate(invalid="ignore", divide="ignore"):
        f1 = np.where(denom > 0, 2.0 * tp / denom, np.nan)
    return f1


@dataclass
class SummaryMetrics:
    miou: float
    mf1: float
    oa: float
    iou: np.ndarray
    f1: np.ndarray

    def to_dict(self, class_names: tuple[str, ...] | None = None) -> dict:
        names = class_names or tuple(f"class_{i + 1}" for i in range(len(self.iou)))
        return {
            "mIoU": self.miou,
            "mF1": self.mf1,
            "OA": self.oa,
            "per_class_iou": {
                n: (None if np.isnan(v) else float(v)) for n, v in zip(names, self.iou)
            },
            "per_class_f1": {
                n: (None if np.isnan(v) else float(v)) for n, v in zip(names, self.f1)
            },
        }


def summary_metrics(cm: ConfusionMatrix) -> SummaryMetrics:
    """Means exclude undefined (empty-union) classes; OA is trace/total."""
    iou = per_class_iou(cm)
    f1 = per_class_f1(cm)
    total = cm.total
    oa = float(np.diag(cm.counts).sum() / total) if total else float("nan")
    return SummaryMetrics(
        miou=float(np.nanmean(iou)) if not np.isnan(iou).all() else float("nan"),
        mf1=float(np.nanmean(f1)) if not np.isnan(f1).all() else float("nan"),
        oa=oa,
        iou=iou,
        f1=f1,
    )


def render_comparison_table(
    class_names: tuple[str, ...],
    rows: list[tuple[str, SummaryMetrics]],
    title: str = "Downstream segmentation",
) -> str:
    """Text table with one IoU column per class plus mIoU / mF1 / OA."""
    header = ["Training Dataset"] + list(class_names) + ["mIoU", "mF1", "OA"]
    lines = [title, ""]
    widths = [max(18, len(header[0]))] + [max(9, len(h) + 1) for h in header[1:]]
    lines.append("".join(h.ljust(w) for h, w in zip(header, widths)))
    lines.append("-" * sum(widths))
    for name, metrics in rows:
        cells = [name]
        for v in metrics.iou:
            cells.append("undef" if np.isnan(v) else f"{100 * v:.2f}")
        cells += [f"{100 * metrics.miou:.2f}", f"{100 * metrics.mf1:.2f}", f"{100 * metrics.oa:.2f}"]
        lines.append("".join(c.ljust(w) for c, w in zip(cells, widths)))
    return "\n".join(lines) + "\n"
