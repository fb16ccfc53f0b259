"""Value types shared across the layout-diffusion stage."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import DimensionMismatch


@dataclass
class RatioTarget:
    """Per-class target fractions plus a binary constraint mask.

    mask[k] = 1 marks class k as user-constrained; unconstrained entries of
    `targets` carry no meaning but must stay finite.
    """

    targets: np.ndarray
    mask: np.ndarray

    def __post_init__(self):
        self.targets = np.asarray(self.targets, dtype=np.float64)
        self.mask = np.asarray(self.mask, dtype=np.float64)
        if self.targets.shape != self.mask.shape or self.targets.ndim != 1:
            raise DimensionMismatch(
                f"targets {self.targets.shape} and mask {self.mask.shape} must be equal 1-D"
            )
        if not np.isfinite(self.targets).all():
            raise DimensionMismatch("ratio targets must be finite")
        if not np.isin(self.mask, (0.0, 1.0)).all():
            raise DimensionMismatch("mask entries must be 0 or 1")
        constrained_sum = float((self.targets * self.mask).sum())
        if constrained_sum > 1.0 + 1e-6:
            raise DimensionMismatch(f"constrained targets sum to {constrained_sum:.6f} > 1")

    @property
    def num_classes(self) -> int:
        return int(self.targets.shape[0])

    @classmethod
    def unconstrained(cls, num_classes: int) -> "RatioTarget":
        return cls(np.zeros(num_classes), np.zeros(num_classes))

    @classmethod
    def single(cls, num_classes: int, class_index: int, fraction: float) -> "RatioTarget":
        """Constrain one 0-based class index to `fraction`."""
        targets = np.zeros(num_classes)
        mask = np.zeros(num_classes)
        targets[class_index] = fraction
        mask[class_index] = 1.0
        return cls(targets, mask)


def one_hot_layout(class_indices: np.ndarray, num_classes: int) -> np.ndarray:
    """(H, W) 0-based class indices to an exactly one-hot (K, H, W) array."""
    h, w = class_indices.shape
    out = np.zeros((num_classes, h, w), dtype=np.float32)
    rows, cols = np.indices((h, w))
    out[class_indices, rows, cols] = 1.0
    return out


def layout_classes(layout: np.ndarray) -> np.ndarray:
    """Inverse of one_hot_layout for exactly one-hot input."""
    return layout.argmax(axis=0)
