"""Core data carriers: categorical label grids and paired RGB samples."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import AllPixelsIgnored, CorpusError


@dataclass
class LabelGrid:
    """H x W land-cover map with values in {0..K}; 0 is the ignore index."""

    values: np.ndarray
    num_classes: int

    def __post_init__(self):
        self.values = np.asarray(self.values)
        if self.values.ndim != 2 or self.values.shape[0] < 1 or self.values.shape[1] < 1:
            raise CorpusError(f"label grid must be 2-D and non-empty, got shape {self.values.shape}")
        if not np.issubdtype(self.values.dtype, np.integer):
            raise CorpusError("label grid values must be integers")
        if self.values.min() < 0 or self.values.max() > self.num_classes:
            raise CorpusError(
                f"label values must lie in 0..{self.num_classes}, "
                f"found range [{self.values.min()}, {self.values.max()}]"
            )

    @property
    def height(self) -> int:
        return int(self.values.shape[0])

    @property
    def width(self) -> int:
        return int(self.values.shape[1])

    @property
    def valid_mask(self) -> np.ndarray:
        """Boolean mask of non-ignore pixels."""
        return self.values != 0

    def downsample(self, size: int) -> "LabelGrid":
        """Nearest-neighbor downsample preserving categorical values."""
        rows = (np.arange(size) * self.height) // size
        cols = (np.arange(size) * self.width) // size
        return LabelGrid(self.values[np.ix_(rows, cols)].copy(), self.num_classes)


@dataclass
class ImageSample:
    """RGB image in [0, 1] paired with a label grid of the same spatial size."""

    pixels: np.ndarray
    paired_label: LabelGrid

    def __post_init__(self):
        self.pixels = np.asarray(self.pixels, dtype=np.float32)
        if self.pixels.ndim != 3 or self.pixels.shape[2] != 3:
            raise CorpusError(f"image must be H x W x 3, got shape {self.pixels.shape}")
        if self.pixels.shape[:2] != self.paired_label.values.shape:
            raise CorpusError(
                f"image size {self.pixels.shape[:2]} does not match "
                f"label size {self.paired_label.values.shape}"
            )


def ratio_vector(grid: LabelGrid) -> np.ndarray:
    """Per-class fraction of valid pixels; entry k covers stored class k+1.

    Raises AllPixelsIgnored when the grid carries no valid pixels.
    """
    counts = np.bincount(grid.values.ravel(), minlength=grid.num_classes + 1)
    valid = counts[1:].sum()
    if valid == 0:
        raise AllPixelsIgnored("label grid contains only ignore pixels")
    return counts[1:].astype(np.float64) / float(valid)
