"""Data model, dataset ingestion, and pixel-frequency statistics."""

from .grids import ImageSample, LabelGrid, ratio_vector
from .loveda import iter_grids, iter_pairs, load_mask, write_pair
from .stats import CorpusStats, accumulate_stats, stats_from_pairs
from .toy import (
    ToyCorpusSpec,
    TOY_PALETTE,
    generate_toy_layout,
    generate_toy_world,
    make_toy_corpus,
    render_label,
)

__all__ = [
    "ImageSample",
    "LabelGrid",
    "ratio_vector",
    "iter_grids",
    "iter_pairs",
    "load_mask",
    "write_pair",
    "CorpusStats",
    "accumulate_stats",
    "stats_from_pairs",
    "ToyCorpusSpec",
    "TOY_PALETTE",
    "generate_toy_layout",
    "generate_toy_world",
    "make_toy_corpus",
    "render_label",
]
