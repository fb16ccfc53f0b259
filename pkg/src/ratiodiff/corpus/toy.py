"""Procedural toy world: blob-based label maps with domain-dependent class
priors and a deterministic label-to-image renderer.

The generator is a desk-scale stand-in for a real land-cover corpus: domain
priors skew Urban scenes toward Building/Road and Rural scenes toward
Agriculture/Forest, the per-class pixel distribution is long-tailed, and the
rendering is a pure function of (label, seed) so layout-to-image mappings
are learnable and exactly reproducible.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ..errors import CorpusError
from ..schema import DOMAINS, LOVEDA_SCHEMA, ClassSchema, DomainLabel
from .grids import ImageSample, LabelGrid
from .loveda import write_pair

# Blob-class sampling priors over stored classes 1..7, chosen so that Urban
# is building/road heavy and Rural agriculture/forest heavy.
URBAN_CLASS_PRIOR = (0.06, 0.30, 0.22, 0.08, 0.10, 0.14, 0.10)
RURAL_CLASS_PRIOR = (0.06, 0.08, 0.10, 0.10, 0.12, 0.24, 0.30)

# Per-class base colors used by the renderer (RGB in [0, 1]).
TOY_PALETTE = np.array(
    [
        [0.72, 0.72, 0.72],  # Background: light gray
        [0.85, 0.25, 0.25],  # Building: red
        [0.20, 0.20, 0.20],  # Road: near-black
        [0.20, 0.35, 0.85],  # Water: blue
        [0.78, 0.66, 0.45],  # Barren: tan
        [0.12, 0.55, 0.22],  # Forest: green
        [0.90, 0.80, 0.25],  # Agriculture: yellow
    ],
    dtype=np.float32,
)

RENDER_NOISE_STD = 0.03

_LAYOUT_TAG = 0xA11
_RENDER_TAG = 0xB22


def _domain_prior(domain: DomainLabel) -> np.ndarray:
    prior = URBAN_CLASS_PRIOR if domain is DomainLabel.URBAN else RURAL_CLASS_PRIOR
    return np.asarray(prior, dtype=np.float64)


_RADIUS_LO = 0.06
_RADIUS_HI = 0.45


def _paint_blob(values: np.ndarray, rng: np.random.Generator, cls: int) -> None:
    size_y, size_x = values.shape
    cy = rng.uniform(0, size_y)
    cx = rng.uniform(0, size_x)
    # log-uniform radii: mostly small blobs with a continuous tail of large
    # ones, so per-class coverage spans 0..~0.6 without discrete modes
    ry = _RADIUS_LO * (_RADIUS_HI / _RADIUS_LO) ** rng.random() * size_y
    rx = _RADIUS_LO * (_RADIUS_HI / _RADIUS_LO) ** rng.random() * size_x
    yy, xx = np.mgrid[0:size_y, 0:size_x]
    if rng.random() < 0.5:
        # axis-aligned rectangle
        inside = (np.abs(yy - cy) <= ry) & (np.abs(xx - cx) <= rx)
    else:
        # rotated ellipse
        theta = rng.uniform(0, np.pi)
        dy = yy - cy
        dx = xx - cx
        u = dx * np.cos(theta) + dy * np.sin(theta)
        v = -dx * np.sin(theta) + dy * np.cos(theta)
        inside = (u / rx) ** 2 + (v / ry) ** 2 <= 1.0
    values[inside] = cls


def generate_toy_layout(seed: int, domain: DomainLabel, size: int) -> LabelGrid:
    """Blob-composited label grid; contains no ignore pixels."""
    if size < 16:
        raise CorpusError(f"toy world size must be >= 16, got {size}")
    domain_index = list(DOMAINS).index(domain)
    rng = np.random.default_rng(np.random.SeedSequence([seed, domain_index, _LAYOUT_TAG]))
    values = np.full((size, size), 1, dtype=np.int64)  # Background canvas
    prior = _domain_prior(domain)
    n_blobs = int(rng.integers(5, 13))
    for _ in range(n_blobs):
        cls = int(rng.choice(len(prior), p=prior)) + 1
        _paint_blob(values, rng, cls)
    return LabelGrid(values, LOVEDA_SCHEMA.num_classes)


def render_label(grid: LabelGrid, seed: int) -> np.ndarray:
    """Deterministic label-to-image rendering: palette color + seeded noise.

    Pure in (grid, seed): re-rendering a stored label reproduces the stored
    image exactly. Ignore pixels (0) render as black.
    """
    rng = np.random.default_rng(np.random.SeedSequence([seed, _RENDER_TAG]))
    palette = np.vstack([np.zeros((1, 3), dtype=np.float32), TOY_PALETTE])
    base = palette[grid.values]
    noise = rng.standard_normal(base.shape).astype(np.float32) * RENDER_NOISE_STD
    return np.clip(base + noise, 0.0, 1.0)


def generate_toy_world(seed: int, domain: DomainLabel, size: int) -> tuple[ImageSample, LabelGrid]:
    """One (image, label) pair; identical inputs give bit-identical output."""
    grid = generate_toy_layout(seed, domain, size)
    pixels = render_label(grid, seed)
    return ImageSample(pixels, grid), grid


@dataclass
class ToyCorpusSpec:
    """Counts and geometry for a persisted toy corpus."""

    train_per_domain: int = 60
    val_per_domain: int = 16
    size: int = 64
    seed: int = 0


def _sample_seed(master: int, split_idx: int, domain_idx: int, index: int) -> int:
    ss = np.random.SeedSequence([master, split_idx, domain_idx, index])
    return int(ss.generate_state(1)[0])


def make_toy_corpus(root: Path, spec: ToyCorpusSpec, schema: ClassSchema | None = None) -> Path:
    """Persist a toy corpus in the LoveDA directory layout under `root`."""
    schema = schema or LOVEDA_SCHEMA
    root = Path(root)
    for split_idx, (split, count) in enumerate(
        (("Train", spec.train_per_domain), ("Val", spec.val_per_domain))
    ):
        for domain_idx, domain in enumerate(DOMAINS):
            for i in range(count):
                sample_seed = _sample_seed(spec.seed, split_idx, domain_idx, i)
                sample, _ = generate_toy_world(sample_seed, domain, spec.size)
                stem = f"toy_{domain.value.lower()}_{i:05d}"
                write_pair(root, split, domain, stem, sample)
    return root
