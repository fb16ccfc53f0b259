"""LoveDA-format directory I/O.

Layout: `<root>/{Train,Val}/{Urban,Rural}/images_png/*.png` paired by stem
with `.../masks_png/*.png`. Masks are single-channel 8-bit PNG with values
0..K (0 = ignore).
"""

from __future__ import annotations

from pathlib import Path
from typing import Iterator

import numpy as np
from PIL import Image

from ..errors import BadMaskValue, CorpusError, MissingPair, SizeMismatch
from ..schema import DOMAINS, ClassSchema, DomainLabel
from .grids import ImageSample, LabelGrid

IMAGES_DIR = "images_png"
MASKS_DIR = "masks_png"
META_DIR = "meta_json"


def domain_dir(root: Path, split: str, domain: DomainLabel) -> Path:
    return Path(root) / split / domain.value


def load_mask(path: Path, num_classes: int) -> LabelGrid:
    arr = np.asarray(Image.open(path))
    if arr.ndim == 3:
        arr = arr[:, :, 0]
    arr = arr.astype(np.int64)
    if arr.max() > num_classes:
        raise BadMaskValue(f"{path}: mask value {int(arr.max())} exceeds {num_classes}")
    return LabelGrid(arr, num_classes)


def load_image(path: Path) -> np.ndarray:
    arr = np.asarray(Image.open(path).convert("RGB"), dtype=np.float32)
    return arr / 255.0


def iter_pairs(
    root: Path,
    split: str = "Train",
    domains: tuple[DomainLabel, ...] = DOMAINS,
    schema: ClassSchema | None = None,
) -> Iterator[tuple[ImageSample, DomainLabel]]:
    """Yield (ImageSample, DomainLabel) pairs from a LoveDA-format tree."""
    from ..schema import LOVEDA_SCHEMA

    schema = schema or LOVEDA_SCHEMA
    root = Path(root)
    split_dir = root / split
    if not split_dir.is_dir():
        raise CorpusError(f"split directory not found: {split_dir}")
    for domain in domains:
        ddir = domain_dir(root, split, domain)
        if not ddir.is_dir():
            continue
        images = {p.stem: p for p in sorted((ddir / IMAGES_DIR).glob("*.png"))}
        masks = {p.stem: p for p in sorted((ddir / MASKS_DIR).glob("*.png"))}
        unmatched = set(images) ^ set(masks)
        if unmatched:
            raise MissingPair(
                f"{ddir}: {len(unmatched)} unpaired stem(s), e.g. {sorted(unmatched)[:3]}"
            )
        for stem in sorted(images):
            grid = load_mask(masks[stem], schema.num_classes)
            pixels = load_image(images[stem])
            if pixels.shape[:2] != grid.values.shape:
                raise SizeMismatch(
                    f"{stem}: image {pixels.shape[:2]} vs mask {grid.values.shape}"
                )
            yield ImageSample(pixels, grid), domain


def iter_grids(
    root: Path,
    split: str = "Train",
    domains: tuple[DomainLabel, ...] = DOMAINS,
    schema: ClassSchema | None = None,
) -> Iterator[tuple[LabelGrid, DomainLabel]]:
    """Yield only (LabelGrid, DomainLabel), skipping image decode."""
    from ..schema import LOVEDA_SCHEMA

    schema = schema or LOVEDA_SCHEMA
    root = Path(root)
    split_dir = root / split
    if not split_dir.is_dir():
        raise CorpusError(f"split directory not found: {split_dir}")
    for domain in domains:
        ddir = domain_dir(root, split, domain)
        if not ddir.is_dir():
            continue
        for mask_path in sorted((ddir / MASKS_DIR).glob("*.png")):
            yield load_mask(mask_path, schema.num_classes), domain


def write_pair(
    root: Path,
    split: str,
    domain: DomainLabel,
    stem: str,
    sample: ImageSample,
) -> tuple[Path, Path]:
    """Persist one pair in the LoveDA layout; returns (image_path, mask_path)."""
    ddir = domain_dir(root, split, domain)
    img_dir = ddir / IMAGES_DIR
    mask_dir = ddir / MASKS_DIR
    img_dir.mkdir(parents=True, exist_ok=True)
    mask_dir.mkdir(parents=True, exist_ok=True)

    img_path = img_dir / f"{stem}.png"
    mask_path = mask_dir / f"{stem}.png"
    arr = np.clip(np.round(sample.pixels * 255.0), 0, 255).astype(np.uint8)
    Image.fromarray(arr, mode="RGB").save(img_path)
    mask = sample.paired_label.values.astype(np.uint8)
    Image.fromarray(mask, mode="L").save(mask_path)
    return img_path, mask_path
