"""Running per-domain pixel-frequency statistics over label grids."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..errors import EmptyDomainStats, SchemaMismatch
from ..schema import DOMAINS, ClassSchema, DomainLabel
from .grids import LabelGrid


@dataclass
class CorpusStats:
    """Per-domain valid-pixel counts, sample counts, and ignore-pixel total."""

    num_classes: int
    per_domain_pixel_counts: dict = field(default_factory=dict)
    per_domain_sample_counts: dict = field(default_factory=dict)
    ignore_pixel_count: int = 0

    def __post_init__(self):
        for domain in DOMAINS:
            self.per_domain_pixel_counts.setdefault(domain, np.zeros(self.num_classes, dtype=np.int64))
            self.per_domain_sample_counts.setdefault(domain, 0)

    def copy(self) -> "CorpusStats":
        return CorpusStats(
            num_classes=self.num_classes,
            per_domain_pixel_counts={d: c.copy() for d, c in self.per_domain_pixel_counts.items()},
            per_domain_sample_counts=dict(self.per_domain_sample_counts),
            ignore_pixel_count=self.ignore_pixel_count,
        )

    def domain_ratio(self, domain: DomainLabel) -> np.ndarray:
        """Normalized class-frequency vector for one domain."""
        counts = self.per_domain_pixel_counts[domain]
        total = counts.sum()
        if total == 0:
            raise EmptyDomainStats(f"no valid pixels recorded for domain {domain.value}")
        return counts.astype(np.float64) / float(total)

    def combined_ratio(self) -> np.ndarray:
        counts = sum(self.per_domain_pixel_counts[d] for d in DOMAINS)
        total = counts.sum()
        if total == 0:
            raise EmptyDomainStats("no valid pixels recorded")
        return counts.astype(np.float64) / float(total)

    def merge(self, other: "CorpusStats") -> "CorpusStats":
        """Associative merge of two accumulations."""
        if other.num_classes != self.num_classes:
            raise SchemaMismatch("cannot merge stats with different class counts")
        merged = self.copy()
        for domain in DOMAINS:
            merged.per_domain_pixel_counts[domain] += other.per_domain_pixel_counts[domain]
            merged.per_domain_sample_counts[domain] += other.per_domain_sample_counts[domain]
        merged.ignore_pixel_count += other.ignore_pixel_count
        return merged

    def to_report(self, schema: ClassSchema, split_label: str = "unspecified") -> dict:
        """JSON-serializable frequency report (counts, ratios, sample counts)."""
        report = {
            "split": split_label,
            "class_names": list(schema.class_names),
            "ignore_pixel_count": int(self.ignore_pixel_count),
            "domains": {},
        }
        for domain in DOMAINS:
            counts = self.per_domain_pixel_counts[domain]
            total = int(counts.sum())
            entry = {
                "sample_count": int(self.per_domain_sample_counts[domain]),
                "pixel_counts": [int(c) for c in counts],
                "ratios": [float(r) for r in (counts / total)] if total else None,
            }
            report["domains"][domain.value] = entry
        combined = sum(self.per_domain_pixel_counts[d] for d in DOMAINS)
        total = int(combined.sum())
        report["combined"] = {
            "sample_count": int(sum(self.per_domain_sample_counts.values())),
            "pixel_counts": [int(c) for c in combined],
            "ratios": [float(r) for r in (combined / total)] if total else None,
        }
        return report

    def save_report(self, path: Path, schema: ClassSchema, split_label: str = "unspecified") -> None:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(json.dumps(self.to_report(schema, split_label), indent=2, sort_keys=True))


def accumulate_stats(stats: CorpusStats, grid: LabelGrid, domain: DomainLabel) -> CorpusStats:
    """Return `stats` plus one grid's valid-pixel counts under `domain`."""
    if grid.num_classes != stats.num_classes:
        raise SchemaMismatch(
            f"grid has {grid.num_classes} classes, stats track {stats.num_classes}"
        )
    out = stats.copy()
    counts = np.bincount(grid.values.ravel(), minlength=grid.num_classes + 1)
    out.per_domain_pixel_counts[domain] += counts[1:]
    out.per_domain_sample_counts[domain] += 1
    out.ignore_pixel_count += int(counts[0])
    return out


def stats_from_pairs(pairs, num_classes: int) -> CorpusStats:
    """Fold accumulate_stats over an iterable of (LabelGrid, DomainLabel)."""
    stats = CorpusStats(num_classes)
    for grid, domain in pairs:
        stats = accumulate_stats(stats, grid, domain)
    return stats
