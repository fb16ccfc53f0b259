"""Downstream harness: train a small segmenter on real or mixed corpora and
report per-class IoU, mIoU, mF1, and OA, in-domain and cross-domain."""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch

from ..errors import CorpusError, NonFiniteLoss
from ..schema import DOMAINS, ClassSchema, DomainLabel
from ..corpus.loveda import iter_pairs
from .metrics import ConfusionMatrix, summary_metrics
from .model import default_model_factory


@dataclass
class MixSpec:
    """What corpus the segmenter trains on and how synthetic data joins in."""

    real_root: str
    synthetic_root: str | None = None
    mode: str = "concatenate"  # or "fraction": per-batch synthetic share
    synthetic_fraction: float = 0.5
    seed: int = 0

    def __post_init__(self):
        if self.mode not in ("concatenate", "fraction"):
            raise CorpusError(f"unknown mixing mode {self.mode!r}")
        if not 0.0 <= self.synthetic_fraction <= 1.0:
            raise CorpusError("synthetic_fraction must lie in [0, 1]")

    def to_dict(self) -> dict:
        return {
            "real_root": str(self.real_root),
            "synthetic_root": None if self.synthetic_root is None else str(self.synthetic_root),
            "mode": self.mode,
            "synthetic_fraction": self.synthetic_fraction,
            "seed": self.seed,
        }


@dataclass
class SegConfig:
    base_channels: int = 16
    train_steps: int = 400
    batch_size: int = 8
    learning_rate: float = 2e-3

    def to_dict(self) -> dict:
        return dict(self.__dict__)

    @classmethod
    def from_dict(cls, data: dict) -> "SegConfig":
        return cls(**data)


@dataclass
class _TensorSet:
    images: torch.Tensor  # (N, 3, H, W)
    targets: torch.Tensor  # (N, H, W) long, -1 = ignore
    stored: list = field(default_factory=list)  # raw value arrays for eval


def _load_split(
    root: str, split: str, domains: tuple[DomainLabel, ...], schema: ClassSchema
) -> _TensorSet:
    images = []
    targets = []
    stored = []
    for sample, _domain in iter_pairs(Path(root), split=split, domains=domains, schema=schema):
        images.append(torch.from_numpy(sample.pixels.transpose(2, 0, 1)))
        values = sample.paired_label.values
        stored.append(values)
        targets.append(torch.from_numpy(np.where(values > 0, values - 1, -1).astype(np.int64)))
    if not images:
        raise CorpusError(f"no pairs under {root}/{split} for {[d.value for d in domains]}")
    return _TensorSet(torch.stack(images), torch.stack(targets), stored)


def _evaluate(model, data: _TensorSet, schema: ClassSchema, batch: int = 16) -> ConfusionMatrix:
    cm = ConfusionMatrix(schema.num_classes)
    model.eval()
    with torch.no_grad():
        for start in range(0, data.images.shape[0], batch):
            logits = model(data.images[start : start + batch])
            preds = logits.argmax(dim=1).numpy() + 1
            for i in range(preds.shape[0]):
                cm.update(data.stored[start + i], preds[i])
    return cm


def _metrics_entry(cm: ConfusionMatrix, schema: ClassSchema) -> dict:
    summary = summary_metrics(cm)
    entry = summary.to_dict(schema.class_names)
    entry["valid_pixels"] = cm.total
    entry["undefined_classes"] = [
        name for name, v in zip(schema.class_names, summary.iou) if np.isnan(v)
    ]
    return entry


def train_segmenter(
    mix: MixSpec,
    config: SegConfig,
    schema: ClassSchema,
    train_domains: tuple[DomainLabel, ...] = DOMAINS,
    eval_domains: tuple[DomainLabel, ...] = DOMAINS,
):
    """Train with per-pixel cross-entropy (ignore excluded) and evaluate on
    the held-out Val split per evaluation domain. Deterministic in
    (mix, config)."""
    real = _load_split(mix.real_root, "Train", train_domains, schema)
    synthetic = None
    if mix.synthetic_root is not None:
        synthetic = _load_split(mix.synthetic_root, "Train", train_domains, schema)

    torch.manual_seed(mix.seed)
    model = default_model_factory(schema.num_classes, config.base_channels)
    generator = torch.Generator().manual_seed(mix.seed)
    optimizer = torch.optim.Adam(model.parameters(), lr=config.learning_rate)

    if synthetic is not None and mix.mode == "concatenate":
        images = torch.cat([real.images, synthetic.images])
        targets = torch.cat([real.targets, synthetic.targets])
    else:
        images, targets = real.images, real.targets

    n = images.shape[0]
    model.train()
    for step in range(config.train_steps):
        if synthetic is not None and mix.mode == "fraction":
            n_syn = int(round(config.batch_size * mix.synthetic_fraction))
            idx_r = torch.randint(0, real.images.shape[0], (config.batch_size - n_syn,), generator=generator)
            idx_s = torch.randint(0, synthetic.images.shape[0], (n_syn,), generator=generator)
            batch_images = torch.cat([real.images[idx_r], synthetic.images[idx_s]])
            batch_targets = torch.cat([real.targets[idx_r], synthetic.targets[idx_s]])
        else:
            idx = torch.randint(0, n, (config.batch_size,), generator=generator)
            batch_images, batch_targets = images[idx], targets[idx]
        logits = model(batch_images)
        loss = torch.nn.functional.cross_entropy(logits, batch_targets, ignore_index=-1)
        if not torch.isfinite(loss):
            raise NonFiniteLoss(f"segmenter divergence at step {step}")
        optimizer.zero_grad()
        loss.backward()
        optimizer.step()

    report = {
        "mix": mix.to_dict(),
        "config": config.to_dict(),
        "train_domains": [d.value for d in train_domains],
        "eval": {},
    }
    combined = ConfusionMatrix(schema.num_classes)
    for domain in eval_domains:
        cm = _evaluate(model, _load_split(mix.real_root, "Val", (domain,), schema), schema)
        combined = combined.merge(cm)
        report["eval"][domain.value] = _metrics_entry(cm, schema)
    report["eval"]["combined"] = _metrics_entry(combined, schema)
    return model, report


def cross_domain_eval(
    model,
    real_root: str,
    eval_domain: DomainLabel,
    schema: ClassSchema,
) -> dict:
    """Evaluate trained params against one domain's Val split."""
    cm = _evaluate(model, _load_split(real_root, "Val", (eval_domain,), schema), schema)
    return {"eval_domain": eval_domain.value, **_metrics_entry(cm, schema)}
