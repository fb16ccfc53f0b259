"""Ancestral sampling of label grids from a trained layout model."""

from __future__ import annotations

import numpy as np
import torch

from ..schema import DOMAINS, DomainLabel
from ..corpus.grids import LabelGrid
from .model import StageAModel
from .objective import TorchScheduleOps
from .schedule import TransitionSchedule
from .types import RatioTarget


def _categorical_sample(probs: torch.Tensor, generator: torch.Generator) -> torch.Tensor:
    """Sample class indices from (B, K, H, W) probabilities."""
    cdf = probs.cumsum(dim=1)
    u = torch.rand(
        (probs.shape[0], 1, probs.shape[2], probs.shape[3]),
        generator=generator,
        dtype=probs.dtype,
    )
    idx = (cdf < u).sum(dim=1)
    return idx.clamp(max=probs.shape[1] - 1)


@torch.no_grad()
def sample_chain(
    model: StageAModel,
    ops: TorchScheduleOps,
    targets: torch.Tensor,
    masks: torch.Tensor,
    domain_idx: torch.Tensor,
    generator: torch.Generator,
    calibrated: bool = True,
) -> torch.Tensor:
    """Reverse chain for a heterogeneous conditioning batch.

    Returns (B, H, W) 0-based class indices. Each step samples x_{t-1}
    from the true posterior marginalized over the predicted x_0
    distribution (the x0-parameterized reverse process).
    """
    was_training = model.training
    model.eval()
    count = targets.shape[0]
    k = model.num_classes
    size = model.layout_size
    cond = model.embed_condition_batch(targets, masks, domain_idx, calibrated=calibrated)

    x_t = torch.randint(0, k, (count, size, size), generator=generator)
    for t in range(ops.num_steps, 0, -1):
        onehot = torch.nn.functional.one_hot(x_t, k).permute(0, 3, 1, 2).float()
        t_batch = torch.full((count,), t, dtype=torch.long)
        logits = model.denoise_logits(onehot, t_batch, cond)
        probs = torch.softmax(logits, dim=1)
        reverse = ops.posterior_mixture(x_t, probs, t_batch)
        x_t = _categorical_sample(reverse, generator)
    if was_training:
        model.train()
    return x_t


def sample_layouts(
    model: StageAModel,
    schedule: TransitionSchedule,
    ratio: RatioTarget,
    domain: DomainLabel,
    count: int,
    seed: int,
    ops: TorchScheduleOps | None = None,
) -> list[LabelGrid]:
    """Sample `count` grids under one constraint; deterministic in `seed`.

    The returned grids contain stored classes 1..K and never the ignore
    index.
    """
    ops = ops or TorchScheduleOps(schedule)
    generator = torch.Generator().manual_seed(seed)
    targets = torch.from_numpy(np.asarray(ratio.targets, dtype=np.float32)).expand(count, -1).contiguous()
    masks = torch.from_numpy(np.asarray(ratio.mask, dtype=np.float32)).expand(count, -1).contiguous()
    domain_idx = torch.full((count,), list(DOMAINS).index(domain), dtype=torch.long)
    x_t = sample_chain(model, ops, targets, masks, domain_idx, generator)
    values = (x_t + 1).numpy().astype(np.int64)
    return [LabelGrid(values[i], model.num_classes) for i in range(count)]


def sample_layout(
    model: StageAModel,
    schedule: TransitionSchedule,
    ratio: RatioTarget,
    domain: DomainLabel,
    seed: int,
    ops: TorchScheduleOps | None = None,
) -> LabelGrid:
    return sample_layouts(model, schedule, ratio, domain, 1, seed, ops)[0]
