"""Training losses for the layout diffusion stage.

The total objective combines the single-t variational-bound estimate, an
auxiliary denoising cross-entropy weighted 0.5, and the two-weight
ratio-matching loss whose unconstrained term is weighted 0.1.
"""

from __future__ import annotations

import numpy as np
import torch

from ..errors import NonFiniteLoss, StepOutOfRange
from .schedule import TransitionSchedule

CE_WEIGHT = 0.5
UNCONSTRAINED_RATIO_WEIGHT = 0.1

_LOG_EPS = 1e-12


class TorchScheduleOps:
    """Torch-side mirror of a TransitionSchedule for batched training math.

    Caches the full posterior tensor M[t, xt, x0, j] = q(x_{t-1}=j | xt, x0)
    in double precision; casts to the working dtype at use time.
    """

    def __init__(self, schedule: TransitionSchedule):
        self.schedule = schedule
        self.num_classes = schedule.num_classes
        self.num_steps = schedule.num_steps
        self.keep_bar = torch.from_numpy(schedule.keep_bar)
        posterior = np.stack(
            [schedule.posterior_tensor(t) for t in range(1, schedule.num_steps + 1)]
        )
        # index 0 unused so tensors index directly by t
        self.posterior = torch.from_numpy(
            np.concatenate([np.zeros_like(posterior[:1]), posterior])
        )

    def corrupt_batch(
        self, x0_idx: torch.Tensor, t: torch.Tensor, generator: torch.Generator
    ) -> torch.Tensor:
        """Sample x_t indices from the closed-form uniform-kernel marginal."""
        if (t < 1).any() or (t > self.num_steps).any():
            raise StepOutOfRange("corruption step outside 1..T")
        ab = self.keep_bar[t].view(-1, 1, 1).to(torch.float64)
        keep_draw = torch.rand(x0_idx.shape, generator=generator, dtype=torch.float64)
        uniform = torch.randint(
            0, self.num_classes, x0_idx.shape, generator=generator, dtype=x0_idx.dtype
        )
        return torch.where(keep_draw < ab, x0_idx, uniform)

    def true_posterior_probs(
        self, xt_idx: torch.Tensor, x0_idx: torch.Tensor, t: torch.Tensor, dtype: torch.dtype
    ) -> torch.Tensor:
        """q(x_{t-1} | x_t, x_0) per pixel, shape (B, K, H, W)."""
        b = xt_idx.shape[0]
        m_t = self.posterior[t]  # (B, K, K, K)
        rows = m_t[torch.arange(b)[:, None, None], xt_idx, x0_idx]  # (B, H, W, K)
        return rows.permute(0, 3, 1, 2).to(dtype)

    def posterior_mixture(
        self, xt_idx: torch.Tensor, x0_probs: torch.Tensor, t: torch.Tensor
    ) -> torch.Tensor:
        """p(x_{t-1} | x_t) by marginalizing the true posterior over a
        predicted x_0 distribution; shape (B, K, H, W)."""
        b = xt_idx.shape[0]
        m_t = self.posterior[t].to(x0_probs.dtype)
        m_x = m_t[torch.arange(b)[:, None, None], xt_idx]  # (B, H, W, K_x0, K_j)
        return torch.einsum("bkhw,bhwkj->bjhw", x0_probs, m_x)


def estimated_ratio(logits: torch.Tensor, valid: torch.Tensor | None = None) -> torch.Tensor:
    """Mean softmax probability per class over valid pixels.

    Accepts (K, H, W) or (B, K, H, W); returns (K,) or (B, K). Always sums
    to 1 along the class axis.
    """
    squeeze = logits.ndim == 3
    if squeeze:
        logits = logits[None]
        valid = valid[None] if valid is not None else None
    probs = torch.softmax(logits, dim=1)
    if valid is None:
        r_hat = probs.mean(dim=(2, 3))
    else:
        v = valid.to(probs.dtype)
        denom = v.sum(dim=(1, 2)).clamp(min=1.0)
        r_hat = (probs * v[:, None]).sum(dim=(2, 3)) / denom[:, None]
    return r_hat[0] if squeeze else r_hat


def ratio_loss(
    r_hat: torch.Tensor, targets: torch.Tensor, mask: torch.Tensor
) -> torch.Tensor:
    """Two-weight quadratic ratio penalty: constrained classes at weight 1,
    unconstrained at 0.1; batch inputs are averaged."""
    diff = r_hat - targets
    per_sample = ((mask * diff) ** 2).sum(dim=-1) + UNCONSTRAINED_RATIO_WEIGHT * (
        ((1.0 - mask) * diff) ** 2
    ).sum(dim=-1)
    return per_sample.mean()


def _masked_pixel_mean(per_pixel: torch.Tensor, valid: torch.Tensor) -> torch.Tensor:
    """Mean over valid pixels per sample, then over the batch."""
    v = valid.to(per_pixel.dtype)
    denom = v.sum(dim=(1, 2)).clamp(min=1.0)
    return ((per_pixel * v).sum(dim=(1, 2)) / denom).mean()


def stage_a_loss(
    model,
    ops: TorchScheduleOps,
    x0_idx: torch.Tensor,
    valid: torch.Tensor,
    targets: torch.Tensor,
    masks: torch.Tensor,
    domain_idx: torch.Tensor,
    generator: torch.Generator,
    t: torch.Tensor | None = None,
) -> tuple[torch.Tensor, dict]:
    """Single-t estimate of the full stage objective.

    x0_idx holds 0-based class indices with ignore pixels already replaced
    by a filler class; `valid` excludes them from every term.
    """
    if x0_idx.numel() == 0:
        raise NonFiniteLoss("empty batch")
    b = x0_idx.shape[0]
    if t is None:
        t = torch.randint(1, ops.num_steps + 1, (b,), generator=generator)

    xt_idx = ops.corrupt_batch(x0_idx, t, generator)
    xt_onehot = torch.nn.functional.one_hot(xt_idx, ops.num_classes).permute(0, 3, 1, 2)

    cond = model.embed_condition_batch(targets, masks, domain_idx)
    param_dtype = next(model.parameters()).dtype
    logits = model.denoise_logits(xt_onehot.to(param_dtype), t, cond)
    probs = torch.softmax(logits, dim=1)

    ce_map = torch.nn.functional.cross_entropy(logits, x0_idx, reduction="none")
    ce = _masked_pixel_mean(ce_map, valid)

    # variational term: reconstruction CE at t=1, posterior KL at t>1
    kl_map = torch.zeros_like(ce_map)
    gt1 = t > 1
    if gt1.any():
        q = ops.true_posterior_probs(xt_idx[gt1], x0_idx[gt1], t[gt1], probs.dtype)
        p = ops.posterior_mixture(xt_idx[gt1], probs[gt1], t[gt1])
        kl = (q * (q.clamp(min=_LOG_EPS).log() - p.clamp(min=_LOG_EPS).log())).sum(dim=1)
        kl_map[gt1] = kl
    vlb_per_pixel = torch.where(gt1[:, None, None], kl_map, ce_map)
    vlb = _masked_pixel_mean(vlb_per_pixel, valid)

    r_hat = estimated_ratio(logits, valid)
    l_ratio = ratio_loss(r_hat, targets.to(r_hat.dtype), masks.to(r_hat.dtype))

    total = vlb + CE_WEIGHT * ce + l_ratio
    if not torch.isfinite(total):
        raise NonFiniteLoss("stage-A loss is not finite")
    parts = {
        "vlb": float(vlb.detach()),
        "ce": float(ce.detach()),
        "ratio": float(l_ratio.detach()),
        "total": float(total.detach()),
    }
    return total, parts


def constraint_conflict_loss(
    model,
    ops: TorchScheduleOps,
    x0_idx: torch.Tensor,
    valid: torch.Tensor,
    conflict_targets: torch.Tensor,
    conflict_masks: torch.Tensor,
    domain_idx: torch.Tensor,
    generator: torch.Generator,
) -> torch.Tensor:
    """Constrained ratio penalty on corruptions paired with mismatched
    constraints.

    Reverse-chain states can carry class evidence that disagrees with the
    requested composition; plain forward training never shows such
    conflicts, so the denoiser learns to extrapolate visible mass and the
    sampling chain amplifies it. This term corrupts real grids at high
    noise levels, swaps in constraints from other samples, and pushes the
    estimated ratio of constrained classes toward the request, training
    constraint-following over evidence-reading.
    """
    b = x0_idx.shape[0]
    t_lo = max(1, ops.num_steps // 3)
    t = torch.randint(t_lo, ops.num_steps + 1, (b,), generator=generator)
    xt_idx = ops.corrupt_batch(x0_idx, t, generator)
    xt_onehot = torch.nn.functional.one_hot(xt_idx, ops.num_classes).permute(0, 3, 1, 2)
    cond = model.embed_condition_batch(conflict_targets, conflict_masks, domain_idx)
    param_dtype = next(model.parameters()).dtype
    logits = model.denoise_logits(xt_onehot.to(param_dtype), t, cond)
    r_hat = estimated_ratio(logits, valid)
    diff = r_hat - conflict_targets.to(r_hat.dtype)
    loss = ((conflict_masks.to(r_hat.dtype) * diff) ** 2).sum(dim=-1).mean()
    if not torch.isfinite(loss):
        raise NonFiniteLoss("conflict loss is not finite")
    return loss
