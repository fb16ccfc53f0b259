"""Layout denoiser: a compact U-Net over one-hot class maps with additive
timestep plus ratio/domain conditioning."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import torch
import torch.nn as nn

from ..errors import DimensionMismatch, ShapeMismatch
from ..nn import GlobalContext, ResBlock, group_norm, sinusoidal_embedding
from ..schema import DOMAINS, DomainLabel
from .types import RatioTarget


class LayoutDenoiser(nn.Module):
    """Multi-scale encoder-decoder mapping (x_t, t, e) to per-pixel logits.

    Besides the additive embedding injection, the constraint vector enters
    as 2K broadcast input channels (masked ratios and mask), giving every
    position direct access to the numeric targets.
    """

    def __init__(
        self,
        num_classes: int,
        base_channels: int = 32,
        channel_mults: tuple[int, ...] = (1, 2),
        emb_dim: int = 128,
    ):
        super().__init__()
        self.num_classes = num_classes
        self.emb_dim = emb_dim
        widths = [base_channels * m for m in channel_mults]

        self.time_mlp = nn.Sequential(
            nn.Linear(emb_dim, emb_dim), nn.SiLU(), nn.Linear(emb_dim, emb_dim)
        )
        self.stem = nn.Conv2d(3 * num_classes, widths[0], 3, padding=1)

        self.down_blocks = nn.ModuleList()
        self.downsamplers = nn.ModuleList()
        ch = widths[0]
        for i, w in enumerate(widths):
            self.down_blocks.append(ResBlock(ch, w, emb_dim))
            ch = w
            if i < len(widths) - 1:
                self.downsamplers.append(nn.Conv2d(ch, ch, 3, stride=2, padding=1))

        self.mid_block = ResBlock(ch, ch, emb_dim)
        self.mid_context = GlobalContext(ch)

        self.up_blocks = nn.ModuleList()
        self.upsamplers = nn.ModuleList()
        for i, w in reversed(list(enumerate(widths))):
            self.up_blocks.append(ResBlock(ch + w, w, emb_dim))
            ch = w
            if i > 0:
                self.upsamplers.append(
                    nn.Sequential(nn.Upsample(scale_factor=2, mode="nearest"), nn.Conv2d(ch, ch, 3, padding=1))
                )

        self.out_norm = group_norm(ch)
        self.out_conv = nn.Conv2d(ch, num_classes, 3, padding=1)
        self.act = nn.SiLU()

    def forward(
        self,
        x: torch.Tensor,
        t: torch.Tensor,
        cond: torch.Tensor,
        constraint_channels: torch.Tensor | None = None,
    ) -> torch.Tensor:
        emb = self.time_mlp(sinusoidal_embedding(t, self.emb_dim)) + cond
        if constraint_channels is None:
            constraint_channels = x.new_zeros((x.shape[0], 2 * self.num_classes))
        broadcast = constraint_channels[:, :, None, None].expand(
            -1, -1, x.shape[2], x.shape[3]
        )
        h = self.stem(torch.cat([x, broadcast], dim=1))
        skips = []
        for i, block in enumerate(self.down_blocks):
            h = block(h, emb)
            skips.append(h)
            if i < len(self.downsamplers):
                h = self.downsamplers[i](h)
        h = self.mid_context(self.mid_block(h, emb))
        for i, block in enumerate(self.up_blocks):
            h = block(torch.cat([h, skips.pop()], dim=1), emb)
            if i < len(self.upsamplers):
                h = self.upsamplers[i](h)
        return self.out_conv(self.act(self.out_norm(h)))


@dataclass
class ConditioningEmbedding:
    """Fused conditioning vector e = e_r + alpha * e_d (exact by construction).

    `masked_input` keeps the projector's raw input (m * r concatenated with
    m) so the denoiser can also receive the constraint as broadcast input
    channels; the additive embedding pathway alone leaves ratio targets too
    weakly coupled to pixel-level predictions.
    """

    e: torch.Tensor
    e_r: torch.Tensor
    e_d: torch.Tensor
    alpha: torch.Tensor
    masked_input: torch.Tensor | None = None


class StageAModel(nn.Module):
    """Denoiser plus ratio projector, domain table, and mixing scalar alpha."""

    def __init__(
        self,
        num_classes: int,
        layout_size: int,
        base_channels: int = 32,
        channel_mults: tuple[int, ...] = (1, 2),
        emb_dim: int = 128,
    ):
        super().__init__()
        self.num_classes = num_classes
        self.layout_size = layout_size
        self.denoiser = LayoutDenoiser(num_classes, base_channels, channel_mults, emb_dim)
        # input carries (m * r, m) so "constrained to 0" differs from "unconstrained"
        self.ratio_projector = nn.Sequential(
            nn.Linear(2 * num_classes, emb_dim), nn.SiLU(), nn.Linear(emb_dim, emb_dim)
        )
        self.domain_table = nn.Embedding(len(DOMAINS), emb_dim)
        self.alpha = nn.Parameter(torch.tensor(1.0))
        # closed-loop response calibration per (domain, class): the reverse
        # chain realizes an affine response gain * v + bias to a requested
        # fraction v; constrained targets are passed through the fitted
        # inverse so requested and realized ratios agree. Identity until
        # fit_ratio_calibration runs.
        self.register_buffer("calib_gain", torch.ones(len(DOMAINS), num_classes))
        self.register_buffer("calib_bias", torch.zeros(len(DOMAINS), num_classes))

    @property
    def emb_dim(self) -> int:
        return self.denoiser.emb_dim

    def calibrated_targets(
        self, targets: torch.Tensor, masks: torch.Tensor, domain_idx: torch.Tensor
    ) -> torch.Tensor:
        """Apply the inverse response map to constrained entries."""
        gain = self.calib_gain[domain_idx]
        bias = self.calib_bias[domain_idx]
        mapped = ((targets - bias) / gain).clamp(0.01, 0.92)
        mapped = torch.where(masks > 0, mapped, targets)
        constrained_sum = (mapped * masks).sum(dim=-1, keepdim=True)
        overflow = constrained_sum > 0.95
        if overflow.any():
            scale = torch.where(overflow, 0.95 / constrained_sum.clamp(min=1e-6), torch.ones_like(constrained_sum))
            mapped = torch.where(masks > 0, mapped * scale, mapped)
        return mapped

    def embed_condition_batch(
        self,
        targets: torch.Tensor,
        masks: torch.Tensor,
        domain_idx: torch.Tensor,
        calibrated: bool = True,
    ) -> ConditioningEmbedding:
        if targets.shape[-1] != self.num_classes or masks.shape != targets.shape:
            raise DimensionMismatch(
                f"expected (B, {self.num_classes}) targets and masks, "
                f"got {tuple(targets.shape)} and {tuple(masks.shape)}"
            )
        targets = targets.float()
        masks = masks.float()
        if calibrated:
            targets = self.calibrated_targets(targets, masks, domain_idx)
        masked = targets * masks
        raw = torch.cat([masked, masks], dim=-1)
        e_r = self.ratio_projector(raw)
        e_d = self.domain_table(domain_idx)
        e = e_r + self.alpha * e_d
        return ConditioningEmbedding(e=e, e_r=e_r, e_d=e_d, alpha=self.alpha, masked_input=raw)

    def denoise_logits(
        self, xt: torch.Tensor, t: torch.Tensor, e: "ConditioningEmbedding | torch.Tensor"
    ) -> torch.Tensor:
        if xt.shape[1] != self.num_classes:
            raise ShapeMismatch(f"xt has {xt.shape[1]} channels, expected {self.num_classes}")
        if xt.shape[-2:] != (self.layout_size, self.layout_size):
            raise ShapeMismatch(
                f"xt spatial size {tuple(xt.shape[-2:])} != configured {self.layout_size}"
            )
        if isinstance(e, ConditioningEmbedding):
            return self.denoiser(xt, t, e.e, e.masked_input)
        return self.denoiser(xt, t, e)


def embed_condition(
    model: StageAModel, ratio: RatioTarget, domain: DomainLabel
) -> ConditioningEmbedding:
    """Single-sample conditioning embedding from a RatioTarget and domain."""
    targets = torch.from_numpy(np.asarray(ratio.targets, dtype=np.float32))[None]
    masks = torch.from_numpy(np.asarray(ratio.mask, dtype=np.float32))[None]
    domain_idx = torch.tensor([list(DOMAINS).index(domain)])
    return model.embed_condition_batch(targets, masks, domain_idx)
