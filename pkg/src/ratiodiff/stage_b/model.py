"""Latent denoiser with a mirrored control branch and FiLM-gated residual
injection at every skip connection and the mid block."""

from __future__ import annotations

import math
from dataclasses import dataclass

import torch
import torch.nn as nn

from ..errors import ShapeMismatch
from ..nn import ResBlock, group_norm, sinusoidal_embedding


@dataclass
class ControlResiduals:
    """Per-scale residual features plus the mid-block residual."""

    down: list
    mid: torch.Tensor

    def map(self, fn) -> "ControlResiduals":
        return ControlResiduals(down=[fn(d) for d in self.down], mid=fn(self.mid))


class _Encoder(nn.Module):
    """Shared encoder topology for the denoiser and the control branch."""

    def __init__(self, in_channels: int, widths: list[int], emb_dim: int):
        super().__init__()
        self.stem = nn.Conv2d(in_channels, widths[0], 3, padding=1)
        self.blocks = nn.ModuleList()
        self.downsamplers = nn.ModuleList()
        ch = widths[0]
        for i, w in enumerate(widths):
            self.blocks.append(ResBlock(ch, w, emb_dim))
            ch = w
            if i < len(widths) - 1:
                self.downsamplers.append(nn.Conv2d(ch, ch, 3, stride=2, padding=1))
        self.mid = ResBlock(ch, ch, emb_dim)

    def forward(self, x: torch.Tensor, emb: torch.Tensor, extra: torch.Tensor | None = None):
        h = self.stem(x)
        if extra is not None:
            h = h + extra
        skips = []
        for i, block in enumerate(self.blocks):
            h = block(h, emb)
            skips.append(h)
            if i < len(self.downsamplers):
                h = self.downsamplers[i](h)
        return skips, self.mid(h, emb)


class ImageDenoiser(nn.Module):
    """Predicts injected noise from (z_t, t, prompt tokens, gated residuals)."""

    def __init__(
        self,
        latent_channels: int,
        prompt_dim: int,
        base_channels: int = 32,
        channel_mults: tuple[int, ...] = (1, 2),
        emb_dim: int = 128,
    ):
        super().__init__()
        self.latent_channels = latent_channels
        self.emb_dim = emb_dim
        self.widths = [base_channels * m for m in channel_mults]

        self.time_mlp = nn.Sequential(
            nn.Linear(emb_dim, emb_dim), nn.SiLU(), nn.Linear(emb_dim, emb_dim)
        )
        self.prompt_proj = nn.Linear(prompt_dim, emb_dim)
        self.encoder = _Encoder(latent_channels, self.widths, emb_dim)

        self.up_blocks = nn.ModuleList()
        self.upsamplers = nn.ModuleList()
        ch = self.widths[-1]
        for i, w in reversed(list(enumerate(self.widths))):
            self.up_blocks.append(ResBlock(ch + w, w, emb_dim))
            ch = w
            if i > 0:
                self.upsamplers.append(
                    nn.Sequential(nn.Upsample(scale_factor=2, mode="nearest"), nn.Conv2d(ch, ch, 3, padding=1))
                )
        self.out_norm = group_norm(ch)
        self.out_conv = nn.Conv2d(ch, latent_channels, 3, padding=1)
        self.act = nn.SiLU()

    @property
    def residual_channels(self) -> list[int]:
        """Channel widths expected of control residuals: per level then mid."""
        return list(self.widths) + [self.widths[-1]]

    def embed(self, t: torch.Tensor, prompt_tokens: torch.Tensor) -> torch.Tensor:
        emb = self.time_mlp(sinusoidal_embedding(t, self.emb_dim))
        return emb + self.prompt_proj(prompt_tokens.mean(dim=1))

    def forward(
        self,
        z: torch.Tensor,
        t: torch.Tensor,
        prompt_tokens: torch.Tensor,
        residuals: ControlResiduals | None = None,
    ) -> torch.Tensor:
        if z.shape[1] != self.latent_channels:
            raise ShapeMismatch(f"latent has {z.shape[1]} channels, expected {self.latent_channels}")
        if residuals is not None:
            self.validate_residuals(residuals)
        emb = self.embed(t, prompt_tokens)
        skips, h = self.encoder(z, emb)
        if residuals is not None:
            h = h + residuals.mid
            skips = [s + r for s, r in zip(skips, residuals.down)]
        for i, block in enumerate(self.up_blocks):
            h = block(torch.cat([h, skips.pop()], dim=1), emb)
            if i < len(self.upsamplers):
                h = self.upsamplers[i](h)
        return self.out_conv(self.act(self.out_norm(h)))

    def validate_residuals(self, residuals: ControlResiduals) -> None:
        expected = self.residual_channels
        got = [int(d.shape[1]) for d in residuals.down] + [int(residuals.mid.shape[1])]
        if got != expected:
            raise ShapeMismatch(f"residual channels {got} != denoiser descriptor {expected}")


class ControlBranch(nn.Module):
    """Mirror of the denoiser encoder consuming the one-hot layout hint;
    emits zero-initialized residual projections (ControlNet pattern)."""

    def __init__(
        self,
        latent_channels: int,
        layout_channels: int,
        prompt_dim: int,
        base_channels: int = 32,
        channel_mults: tuple[int, ...] = (1, 2),
        emb_dim: int = 128,
        hint_factor: int = 1,
    ):
        super().__init__()
        self.emb_dim = emb_dim
        widths = [base_channels * m for m in channel_mults]

        self.time_mlp = nn.Sequential(
            nn.Linear(emb_dim, emb_dim), nn.SiLU(), nn.Linear(emb_dim, emb_dim)
        )
        self.prompt_proj = nn.Linear(prompt_dim, emb_dim)

        hint: list[nn.Module] = [nn.Conv2d(layout_channels, widths[0], 3, padding=1), nn.SiLU()]
        n_down = int(math.log2(hint_factor)) if hint_factor > 1 else 0
        for _ in range(n_down):
            hint += [nn.Conv2d(widths[0], widths[0], 4, stride=2, padding=1), nn.SiLU()]
        hint += [nn.Conv2d(widths[0], widths[0], 3, padding=1)]
        self.hint_encoder = nn.Sequential(*hint)

        self.encoder = _Encoder(latent_channels, widths, emb_dim)

        self.down_projections = nn.ModuleList(
            [nn.Conv2d(w, w, 1) for w in widths]
        )
        self.mid_projection = nn.Conv2d(widths[-1], widths[-1], 1)
        for proj in list(self.down_projections) + [self.mid_projection]:
            nn.init.zeros_(proj.weight)
            nn.init.zeros_(proj.bias)

    def forward(
        self,
        z: torch.Tensor,
        t: torch.Tensor,
        prompt_tokens: torch.Tensor,
        layout_onehot: torch.Tensor,
    ) -> ControlResiduals:
        emb = self.time_mlp(sinusoidal_embedding(t, self.emb_dim))
        emb = emb + self.prompt_proj(prompt_tokens.mean(dim=1))
        hint = self.hint_encoder(layout_onehot)
        if hint.shape[-2:] != z.shape[-2:]:
            raise ShapeMismatch(
                f"layout hint {tuple(hint.shape[-2:])} does not match latent {tuple(z.shape[-2:])}"
            )
        skips, mid = self.encoder(z, emb, extra=hint)
        down = [proj(s) for proj, s in zip(self.down_projections, skips)]
        return ControlResiduals(down=down, mid=self.mid_projection(mid))


class FilmGates(nn.Module):
    """Per-channel affine gates (gamma, beta) for every residual scale;
    identity at initialization."""

    def __init__(self, channels: list[int]):
        super().__init__()
        self.gammas = nn.ParameterList([nn.Parameter(torch.ones(c)) for c in channels])
        self.betas = nn.ParameterList([nn.Parameter(torch.zeros(c)) for c in channels])

    def forward(self, residuals: ControlResiduals) -> ControlResiduals:
        n = len(residuals.down)
        if len(self.gammas) != n + 1:
            raise ShapeMismatch(f"gates cover {len(self.gammas)} scales, residuals have {n + 1}")
        gated_down = []
        for i, delta in enumerate(residuals.down):
            if delta.shape[1] != self.gammas[i].numel():
                raise ShapeMismatch(
                    f"scale {i}: residual channels {delta.shape[1]} != gate size {self.gammas[i].numel()}"
                )
            gated_down.append(self.gammas[i].view(1, -1, 1, 1) * delta + self.betas[i].view(1, -1, 1, 1))
        if residuals.mid.shape[1] != self.gammas[n].numel():
            raise ShapeMismatch(
                f"mid: residual channels {residuals.mid.shape[1]} != gate size {self.gammas[n].numel()}"
            )
        gated_mid = self.gammas[n].view(1, -1, 1, 1) * residuals.mid + self.betas[n].view(1, -1, 1, 1)
        return ControlResiduals(down=gated_down, mid=gated_mid)


def control_residuals(
    control: ControlBranch,
    zt: torch.Tensor,
    t: torch.Tensor,
    prompt_tokens: torch.Tensor,
    layout_onehot: torch.Tensor,
) -> ControlResiduals:
    return control(zt, t, prompt_tokens, layout_onehot)


def film_gate(gates: FilmGates, residuals: ControlResiduals) -> ControlResiduals:
    return gates(residuals)


def predict_noise(
    denoiser: ImageDenoiser,
    zt: torch.Tensor,
    t: torch.Tensor,
    prompt_tokens: torch.Tensor,
    gated: ControlResiduals | None,
) -> torch.Tensor:
    return denoiser(zt, t, prompt_tokens, gated)
