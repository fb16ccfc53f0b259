"""Noise-prediction objective for the image-synthesis stage."""

from __future__ import annotations

import torch

from ..errors import NonFiniteLoss
from .bundle import SynthModel
from .schedule import ImageNoiseSchedule


def stage_b_loss(
    synth: SynthModel,
    images: torch.Tensor,
    layouts_onehot: torch.Tensor,
    prompt_tokens: torch.Tensor,
    schedule: ImageNoiseSchedule,
    generator: torch.Generator,
    t: torch.Tensor | None = None,
    eps: torch.Tensor | None = None,
) -> torch.Tensor:
    """Mean over the batch of the squared noise-prediction error.

    Optional `t` / `eps` pin the per-sample timestep and noise draw so order
    invariance and oracles can be tested exactly.
    """
    if images.shape[0] == 0:
        raise NonFiniteLoss("empty batch")
    b = images.shape[0]
    z0 = synth.encode_scaled(images).detach()
    if t is None:
        t = torch.randint(0, schedule.num_steps, (b,), generator=generator)
    if eps is None:
        eps = torch.randn(z0.shape, generator=generator, dtype=z0.dtype)

    alphas = torch.from_numpy(schedule.alphas).to(z0.dtype)[t].view(b, 1, 1, 1)
    sigmas = torch.from_numpy(schedule.sigmas).to(z0.dtype)[t].view(b, 1, 1, 1)
    zt = alphas * z0 + sigmas * eps

    residuals = synth.control(zt, t, prompt_tokens, layouts_onehot)
    eps_hat = synth.denoiser(zt, t, prompt_tokens, synth.gates(residuals))

    loss = ((eps - eps_hat) ** 2).sum(dim=(1, 2, 3)).mean()
    if not torch.isfinite(loss):
        raise NonFiniteLoss("stage-B loss is not finite")
    return loss
