"""Reverse-diffusion image sampling conditioned on a layout and prompt."""

from __future__ import annotations

import numpy as np
import torch

from ..errors import ModelError
from ..prompting import PromptEmbedding
from ..corpus.grids import ImageSample, LabelGrid
from .bundle import SynthModel
from .schedule import ImageNoiseSchedule

X0_CLIP = 3.0
_ALPHA_FLOOR = 1e-3


def upsample_layout(grid: LabelGrid, size: int) -> LabelGrid:
    """Nearest-neighbor upsample of a label grid to `size` x `size`."""
    rows = (np.arange(size) * grid.height) // size
    cols = (np.arange(size) * grid.width) // size
    return LabelGrid(grid.values[np.ix_(rows, cols)].copy(), grid.num_classes)


def sampling_timesteps(num_train_steps: int, num_sample_steps: int) -> list[int]:
    """Strided descending timesteps from T-1 down to 0."""
    steps = np.linspace(num_train_steps - 1, 0, min(num_sample_steps, num_train_steps))
    out = []
    for s in steps.round().astype(int):
        if not out or out[-1] != s:
            out.append(int(s))
    return out


@torch.no_grad()
def sample_image(
    synth: SynthModel,
    schedule: ImageNoiseSchedule,
    layout: LabelGrid,
    prompt: PromptEmbedding,
    seed: int,
    num_steps: int = 50,
    method: str = "ddim",
) -> ImageSample:
    """Denoise from Gaussian noise for `num_steps` strided steps, guided by
    the FiLM-gated control residuals of the upsampled layout, then decode.

    `method` is "ddim" (deterministic) or "ancestral" (stochastic); both are
    deterministic functions of the seed.
    """
    if method not in ("ddim", "ancestral"):
        raise ModelError(f"unknown sampler {method!r}")
    was_training = synth.training
    synth.eval()

    up = upsample_layout(layout, synth.image_size)
    from .train import layout_to_onehot

    layout_onehot = torch.from_numpy(layout_to_onehot(up.values, synth.layout_channels))[None]
    prompt_tokens = torch.from_numpy(prompt.tokens.astype(np.float32))[None]
    generator = torch.Generator().manual_seed(seed)

    c = synth.autoencoder.latent_channels
    h = w = synth.latent_size
    z = torch.randn((1, c, h, w), generator=generator)
    eta = 0.0 if method == "ddim" else 1.0

    ts = sampling_timesteps(schedule.num_steps, num_steps)
    for i, t in enumerate(ts):
        alpha, sigma = schedule.coeffs(t)
        t_batch = torch.full((1,), t, dtype=torch.long)
        residuals = synth.control(z, t_batch, prompt_tokens, layout_onehot)
        eps_hat = synth.denoiser(z, t_batch, prompt_tokens, synth.gates(residuals))
        # terminal alpha is exactly 0; the floor keeps the x0 estimate finite
        x0 = ((z - sigma * eps_hat) / max(alpha, _ALPHA_FLOOR)).clamp(-X0_CLIP, X0_CLIP)
        if i + 1 == len(ts):
            z = x0
            break
        alpha_next, sigma_next = schedule.coeffs(ts[i + 1])
        if eta > 0 and sigma > 0:
            var = (eta * sigma_next / max(sigma, 1e-8)) ** 2 * (
                1.0 - (alpha / max(alpha_next, _ALPHA_FLOOR)) ** 2
            )
            var = float(np.clip(var, 0.0, sigma_next**2))
        else:
            var = 0.0
        dir_coeff = float(np.sqrt(max(sigma_next**2 - var, 0.0)))
        z = alpha_next * x0 + dir_coeff * eps_hat
        if var > 0:
            z = z + np.sqrt(var) * torch.randn(z.shape, generator=generator)

    pixels = synth.decode_scaled(z)[0].clamp(0.0, 1.0)
    if was_training:
        synth.train()
    return ImageSample(pixels.permute(1, 2, 0).numpy().astype(np.float32), up)
