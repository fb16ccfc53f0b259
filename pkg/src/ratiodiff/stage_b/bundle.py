"""Bundle of every trainable part of the image-synthesis stage."""

from __future__ import annotations

import torch
import torch.nn as nn

from .autoencoder import make_autoencoder
from .model import ControlBranch, FilmGates, ImageDenoiser


class SynthModel(nn.Module):
    """Autoencoder + latent denoiser + control branch + FiLM gates.

    `latent_scale` multiplies encoder outputs so diffusion sees roughly
    unit-variance latents; it is fit once from data after autoencoder
    training and stored with the weights.
    """

    def __init__(
        self,
        layout_channels: int,
        prompt_dim: int,
        image_size: int,
        pixel_space: bool = False,
        latent_channels: int = 4,
        downsample_factor: int = 4,
        ae_base_channels: int = 32,
        base_channels: int = 32,
        channel_mults: tuple[int, ...] = (1, 2),
        emb_dim: int = 128,
    ):
        super().__init__()
        self.layout_channels = layout_channels
        self.image_size = image_size
        self.autoencoder = make_autoencoder(
            pixel_space, latent_channels, ae_base_channels, downsample_factor
        )
        z_channels = self.autoencoder.latent_channels
        self.denoiser = ImageDenoiser(
            z_channels, prompt_dim, base_channels, channel_mults, emb_dim
        )
        self.control = ControlBranch(
            z_channels,
            layout_channels,
            prompt_dim,
            base_channels,
            channel_mults,
            emb_dim,
            hint_factor=self.autoencoder.downsample_factor,
        )
        self.gates = FilmGates(self.denoiser.residual_channels)
        self.register_buffer("latent_scale", torch.tensor(1.0))

    @property
    def latent_size(self) -> int:
        return self.image_size // self.autoencoder.downsample_factor

    def encode_scaled(self, images: torch.Tensor) -> torch.Tensor:
        return self.autoencoder.encode(images) * self.latent_scale

    def decode_scaled(self, latents: torch.Tensor) -> torch.Tensor:
        return self.autoencoder.decode(latents / self.latent_scale)

    def fit_latent_scale(self, images: torch.Tensor) -> None:
        with torch.no_grad():
            std = self.autoencoder.encode(images).std()
        self.latent_scale.fill_(1.0 / max(float(std), 1e-6))
