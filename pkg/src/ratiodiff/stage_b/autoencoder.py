"""Small convolutional image autoencoder (plus a pixel-space identity mode)."""

from __future__ import annotations

import math

import torch
import torch.nn as nn

from ..errors import ModelError


class ConvAutoencoder(nn.Module):
    """Strided conv encoder / mirrored decoder; deterministic latents."""

    def __init__(self, latent_channels: int = 4, base_channels: int = 32, downsample_factor: int = 4):
        super().__init__()
        if downsample_factor < 2 or downsample_factor & (downsample_factor - 1):
            raise ModelError("downsample_factor must be a power of two >= 2")
        self.latent_channels = latent_channels
        self.downsample_factor = downsample_factor
        n_down = int(math.log2(downsample_factor))

        enc: list[nn.Module] = [nn.Conv2d(3, base_channels, 3, padding=1), nn.SiLU()]
        ch = base_channels
        for _ in range(n_down):
            enc += [nn.Conv2d(ch, ch * 2, 4, stride=2, padding=1), nn.SiLU()]
            ch *= 2
        enc += [nn.Conv2d(ch, latent_channels, 3, padding=1)]
        self.encoder = nn.Sequential(*enc)

        dec: list[nn.Module] = [nn.Conv2d(latent_channels, ch, 3, padding=1), nn.SiLU()]
        for _ in range(n_down):
            dec += [
                nn.Upsample(scale_factor=2, mode="nearest"),
                nn.Conv2d(ch, ch // 2, 3, padding=1),
                nn.SiLU(),
            ]
            ch //= 2
        dec += [nn.Conv2d(ch, 3, 3, padding=1)]
        self.decoder = nn.Sequential(*dec)

    def encode(self, images: torch.Tensor) -> torch.Tensor:
        if images.shape[-1] % self.downsample_factor or images.shape[-2] % self.downsample_factor:
            raise ModelError(
                f"image size {tuple(images.shape[-2:])} not divisible by {self.downsample_factor}"
            )
        return self.encoder(images)

    def decode(self, latents: torch.Tensor) -> torch.Tensor:
        return torch.sigmoid(self.decoder(latents))


class IdentityAutoencoder(nn.Module):
    """Pixel-space mode: latents are the image shifted to [-1, 1]."""

    latent_channels = 3
    downsample_factor = 1

    def encode(self, images: torch.Tensor) -> torch.Tensor:
        return images * 2.0 - 1.0

    def decode(self, latents: torch.Tensor) -> torch.Tensor:
        return ((latents + 1.0) / 2.0).clamp(0.0, 1.0)


def make_autoencoder(
    pixel_space: bool, latent_channels: int, base_channels: int, downsample_factor: int
) -> nn.Module:
    if pixel_space:
        return IdentityAutoencoder()
    return ConvAutoencoder(latent_channels, base_channels, downsample_factor)


def reconstruction_psnr(original: torch.Tensor, reconstructed: torch.Tensor) -> float:
    """Peak signal-to-noise ratio in dB for images in [0, 1]."""
    mse = torch.mean((original - reconstructed) ** 2).item()
    if mse <= 0:
        return float("inf")
    return 10.0 * math.log10(1.0 / mse)
