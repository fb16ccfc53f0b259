"""Small encoder-decoder segmenter used by the downstream harness."""

from __future__ import annotations

import torch
import torch.nn as nn

from ..nn import group_norm


class SegNet(nn.Module):
    """Three-scale U-Net-ish segmenter for RGB inputs."""

    def __init__(self, num_classes: int, base_channels: int = 16):
        super().__init__()
        c = base_channels
        self.enc1 = self._block(3, c)
        self.enc2 = self._block(c, 2 * c)
        self.enc3 = self._block(2 * c, 4 * c)
        self.pool = nn.MaxPool2d(2)
        self.up2 = nn.Upsample(scale_factor=2, mode="nearest")
        self.dec2 = self._block(4 * c + 2 * c, 2 * c)
        self.dec1 = self._block(2 * c + c, c)
        self.head = nn.Conv2d(c, num_classes, 1)

    @staticmethod
    def _block(in_ch: int, out_ch: int) -> nn.Sequential:
        return nn.Sequential(
            nn.Conv2d(in_ch, out_ch, 3, padding=1),
            group_norm(out_ch),
            nn.SiLU(),
            nn.Conv2d(out_ch, out_ch, 3, padding=1),
            group_norm(out_ch),
            nn.SiLU(),
        )

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        h1 = self.enc1(x)
        h2 = self.enc2(self.pool(h1))
        h3 = self.enc3(self.pool(h2))
        d2 = self.dec2(torch.cat([self.up2(h3), h2], dim=1))
        d1 = self.dec1(torch.cat([self.up2(d2), h1], dim=1))
        return self.head(d1)


def default_model_factory(num_classes: int, base_channels: int = 16) -> nn.Module:
    return SegNet(num_classes, base_channels)
