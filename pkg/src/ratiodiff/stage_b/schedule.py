"""Variance-preserving noise schedule for the image diffusion stage."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import torch

from ..errors import ShapeMismatch, StepOutOfRange


@dataclass
class ImageNoiseSchedule:
    """Per-step signal/noise coefficients with alpha_t^2 + sigma_t^2 = 1.

    Steps index 0..T-1; alpha decreases from exactly 1 at t=0 to exactly 0
    at t=T-1 so both corruption endpoints are available in closed form.
    """

    alphas: np.ndarray
    sigmas: np.ndarray

    def __post_init__(self):
        self.alphas = np.asarray(self.alphas, dtype=np.float64)
        self.sigmas = np.asarray(self.sigmas, dtype=np.float64)
        if self.alphas.shape != self.sigmas.shape or self.alphas.ndim != 1:
            raise ShapeMismatch("alphas and sigmas must be equal-length 1-D arrays")
        if (np.diff(self.alphas) > 1e-12).any():
            raise ShapeMismatch("alpha must be monotone non-increasing")
        if not np.allclose(self.alphas**2 + self.sigmas**2, 1.0, atol=1e-9):
            raise ShapeMismatch("schedule must be variance-preserving")

    @property
    def num_steps(self) -> int:
        return int(self.alphas.size)

    @classmethod
    def from_alpha_bar(cls, alpha_bar: np.ndarray) -> "ImageNoiseSchedule":
        alpha_bar = np.clip(np.asarray(alpha_bar, dtype=np.float64), 0.0, 1.0)
        return cls(np.sqrt(alpha_bar), np.sqrt(1.0 - alpha_bar))

    @classmethod
    def cosine(cls, num_steps: int, s: float = 0.008) -> "ImageNoiseSchedule":
        u = np.arange(num_steps, dtype=np.float64) / max(num_steps - 1, 1)
        f = np.cos((u + s) / (1 + s) * math.pi / 2.0) ** 2
        alpha_bar = f / f[0]
        alpha_bar[0] = 1.0
        alpha_bar[-1] = 0.0
        return cls.from_alpha_bar(alpha_bar)

    @classmethod
    def linear(cls, num_steps: int) -> "ImageNoiseSchedule":
        alpha_bar = 1.0 - np.arange(num_steps, dtype=np.float64) / max(num_steps - 1, 1)
        return cls.from_alpha_bar(alpha_bar)

    def coeffs(self, t: int) -> tuple[float, float]:
        if not 0 <= t < self.num_steps:
            raise StepOutOfRange(f"t={t} outside [0, {self.num_steps - 1}]")
        return float(self.alphas[t]), float(self.sigmas[t])


def corrupt_latent(
    schedule: ImageNoiseSchedule,
    z0: torch.Tensor,
    t: int,
    generator: torch.Generator,
) -> tuple[torch.Tensor, torch.Tensor]:
    """z_t = alpha_t z0 + sigma_t eps with standard-normal eps; returns both."""
    alpha, sigma = schedule.coeffs(t)
    eps = torch.randn(z0.shape, generator=generator, dtype=z0.dtype)
    return alpha * z0 + sigma * eps, eps
