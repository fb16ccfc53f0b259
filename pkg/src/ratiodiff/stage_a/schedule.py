"""Discrete-diffusion transition schedule over K classes.

Uses the uniform-mixing kernel Q_t = (1 - beta_t) I + beta_t (1/K) 11^T with
a cosine schedule on the cumulative keep-probability, so marginals and
posteriors have cheap closed forms while the stored matrices stay fully
general for oracle checks.

Timestep convention: t runs 1..T for corruption steps; t = 0 is the clean
boundary where the cumulative operator is the identity.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from ..errors import ShapeMismatch, StepOutOfRange


@dataclass
class TransitionSchedule:
    """Per-step transition matrices Q_t and cumulative operators Qbar_t.

    `keep_bar[t]` is the cumulative keep-probability after t steps
    (keep_bar[0] = 1); `betas[t - 1]` is the per-step mixing coefficient.
    """

    num_classes: int
    betas: np.ndarray
    keep_bar: np.ndarray = field(init=False)

    def __post_init__(self):
        self.betas = np.asarray(self.betas, dtype=np.float64)
        if self.betas.ndim != 1 or self.betas.size < 1:
            raise ShapeMismatch("betas must be a non-empty 1-D array")
        if (self.betas < 0).any() or (self.betas > 1).any():
            raise ShapeMismatch("betas must lie in [0, 1]")
        self.keep_bar = np.concatenate([[1.0], np.cumprod(1.0 - self.betas)])

    @property
    def num_steps(self) -> int:
        return int(self.betas.size)

    @classmethod
    def cosine(cls, num_classes: int, num_steps: int, s: float = 0.008) -> "TransitionSchedule":
        """Cosine schedule on the cumulative keep-probability."""
        t = np.arange(num_steps + 1, dtype=np.float64)
        f = np.cos((t / num_steps + s) / (1 + s) * math.pi / 2.0) ** 2
        keep = f / f[0]
        betas = np.clip(1.0 - keep[1:] / keep[:-1], 0.0, 0.9999)
        return cls(num_classes, betas)

    def _check_step(self, t: int, lo: int) -> None:
        if not lo <= t <= self.num_steps:
            raise StepOutOfRange(f"t={t} outside [{lo}, {self.num_steps}]")

    def transition_matrix(self, t: int) -> np.ndarray:
        """Row-stochastic Q_t = (1 - beta_t) I + beta_t / K."""
        self._check_step(t, 1)
        beta = self.betas[t - 1]
        k = self.num_classes
        return (1.0 - beta) * np.eye(k) + beta / k * np.ones((k, k))

    def cumulative_matrix(self, t: int) -> np.ndarray:
        """Qbar_t = Q_1 ... Q_t; the identity at the t = 0 boundary."""
        self._check_step(t, 0)
        ab = self.keep_bar[t]
        k = self.num_classes
        return ab * np.eye(k) + (1.0 - ab) / k * np.ones((k, k))

    def posterior_tensor(self, t: int) -> np.ndarray:
        """All true posteriors at step t as M[xt, x0, j] = q(x_{t-1}=j | xt, x0)."""
        self._check_step(t, 1)
        k = self.num_classes
        q_t = self.transition_matrix(t)
        q_bar_prev = self.cumulative_matrix(t - 1)
        # unnormalized[xt, x0, j] = Q_t[j, xt] * Qbar_{t-1}[x0, j]
        un = q_t.T[:, None, :] * q_bar_prev[None, :, :]
        return un / un.sum(axis=2, keepdims=True)


def forward_marginal(schedule: TransitionSchedule, x0_class: int, t: int) -> np.ndarray:
    """Row x0_class of Qbar_t: the forward corruption marginal q(x_t | x_0)."""
    if not 0 <= x0_class < schedule.num_classes:
        raise StepOutOfRange(f"class {x0_class} outside 0..{schedule.num_classes - 1}")
    return schedule.cumulative_matrix(t)[x0_class].copy()


def corrupt(
    schedule: TransitionSchedule,
    layout: np.ndarray,
    t: int,
    rng: np.random.Generator,
) -> np.ndarray:
    """Sample x_t per pixel from the forward marginal of its class.

    `layout` must be exactly one-hot (K, H, W); the output is too.
    """
    schedule._check_step(t, 1)
    k, h, w = layout.shape
    if k != schedule.num_classes:
        raise ShapeMismatch(f"layout has {k} channels, schedule has {schedule.num_classes}")
    sums = layout.sum(axis=0)
    if not (np.isin(layout, (0.0, 1.0)).all() and np.allclose(sums, 1.0)):
        raise ShapeMismatch("layout must be exactly one-hot")
    classes = layout.argmax(axis=0)
    probs = schedule.cumulative_matrix(t)[classes]  # (H, W, K)
    cdf = probs.cumsum(axis=-1)
    u = rng.random((h, w, 1))
    sampled = (u < cdf).argmax(axis=-1)
    from .types import one_hot_layout

    return one_hot_layout(sampled, k)


def true_posterior(schedule: TransitionSchedule, xt_class: int, x0_class: int, t: int) -> np.ndarray:
    """q(x_{t-1} | x_t, x_0) proportional to Q_t[j, xt] * Qbar_{t-1}[x0, j]."""
    if not 2 <= t <= schedule.num_steps:
        raise StepOutOfRange(f"t={t} outside [2, {schedule.num_steps}]")
    q_t = schedule.transition_matrix(t)
    q_bar_prev = schedule.cumulative_matrix(t - 1)
    un = q_t[:, xt_class] * q_bar_prev[x0_class, :]
    return un / un.sum()
