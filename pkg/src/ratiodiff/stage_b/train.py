"""Training loops for the autoencoder and the layout-guided image diffusion."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch

from ..errors import NonFiniteLoss
from ..prompting import ParsedPrompt, PromptEncoderConfig, encode_prompt
from ..schema import DOMAINS, ClassSchema, DomainLabel
from ..corpus.grids import ImageSample, ratio_vector
from .bundle import SynthModel
from .objective import stage_b_loss
from .schedule import ImageNoiseSchedule


@dataclass
class StageBConfig:
    image_size: int = 64
    pixel_space: bool = False
    latent_channels: int = 4
    downsample_factor: int = 4
    ae_base_channels: int = 32
    ae_train_steps: int = 400
    ae_learning_rate: float = 2e-3
    base_channels: int = 32
    channel_mults: tuple = (1, 2)
    emb_dim: int = 128
    prompt_token_dim: int = 32
    num_steps: int = 200
    schedule: str = "cosine"
    sampler: str = "ddim"
    sample_steps: int = 50
    train_steps: int = 1200
    batch_size: int = 8
    learning_rate: float = 2e-3
    train_main: bool = True
    max_grad_norm: float = 1.0
    seed: int = 0

    def to_dict(self) -> dict:
        out = dict(self.__dict__)
        out["channel_mults"] = list(self.channel_mults)
        return out

    @classmethod
    def from_dict(cls, data: dict) -> "StageBConfig":
        data = dict(data)
        data["channel_mults"] = tuple(data.get("channel_mults", (1, 2)))
        return cls(**data)

    def make_schedule(self) -> ImageNoiseSchedule:
        if self.schedule == "linear":
            return ImageNoiseSchedule.linear(self.num_steps)
        return ImageNoiseSchedule.cosine(self.num_steps)


def training_prompt(grid, domain: DomainLabel, schema: ClassSchema, min_fraction: float = 0.005) -> ParsedPrompt:
    """Canonical prompt describing a training pair's domain and composition.

    Fractions are rounded to the grammar's two-decimal percent grid.
    """
    ratios = ratio_vector(grid)
    constraints = []
    for idx, r in enumerate(ratios):
        percent = round(float(r) * 100.0, 2)
        if percent / 100.0 >= min_fraction:
            constraints.append((schema.class_names[idx], percent / 100.0))
    total = sum(f for _, f in constraints)
    if total > 1.0:  # rounding can overshoot the grammar's sum bound
        constraints = [(n, f) for n, f in constraints]
        name, f = constraints[-1]
        constraints[-1] = (name, max(f - (total - 1.0), 1e-4))
    return ParsedPrompt(domain=domain, constraints=constraints)


def layout_to_onehot(values: np.ndarray, num_classes: int) -> np.ndarray:
    """Stored mask values (0..K) to a (K, H, W) one-hot; ignore rows are zero."""
    h, w = values.shape
    out = np.zeros((num_classes, h, w), dtype=np.float32)
    valid = values > 0
    rows, cols = np.nonzero(valid)
    out[values[valid] - 1, rows, cols] = 1.0
    return out


@dataclass
class PreparedPairs:
    images: torch.Tensor  # (N, 3, H, W)
    layouts: torch.Tensor  # (N, K, H, W)
    prompts: torch.Tensor  # (N, T_tok, d_p)


def prepare_pairs(
    pairs: list[tuple[ImageSample, DomainLabel]],
    schema: ClassSchema,
    image_size: int,
    prompt_config: PromptEncoderConfig,
) -> PreparedPairs:
    images = []
    layouts = []
    prompts = []
    for sample, domain in pairs:
        if sample.pixels.shape[0] != image_size or sample.pixels.shape[1] != image_size:
            raise NonFiniteLoss(
                f"sample size {sample.pixels.shape[:2]} != configured image size {image_size}"
            )
        images.append(torch.from_numpy(sample.pixels.transpose(2, 0, 1)))
        layouts.append(torch.from_numpy(layout_to_onehot(sample.paired_label.values, schema.num_classes)))
        parsed = training_prompt(sample.paired_label, domain, schema)
        prompts.append(torch.from_numpy(encode_prompt(parsed, prompt_config, schema).tokens.astype(np.float32)))
    return PreparedPairs(torch.stack(images), torch.stack(layouts), torch.stack(prompts))


@dataclass
class StageBResult:
    synth: SynthModel
    schedule: ImageNoiseSchedule
    log: list = field(default_factory=list)
    ae_log: list = field(default_factory=list)


def train_autoencoder(
    synth: SynthModel, images: torch.Tensor, config: StageBConfig, generator: torch.Generator
) -> list[dict]:
    """Reconstruction pretraining; a no-op in pixel-space mode."""
    if config.pixel_space:
        return []
    params = list(synth.autoencoder.parameters())
    optimizer = torch.optim.Adam(params, lr=config.ae_learning_rate)
    n = images.shape[0]
    log = []
    for step in range(config.ae_train_steps):
        idx = torch.randint(0, n, (config.batch_size,), generator=generator)
        batch = images[idx]
        recon = synth.autoencoder.decode(synth.autoencoder.encode(batch))
        loss = torch.mean((recon - batch) ** 2)
        if not torch.isfinite(loss):
            raise NonFiniteLoss(f"autoencoder divergence at step {step}")
        optimizer.zero_grad()
        loss.backward()
        optimizer.step()
        log.append({"step": step, "loss": float(loss.detach())})
    for p in params:
        p.requires_grad_(False)
    return log


def train_stage_b(
    pairs: list[tuple[ImageSample, DomainLabel]],
    config: StageBConfig,
    schema: ClassSchema,
    checkpoint_path: Path | None = None,
    log_path: Path | None = None,
) -> StageBResult:
    """Pretrain the autoencoder, then optimize the noise-prediction loss.

    The control branch and FiLM gates are always trainable; the main
    denoiser trains unless config.train_main is False. Deterministic given
    (pairs order, config.seed).
    """
    if not pairs:
        raise NonFiniteLoss("empty corpus")
    prompt_config = PromptEncoderConfig(token_dim=config.prompt_token_dim)
    prepared = prepare_pairs(pairs, schema, config.image_size, prompt_config)

    torch.manual_seed(config.seed)
    synth = SynthModel(
        layout_channels=schema.num_classes,
        prompt_dim=config.prompt_token_dim,
        image_size=config.image_size,
        pixel_space=config.pixel_space,
        latent_channels=config.latent_channels,
        downsample_factor=config.downsample_factor,
        ae_base_channels=config.ae_base_channels,
        base_channels=config.base_channels,
        channel_mults=tuple(config.channel_mults),
        emb_dim=config.emb_dim,
    )
    schedule = config.make_schedule()
    generator = torch.Generator().manual_seed(config.seed)

    ae_log = train_autoencoder(synth, prepared.images, config, generator)
    synth.fit_latent_scale(prepared.images[: min(64, prepared.images.shape[0])])

    trainable = list(synth.control.parameters()) + list(synth.gates.parameters())
    if config.train_main:
        trainable += list(synth.denoiser.parameters())
    else:
        for p in synth.denoiser.parameters():
            p.requires_grad_(False)
    optimizer = torch.optim.Adam(trainable, lr=config.learning_rate)

    n = prepared.images.shape[0]
    log = []
    for step in range(config.train_steps):
        idx = torch.randint(0, n, (config.batch_size,), generator=generator)
        try:
            loss = stage_b_loss(
                synth,
                prepared.images[idx],
                prepared.layouts[idx],
                prepared.prompts[idx],
                schedule,
                generator,
            )
        except NonFiniteLoss as exc:
            raise NonFiniteLoss(f"divergence at step {step}: {exc}") from exc
        optimizer.zero_grad()
        loss.backward()
        if config.max_grad_norm > 0:
            torch.nn.utils.clip_grad_norm_(trainable, config.max_grad_norm)
        optimizer.step()
        log.append({"step": step, "loss": float(loss.detach())})

    if log_path is not None:
        write_stage_b_log(log_path, log)
    if checkpoint_path is not None:
        from ..checkpoint import save_stage_b

        save_stage_b(checkpoint_path, synth, config, schema, step=config.train_steps)
    return StageBResult(synth=synth, schedule=schedule, log=log, ae_log=ae_log)


def write_stage_b_log(path: Path, log: list[dict]) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(["step", "loss"])
        for row in log:
            writer.writerow([row["step"], row["loss"]])
