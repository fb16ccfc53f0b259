"""Training loop for the ratio/domain-conditioned layout diffusion model."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch

from ..errors import NonFiniteLoss
from ..schema import DOMAINS, ClassSchema
from ..corpus.grids import LabelGrid, ratio_vector
from .model import StageAModel
from .objective import TorchScheduleOps, constraint_conflict_loss, stage_a_loss
from .schedule import TransitionSchedule


@dataclass
class StageAConfig:
    layout_size: int = 32
    num_steps: int = 100
    base_channels: int = 32
    channel_mults: tuple = (1, 2)
    emb_dim: int = 128
    p_mask: float = 0.5
    p_mask_all_zero: float = 0.1
    p_mask_single: float = 0.3
    conflict_weight: float = 1.0
    calibrate: bool = True
    calibration_values: tuple = (0.12, 0.25, 0.38)
    calibration_samples: int = 3
    learning_rate: float = 2e-3
    lr_decay: bool = True
    batch_size: int = 8
    train_steps: int = 1500
    max_grad_norm: float = 1.0
    seed: int = 0

    def to_dict(self) -> dict:
        return {
            "layout_size": self.layout_size,
            "num_steps": self.num_steps,
            "base_channels": self.base_channels,
            "channel_mults": list(self.channel_mults),
            "emb_dim": self.emb_dim,
            "p_mask": self.p_mask,
            "p_mask_all_zero": self.p_mask_all_zero,
            "p_mask_single": self.p_mask_single,
            "conflict_weight": self.conflict_weight,
            "calibrate": self.calibrate,
            "calibration_values": list(self.calibration_values),
            "calibration_samples": self.calibration_samples,
            "learning_rate": self.learning_rate,
            "lr_decay": self.lr_decay,
            "batch_size": self.batch_size,
            "train_steps": self.train_steps,
            "max_grad_norm": self.max_grad_norm,
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "StageAConfig":
        data = dict(data)
        data["channel_mults"] = tuple(data.get("channel_mults", (1, 2)))
        if "calibration_values" in data:
            data["calibration_values"] = tuple(data["calibration_values"])
        return cls(**data)


@dataclass
class PreparedCorpus:
    """Tensorized training corpus at layout resolution."""

    x0: torch.Tensor  # (N, H, W) long, filler-substituted
    valid: torch.Tensor  # (N, H, W) bool
    ratios: torch.Tensor  # (N, K) float32, over valid pixels
    domain_idx: torch.Tensor  # (N,) long
    filler_class: int


def prepare_corpus(
    pairs: list[tuple[LabelGrid, object]], layout_size: int, num_classes: int
) -> PreparedCorpus:
    """Downsample grids, strip ignore pixels, and precompute ratio vectors.

    Ignore pixels are replaced by the corpus-majority class as a one-hot
    filler and excluded from every loss via the valid mask.
    """
    grids = []
    domains = []
    for grid, domain in pairs:
        small = grid.downsample(layout_size)
        if (small.values != 0).sum() == 0:
            continue  # nothing supervisable at this resolution
        grids.append(small)
        domains.append(domain)
    if not grids:
        raise NonFiniteLoss("corpus has no grids with valid pixels")

    totals = np.zeros(num_classes, dtype=np.int64)
    for g in grids:
        totals += np.bincount(g.values.ravel(), minlength=num_classes + 1)[1:]
    filler = int(totals.argmax())

    n = len(grids)
    x0 = torch.empty((n, layout_size, layout_size), dtype=torch.long)
    valid = torch.empty((n, layout_size, layout_size), dtype=torch.bool)
    ratios = torch.empty((n, num_classes), dtype=torch.float32)
    domain_idx = torch.empty((n,), dtype=torch.long)
    domain_list = list(DOMAINS)
    for i, (g, d) in enumerate(zip(grids, domains)):
        vals = g.values
        v = vals != 0
        idx = np.where(v, vals - 1, filler)
        x0[i] = torch.from_numpy(idx.astype(np.int64))
        valid[i] = torch.from_numpy(v)
        ratios[i] = torch.from_numpy(ratio_vector(g).astype(np.float32))
        domain_idx[i] = domain_list.index(d)
    return PreparedCorpus(x0, valid, ratios, domain_idx, filler)


def sample_constraint_masks(
    batch: int,
    num_classes: int,
    p_mask: float,
    p_all_zero: float,
    generator: torch.Generator,
    p_single: float = 0.0,
) -> torch.Tensor:
    """Bernoulli(p_mask) per class, with two overrides drawn per sample:
    whole mask zeroed with prob p_all_zero (fully unconditional ratios) and
    exactly one random class constrained with prob p_single (the sparsest
    prompts are otherwise rare under the Bernoulli scheme)."""
    masks = (torch.rand((batch, num_classes), generator=generator) < p_mask).float()
    mode = torch.rand((batch,), generator=generator)
    single_cls = torch.randint(0, num_classes, (batch,), generator=generator)
    for i in range(batch):
        if mode[i] < p_all_zero:
            masks[i] = 0.0
        elif mode[i] < p_all_zero + p_single:
            masks[i] = 0.0
            masks[i, single_cls[i]] = 1.0
    return masks


@dataclass
class TrainResult:
    model: StageAModel
    schedule: TransitionSchedule
    log: list = field(default_factory=list)


def fit_ratio_calibration(
    model: StageAModel, ops: TorchScheduleOps, config: StageAConfig
) -> None:
    """Measure the chain's requested-to-realized response and store its
    affine inverse in the model's calibration buffers.

    One heterogeneous batched rollout probes every (domain, class) pair at
    config.calibration_values with config.calibration_samples repeats; a
    least-squares line per pair maps requests onto effective targets.
    """
    from .sample import sample_chain

    k = model.num_classes
    values = list(config.calibration_values)
    reps = config.calibration_samples
    rows = []
    for d in range(len(DOMAINS)):
        for c in range(k):
            for v in values:
                for _ in range(reps):
                    rows.append((d, c, v))
    targets = torch.zeros((len(rows), k))
    masks = torch.zeros((len(rows), k))
    domain_idx = torch.zeros((len(rows),), dtype=torch.long)
    for i, (d, c, v) in enumerate(rows):
        targets[i, c] = v
        masks[i, c] = 1.0
        domain_idx[i] = d

    generator = torch.Generator().manual_seed(config.seed + 999)
    x = sample_chain(model, ops, targets, masks, domain_idx, generator, calibrated=False)
    realized = torch.zeros(len(rows))
    for i, (d, c, v) in enumerate(rows):
        realized[i] = (x[i] == c).float().mean()

    gain = torch.ones(len(DOMAINS), k)
    bias = torch.zeros(len(DOMAINS), k)
    for d in range(len(DOMAINS)):
        for c in range(k):
            sel = [i for i, (dd, cc, _) in enumerate(rows) if dd == d and cc == c]
            xs = np.array([rows[i][2] for i in sel])
            ys = realized[torch.tensor(sel)].numpy()
            a, b = np.polyfit(xs, ys, 1)
            if not np.isfinite(a) or a < 0.25:
                continue  # degenerate response, keep identity
            gain[d, c] = float(a)
            bias[d, c] = float(np.clip(b, -0.5, 0.5))
    model.calib_gain.copy_(gain)
    model.calib_bias.copy_(bias)


def train_stage_a(
    corpus: list[tuple[LabelGrid, object]],
    config: StageAConfig,
    schema: ClassSchema,
    checkpoint_path: Path | None = None,
    log_path: Path | None = None,
) -> TrainResult:
    """Optimize the stage objective over a prepared corpus.

    Deterministic given (corpus order, config.seed): reruns produce a
    bit-identical loss log. Raises NonFiniteLoss with the step index on
    divergence.
    """
    if not corpus:
        raise NonFiniteLoss("empty corpus")
    k = schema.num_classes
    prepared = prepare_corpus(corpus, config.layout_size, k)

    torch.manual_seed(config.seed)
    model = StageAModel(
        num_classes=k,
        layout_size=config.layout_size,
        base_channels=config.base_channels,
        channel_mults=tuple(config.channel_mults),
        emb_dim=config.emb_dim,
    )
    schedule = TransitionSchedule.cosine(k, config.num_steps)
    ops = TorchScheduleOps(schedule)
    generator = torch.Generator().manual_seed(config.seed)
    optimizer = torch.optim.Adam(model.parameters(), lr=config.learning_rate)
    scheduler = None
    if config.lr_decay:
        scheduler = torch.optim.lr_scheduler.CosineAnnealingLR(
            optimizer, T_max=config.train_steps, eta_min=config.learning_rate * 0.1
        )

    n = prepared.x0.shape[0]
    log: list[dict] = []
    for step in range(config.train_steps):
        idx = torch.randint(0, n, (config.batch_size,), generator=generator)
        targets = prepared.ratios[idx]
        masks = sample_constraint_masks(
            config.batch_size,
            k,
            config.p_mask,
            config.p_mask_all_zero,
            generator,
            p_single=config.p_mask_single,
        )
        try:
            total, parts = stage_a_loss(
                model,
                ops,
                prepared.x0[idx],
                prepared.valid[idx],
                targets,
                masks,
                prepared.domain_idx[idx],
                generator,
            )
            if config.conflict_weight > 0:
                half = max(1, config.batch_size // 2)
                conflict_masks = sample_constraint_masks(
                    half, k, config.p_mask, 0.0, generator, p_single=0.5
                )
                conflict = constraint_conflict_loss(
                    model,
                    ops,
                    prepared.x0[idx[:half]],
                    prepared.valid[idx[:half]],
                    targets.roll(1, dims=0)[:half],
                    conflict_masks,
                    prepared.domain_idx[idx[:half]],
                    generator,
                )
                total = total + config.conflict_weight * conflict
                parts["conflict"] = float(conflict.detach())
        except NonFiniteLoss as exc:
            raise NonFiniteLoss(f"divergence at step {step}: {exc}") from exc
        optimizer.zero_grad()
        total.backward()
        if config.max_grad_norm > 0:
            torch.nn.utils.clip_grad_norm_(model.parameters(), config.max_grad_norm)
        optimizer.step()
        if scheduler is not None:
            scheduler.step()
        log.append({"step": step, **parts})

    if config.calibrate:
        fit_ratio_calibration(model, ops, config)

    if log_path is not None:
        write_training_log(log_path, log)
    if checkpoint_path is not None:
        from ..checkpoint import save_stage_a

        save_stage_a(checkpoint_path, model, config, schema, step=config.train_steps)
    return TrainResult(model=model, schedule=schedule, log=log)


def write_training_log(path: Path, log: list[dict]) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(["step", "vlb", "ce", "ratio", "total"])
        for row in log:
            writer.writerow([row["step"], row["vlb"], row["ce"], row["ratio"], row["total"]])
