"""Self-describing checkpoint containers for both stages."""

from __future__ import annotations

from pathlib import Path

import torch

from .errors import CheckpointError
from .schema import ClassSchema

FORMAT_VERSION = 1
# reserved so a learned text encoder can replace the structured one later
PROMPT_PROVIDER = "structured-v1"


def _save(path: Path, payload: dict) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    torch.save(payload, path)


def _load(path: Path, expected_kind: str) -> dict:
    path = Path(path)
    if not path.is_file():
        raise CheckpointError(f"checkpoint not found: {path}")
    try:
        payload = torch.load(path, map_location="cpu", weights_only=False)
    except Exception as exc:
        raise CheckpointError(f"unreadable checkpoint {path}: {exc}") from exc
    if not isinstance(payload, dict) or payload.get("kind") != expected_kind:
        raise CheckpointError(
            f"{path} is not a {expected_kind} checkpoint (kind={payload.get('kind') if isinstance(payload, dict) else type(payload)})"
        )
    missing = {"format_version", "schema", "config", "step", "state_dict"} - payload.keys()
    if missing:
        raise CheckpointError(f"{path} missing fields: {sorted(missing)}")
    return payload


def save_stage_a(path: Path, model, config, schema: ClassSchema, step: int) -> None:
    _save(
        path,
        {
            "format_version": FORMAT_VERSION,
            "kind": "stage_a",
            "schema": schema.to_dict(),
            "config": config.to_dict(),
            "step": int(step),
            "embedding_provider": PROMPT_PROVIDER,
            "state_dict": model.state_dict(),
        },
    )


def load_stage_a(path: Path):
    """Returns (model, schedule, config, schema, step)."""
    from .stage_a.model import StageAModel
    from .stage_a.schedule import TransitionSchedule
    from .stage_a.train import StageAConfig

    payload = _load(path, "stage_a")
    schema = ClassSchema.from_dict(payload["schema"])
    config = StageAConfig.from_dict(payload["config"])
    model = StageAModel(
        num_classes=schema.num_classes,
        layout_size=config.layout_size,
        base_channels=config.base_channels,
        channel_mults=tuple(config.channel_mults),
        emb_dim=config.emb_dim,
    )
    try:
        model.load_state_dict(payload["state_dict"])
    except Exception as exc:
        raise CheckpointError(f"stage-A weights do not fit the stored config: {exc}") from exc
    model.eval()
    schedule = TransitionSchedule.cosine(schema.num_classes, config.num_steps)
    return model, schedule, config, schema, payload["step"]


def save_stage_b(path: Path, synth, config, schema: ClassSchema, step: int) -> None:
    _save(
        path,
        {
            "format_version": FORMAT_VERSION,
            "kind": "stage_b",
            "schema": schema.to_dict(),
            "config": config.to_dict(),
            "step": int(step),
            "embedding_provider": PROMPT_PROVIDER,
            "state_dict": synth.state_dict(),
        },
    )


def load_stage_b(path: Path):
    """Returns (synth, schedule, config, schema, step)."""
    from .stage_b.bundle import SynthModel
    from .stage_b.train import StageBConfig

    payload = _load(path, "stage_b")
    schema = ClassSchema.from_dict(payload["schema"])
    config = StageBConfig.from_dict(payload["config"])
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
    try:
        synth.load_state_dict(payload["state_dict"])
    except Exception as exc:
        raise CheckpointError(f"stage-B weights do not fit the stored config: {exc}") from exc
    synth.eval()
    return synth, config.make_schedule(), config, schema, payload["step"]
