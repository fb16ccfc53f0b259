"""Run configuration: one TOML/JSON file with strict unknown-key rejection
and dotted-path overrides."""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field
from pathlib import Path

from .enrichment import EnrichmentConfig
from .errors import ConfigError
from .schema import LOVEDA_SCHEMA, ClassSchema
from .segmentation.harness import SegConfig
from .stage_a.train import StageAConfig
from .stage_b.train import StageBConfig
from .corpus.toy import ToyCorpusSpec


@dataclass
class SegRunConfig:
    """Segmentation phase settings: model/training knobs plus run seeds."""

    base_channels: int = 16
    train_steps: int = 400
    batch_size: int = 8
    learning_rate: float = 2e-3
    seeds: tuple = (0, 1, 2)
    mode: str = "concatenate"
    synthetic_fraction: float = 0.5

    def seg_config(self) -> SegConfig:
        return SegConfig(
            base_channels=self.base_channels,
            train_steps=self.train_steps,
            batch_size=self.batch_size,
            learning_rate=self.learning_rate,
        )

    def to_dict(self) -> dict:
        out = dict(self.__dict__)
        out["seeds"] = list(self.seeds)
        return out

    @classmethod
    def from_dict(cls, data: dict) -> "SegRunConfig":
        data = dict(data)
        data["seeds"] = tuple(data.get("seeds", (0, 1, 2)))
        return cls(**data)


@dataclass
class RunConfig:
    seed: int = 0
    class_names: tuple = ()  # empty means the 7-class land-cover schema
    corpus_root: str = ""  # empty means "generate the toy corpus"
    toy: ToyCorpusSpec = field(default_factory=ToyCorpusSpec)
    stage_a: StageAConfig = field(default_factory=StageAConfig)
    stage_b: StageBConfig = field(default_factory=StageBConfig)
    enrichment: EnrichmentConfig = field(default_factory=EnrichmentConfig)
    segmentation: SegRunConfig = field(default_factory=SegRunConfig)

    def schema(self) -> ClassSchema:
        if self.class_names:
            return ClassSchema(tuple(self.class_names))
        return LOVEDA_SCHEMA

    def to_dict(self) -> dict:
        return {
            "seed": self.seed,
            "class_names": list(self.class_names),
            "corpus_root": self.corpus_root,
            "toy": dataclasses.asdict(self.toy),
            "stage_a": self.stage_a.to_dict(),
            "stage_b": self.stage_b.to_dict(),
            "enrichment": self.enrichment.to_dict(),
            "segmentation": self.segmentation.to_dict(),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "RunConfig":
        _reject_unknown(data, {f.name for f in dataclasses.fields(cls)}, "")
        out = cls()
        if "seed" in data:
            out.seed = _expect_int(data["seed"], "seed")
        if "class_names" in data:
            out.class_names = tuple(data["class_names"])
        if "corpus_root" in data:
            out.corpus_root = str(data["corpus_root"])
        if "toy" in data:
            out.toy = _build(ToyCorpusSpec, data["toy"], "toy")
        if "stage_a" in data:
            out.stage_a = _build(StageAConfig, _tupled(data["stage_a"]), "stage_a")
        if "stage_b" in data:
            out.stage_b = _build(StageBConfig, _tupled(data["stage_b"]), "stage_b")
        if "enrichment" in data:
            try:
                out.enrichment = EnrichmentConfig.from_dict(data["enrichment"])
            except (TypeError, ValueError) as exc:
                raise ConfigError(f"enrichment: {exc}") from exc
        if "segmentation" in data:
            _reject_unknown(
                data["segmentation"],
                {f.name for f in dataclasses.fields(SegRunConfig)},
                "segmentation",
            )
            out.segmentation = SegRunConfig.from_dict(data["segmentation"])
        out.validate()
        return out

    def validate(self) -> None:
        checks = [
            (self.toy.size >= 16, "toy.size must be >= 16"),
            (self.stage_a.num_steps >= 1, "stage_a.num_steps must be >= 1"),
            (self.stage_a.layout_size >= 8, "stage_a.layout_size must be >= 8"),
            (0.0 <= self.stage_a.p_mask <= 1.0, "stage_a.p_mask must lie in [0, 1]"),
            (self.stage_b.num_steps >= 2, "stage_b.num_steps must be >= 2"),
            (self.stage_b.sample_steps >= 1, "stage_b.sample_steps must be >= 1"),
            (self.segmentation.train_steps >= 1, "segmentation.train_steps must be >= 1"),
            (len(self.segmentation.seeds) >= 1, "segmentation.seeds must be non-empty"),
        ]
        for ok, message in checks:
            if not ok:
                raise ConfigError(message)
        if self.corpus_root and not Path(self.corpus_root).is_dir():
            raise ConfigError(f"corpus_root does not exist: {self.corpus_root}")


def _expect_int(value, name: str) -> int:
    if isinstance(value, bool) or not isinstance(value, int):
        raise ConfigError(f"{name} must be an integer, got {value!r}")
    return value


def _tupled(section: dict) -> dict:
    section = dict(section)
    if "channel_mults" in section:
        section["channel_mults"] = tuple(section["channel_mults"])
    return section


def _reject_unknown(data: dict, allowed: set, where: str) -> None:
    if not isinstance(data, dict):
        raise ConfigError(f"section {where or '<root>'} must be a table/object")
    unknown = set(data) - allowed
    if unknown:
        raise ConfigError(f"unknown key(s) in {where or '<root>'}: {sorted(unknown)}")


def _build(cls, data: dict, where: str):
    _reject_unknown(data, {f.name for f in dataclasses.fields(cls)}, where)
    try:
        return cls(**data)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{where}: {exc}") from exc


def load_config(path: str | Path) -> RunConfig:
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file not found: {path}")
    text = path.read_text()
    if path.suffix == ".toml":
        try:
            import tomllib  # Python >= 3.11
        except ModuleNotFoundError:
            import tomli as tomllib
        try:
            data = tomllib.loads(text)
        except Exception as exc:
            raise ConfigError(f"invalid TOML in {path}: {exc}") from exc
    else:
        try:
            data = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"invalid JSON in {path}: {exc}") from exc
    return RunConfig.from_dict(data)


def save_config(config: RunConfig, path: str | Path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(config.to_dict(), indent=2, sort_keys=True))


def apply_overrides(config: RunConfig, overrides: list[str]) -> RunConfig:
    """Apply CLI overrides of the form section.key=value (values parse as
    JSON literals, falling back to strings)."""
    data = config.to_dict()
    for item in overrides:
        if "=" not in item:
            raise ConfigError(f"override must look like key=value, got {item!r}")
        dotted, raw = item.split("=", 1)
        try:
            value = json.loads(raw)
        except json.JSONDecodeError:
            value = raw
        node = data
        parts = dotted.split(".")
        for part in parts[:-1]:
            if part not in node or not isinstance(node[part], dict):
                raise ConfigError(f"unknown config section in override: {dotted!r}")
            node = node[part]
        if parts[-1] not in node:
            raise ConfigError(f"unknown config key in override: {dotted!r}")
        node[parts[-1]] = value
    return RunConfig.from_dict(data)
