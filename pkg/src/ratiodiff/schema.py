"""Class schemas and domain labels for land-cover label maps.

Stored masks use 0 as the ignore index and 1..K for real classes. All
ratio vectors and model tensors index real classes 0..K-1 internally.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

from .errors import ConfigError


class DomainLabel(enum.Enum):
    """The two acquisition domains of the corpus."""

    URBAN = "Urban"
    RURAL = "Rural"

    @classmethod
    def from_string(cls, text: str) -> "DomainLabel":
        for member in cls:
            if member.value.lower() == text.strip().lower():
                return member
        raise ConfigError(f"unknown domain label: {text!r}")


DOMAINS = (DomainLabel.URBAN, DomainLabel.RURAL)


@dataclass(frozen=True)
class ClassSchema:
    """Ordered real-class names; ignore pixels are stored as 0.

    `num_classes` counts real classes only (K), so stored mask values live
    in {0, 1, ..., K}.
    """

    class_names: tuple[str, ...]
    ignore_index: int = 0

    def __post_init__(self):
        if len(self.class_names) < 2:
            raise ConfigError("a schema needs at least 2 real classes")
        if len(set(n.lower() for n in self.class_names)) != len(self.class_names):
            raise ConfigError("class names must be unique (case-insensitive)")
        if self.ignore_index != 0:
            raise ConfigError("stored masks reserve 0 for ignore")

    @property
    def num_classes(self) -> int:
        return len(self.class_names)

    def class_index(self, name: str) -> int:
        """1-based stored index of a class name (case-insensitive)."""
        lowered = name.strip().lower()
        for i, candidate in enumerate(self.class_names):
            if candidate.lower() == lowered:
                return i + 1
        raise ConfigError(f"unknown class name: {name!r}")

    def to_dict(self) -> dict:
        return {"class_names": list(self.class_names), "ignore_index": self.ignore_index}

    @classmethod
    def from_dict(cls, data: dict) -> "ClassSchema":
        return cls(tuple(data["class_names"]), int(data.get("ignore_index", 0)))


LOVEDA_CLASS_NAMES = (
    "Background",
    "Building",
    "Road",
    "Water",
    "Barren",
    "Forest",
    "Agriculture",
)

LOVEDA_SCHEMA = ClassSchema(LOVEDA_CLASS_NAMES)
