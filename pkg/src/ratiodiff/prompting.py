"""Prompt parsing and deterministic structured prompt encoding.

Grammar (case-insensitive, whitespace-tolerant):

    prompt := preamble? article? DOMAIN "area" ("of" clause (("," | "and") clause)*)?
    clause := NUMBER "%" CLASSNAME

DOMAIN is "urban" or "rural"; CLASSNAME matches the active schema. The
canonical renderer emits "a high-resolution satellite image of a <domain>
area of <n>% <class>, ...".
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    DuplicateClass,
    FractionOutOfRange,
    FractionsExceedOne,
    NoDomainFound,
    UnknownClassName,
)
from .schema import LOVEDA_SCHEMA, ClassSchema, DomainLabel
from .stage_a.types import RatioTarget

_DOMAIN_RE = re.compile(r"\b(urban|rural)\s+area\b", re.IGNORECASE)
_CLAUSE_RE = re.compile(r"^\s*(\d+(?:\.\d{1,2})?)\s*%\s*([a-zA-Z][a-zA-Z ]*?)\s*$")
_SPLIT_RE = re.compile(r"\s*,\s*|\s+and\s+", re.IGNORECASE)

# Seeds the fixed projection matrices of the structured encoder; not tunable.
_ENCODER_SEED = 7919


@dataclass
class ParsedPrompt:
    """Domain plus (class name, fraction) constraints extracted from text."""

    domain: DomainLabel
    constraints: list = field(default_factory=list)
    raw_text: str = ""

    def constraint_dict(self) -> dict:
        return dict(self.constraints)


def parse_prompt(text: str, schema: ClassSchema | None = None) -> ParsedPrompt:
    """Parse free text into (domain, ratio constraints).

    Raises NoDomainFound, UnknownClassName, DuplicateClass,
    FractionOutOfRange, or FractionsExceedOne.
    """
    schema = schema or LOVEDA_SCHEMA
    match = _DOMAIN_RE.search(text)
    if match is None:
        raise NoDomainFound(f"no 'urban area' or 'rural area' phrase in {text!r}")
    domain = DomainLabel.URBAN if match.group(1).lower() == "urban" else DomainLabel.RURAL

    constraints: list[tuple[str, float]] = []
    tail = text[match.end():]
    of_match = re.match(r"\s*of\b", tail, re.IGNORECASE)
    if of_match is not None:
        clause_text = tail[of_match.end():].strip().rstrip(".")
        if clause_text:
            seen = set()
            for raw_clause in _SPLIT_RE.split(clause_text):
                if not raw_clause.strip():
                    continue
                clause = _CLAUSE_RE.match(raw_clause)
                if clause is None:
                    raise UnknownClassName(f"cannot parse clause {raw_clause!r}")
                number, name = clause.group(1), clause.group(2)
                try:
                    idx = schema.class_index(name)
                except Exception:
                    raise UnknownClassName(f"unknown class name {name!r}") from None
                canonical = schema.class_names[idx - 1]
                if canonical in seen:
                    raise DuplicateClass(f"class {canonical!r} constrained twice")
                seen.add(canonical)
                # single rounding: "12.5" % parses as float("12.5e-2")
                fraction = float(number + "e-2")
                if not 0.0 < fraction <= 1.0:
                    raise FractionOutOfRange(f"{number}% is outside (0, 100]")
                constraints.append((canonical, fraction))
            total = sum(f for _, f in constraints)
            if total > 1.0 + 1e-9:
                raise FractionsExceedOne(f"constraint fractions sum to {total:.4f} > 1")
    return ParsedPrompt(domain=domain, constraints=constraints, raw_text=text)


def _format_percent(fraction: float) -> str:
    text = f"{fraction * 100:.2f}".rstrip("0").rstrip(".")
    return text if text else "0"


def render_prompt(parsed: ParsedPrompt) -> str:
    """Canonical prompt string; parse_prompt(render_prompt(p)) == p."""
    article = "an" if parsed.domain is DomainLabel.URBAN else "a"
    head = f"a high-resolution satellite image of {article} {parsed.domain.value.lower()} area"
    if not parsed.constraints:
        return head
    clauses = [f"{_format_percent(f)}% {name.lower()}" for name, f in parsed.constraints]
    if len(clauses) == 1:
        joined = clauses[0]
    else:
        joined = ", ".join(clauses[:-1]) + " and " + clauses[-1]
    return f"{head} of {joined}"


def to_ratio_target(parsed: ParsedPrompt, schema: ClassSchema | None = None) -> RatioTarget:
    """Constraint list to (targets, mask) vectors over the schema's classes."""
    schema = schema or LOVEDA_SCHEMA
    targets = np.zeros(schema.num_classes, dtype=np.float64)
    mask = np.zeros(schema.num_classes, dtype=np.float64)
    for name, fraction in parsed.constraints:
        idx = schema.class_index(name) - 1
        targets[idx] = fraction
        mask[idx] = 1.0
    return RatioTarget(targets=targets, mask=mask)


@dataclass
class PromptEncoderConfig:
    token_dim: int = 32


@dataclass
class PromptEmbedding:
    """Fixed-length token sequence deterministically derived from a prompt."""

    tokens: np.ndarray  # (1 + K, token_dim)

    @property
    def num_tokens(self) -> int:
        return int(self.tokens.shape[0])

    @property
    def token_dim(self) -> int:
        return int(self.tokens.shape[1])


def _domain_codebook(token_dim: int) -> np.ndarray:
    """Two orthogonal domain codes from a fixed seeded basis."""
    rng = np.random.default_rng(np.random.SeedSequence([_ENCODER_SEED, 0]))
    raw = rng.standard_normal((token_dim, token_dim))
    q, _ = np.linalg.qr(raw)
    return q[:2].astype(np.float64)


def _class_projection(num_classes: int, token_dim: int) -> np.ndarray:
    rng = np.random.default_rng(np.random.SeedSequence([_ENCODER_SEED, 1, num_classes]))
    return rng.standard_normal((num_classes + 2, token_dim)) / np.sqrt(num_classes + 2)


def encode_prompt(
    parsed: ParsedPrompt,
    config: PromptEncoderConfig | None = None,
    schema: ClassSchema | None = None,
) -> PromptEmbedding:
    """Deterministic structured encoding: one domain token plus one token per
    class carrying (one-hot, constrained flag, fraction) through a fixed
    seeded projection."""
    schema = schema or LOVEDA_SCHEMA
    config = config or PromptEncoderConfig()
    k = schema.num_classes
    codebook = _domain_codebook(config.token_dim)
    projection = _class_projection(k, config.token_dim)

    target = to_ratio_target(parsed, schema)
    tokens = np.zeros((1 + k, config.token_dim), dtype=np.float64)
    tokens[0] = codebook[0] if parsed.domain is DomainLabel.URBAN else codebook[1]
    for idx in range(k):
        features = np.zeros(k + 2, dtype=np.float64)
        features[idx] = 1.0
        features[k] = target.mask[idx]
        features[k + 1] = target.targets[idx]
        tokens[1 + idx] = features @ projection
    return PromptEmbedding(tokens=tokens)
