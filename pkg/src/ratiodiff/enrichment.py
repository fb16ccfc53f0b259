"""Greedy long-tail enrichment: target the most underrepresented class per
domain, synthesize candidate pairs through both stages, accept layouts whose
realized ratios meet the tolerance, and fold accepted masks into the running
statistics."""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import BudgetExhausted, EmptyDomainStats
from .prompting import ParsedPrompt, PromptEncoderConfig, encode_prompt, render_prompt
from .schema import DOMAINS, ClassSchema, DomainLabel
from .corpus.grids import ImageSample, ratio_vector
from .corpus.loveda import META_DIR, domain_dir, write_pair
from .corpus.stats import CorpusStats, accumulate_stats
from .stage_a.sample import sample_layouts
from .stage_a.types import RatioTarget
from .stage_b.sample import sample_image, upsample_layout


@dataclass
class EnrichmentConfig:
    """Targets, acceptance tolerance, and the upweight rule's knobs."""

    target_counts: dict = field(
        default_factory=lambda: {DomainLabel.RURAL: 894, DomainLabel.URBAN: 1106}
    )
    tolerance: float = 0.03
    boost: float = 5.0
    cap: float = 0.35
    floor: float = 0.10
    max_attempts_per_sample: int = 8
    secondary_constraints: int = 0  # 0..2 extra near-current constraints
    proposal_batch: int = 8
    image_sample_steps: int = 20
    seed: int = 0

    def __post_init__(self):
        if self.tolerance <= 0:
            raise ValueError("tolerance must be positive")
        if self.boost <= 1:
            raise ValueError("boost factor must exceed 1")
        if any(v < 0 for v in self.target_counts.values()):
            raise ValueError("target counts must be >= 0")

    def to_dict(self) -> dict:
        return {
            "target_counts": {d.value: int(c) for d, c in self.target_counts.items()},
            "tolerance": self.tolerance,
            "boost": self.boost,
            "cap": self.cap,
            "floor": self.floor,
            "max_attempts_per_sample": self.max_attempts_per_sample,
            "secondary_constraints": self.secondary_constraints,
            "proposal_batch": self.proposal_batch,
            "image_sample_steps": self.image_sample_steps,
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "EnrichmentConfig":
        data = dict(data)
        if "target_counts" in data:
            data["target_counts"] = {
                DomainLabel.from_string(k): int(v) for k, v in data["target_counts"].items()
            }
        return cls(**data)


@dataclass
class EnrichmentState:
    """Running stats plus the accepted-sample manifest and attempt counters."""

    stats: CorpusStats
    manifest: list = field(default_factory=list)
    attempts: int = 0
    rejections: list = field(default_factory=list)

    def accepted_count(self, domain: DomainLabel) -> int:
        return sum(1 for rec in self.manifest if rec["domain"] == domain.value)


def background_index(schema: ClassSchema) -> int | None:
    """Stored index of the Background class, if the schema has one."""
    for i, name in enumerate(schema.class_names):
        if name.lower() == "background":
            return i + 1
    return None


def most_underrepresented(stats: CorpusStats, domain: DomainLabel, schema: ClassSchema) -> int:
    """Stored class index (1..K) with the lowest ratio among non-background
    classes; ties break toward the lowest index."""
    ratios = stats.domain_ratio(domain)  # raises EmptyDomainStats
    bg = background_index(schema)
    best = None
    for idx in range(1, schema.num_classes + 1):
        if idx == bg:
            continue
        r = ratios[idx - 1]
        if best is None or r < ratios[best - 1]:
            best = idx
    if best is None:
        raise EmptyDomainStats("schema has no non-background classes")
    return best


def propose_constraints(
    stats: CorpusStats,
    domain: DomainLabel,
    config: EnrichmentConfig,
    rng: np.random.Generator,
    schema: ClassSchema,
) -> RatioTarget:
    """Constrain the selected class to max(floor, min(cap, boost * current));
    optionally add up to two mid-tail classes near their current ratios."""
    ratios = stats.domain_ratio(domain)
    selected = most_underrepresented(stats, domain, schema)
    current = float(ratios[selected - 1])
    target_value = max(config.floor, min(config.cap, config.boost * current))

    targets = np.zeros(schema.num_classes)
    mask = np.zeros(schema.num_classes)
    targets[selected - 1] = target_value
    mask[selected - 1] = 1.0

    if config.secondary_constraints > 0:
        bg = background_index(schema)
        order = np.argsort(ratios)  # ascending
        mid_tail = [
            int(i) + 1
            for i in order
            if (int(i) + 1) not in (selected, bg) and ratios[i] > 0
        ]
        n_extra = int(rng.integers(0, config.secondary_constraints + 1))
        budget = 1.0 - target_value
        for idx in mid_tail[: max(len(mid_tail) // 2, 1)][:n_extra]:
            value = float(min(ratios[idx - 1], budget))
            if value <= 0:
                continue
            targets[idx - 1] = round(value, 2) or value
            mask[idx - 1] = 1.0
            budget -= targets[idx - 1]
    return RatioTarget(targets=targets, mask=mask)


def acceptance_check(
    realized: np.ndarray, target: RatioTarget, tolerance: float
) -> tuple[bool, np.ndarray]:
    """Accept iff every constrained class deviates at most `tolerance`;
    unconstrained classes never cause rejection. Returns per-class deviations."""
    realized = np.asarray(realized, dtype=np.float64)
    deviations = np.abs(realized - target.targets) * target.mask
    return bool((deviations <= tolerance + 1e-12).all()), deviations


def _constrained_prompt(target: RatioTarget, domain: DomainLabel, schema: ClassSchema) -> ParsedPrompt:
    constraints = [
        (schema.class_names[i], round(float(target.targets[i]), 4))
        for i in range(schema.num_classes)
        if target.mask[i] > 0
    ]
    return ParsedPrompt(domain=domain, constraints=constraints)


def run_enrichment(
    stage_a_model,
    stage_a_schedule,
    synth,
    synth_schedule,
    real_stats: CorpusStats,
    config: EnrichmentConfig,
    out_root: Path,
    schema: ClassSchema,
    write_images: bool = True,
) -> EnrichmentState:
    """Fill per-domain target counts; deterministic given config.seed.

    Acceptance is decided on the Stage-A layout's realized ratio before any
    image is rendered. Raises BudgetExhausted when a domain's attempt budget
    (target count x max_attempts_per_sample) runs out first.
    """
    out_root = Path(out_root)
    state = EnrichmentState(stats=real_stats.copy())
    prompt_config = PromptEncoderConfig(token_dim=synth.denoiser.prompt_proj.in_features)

    for domain_idx, domain in enumerate(DOMAINS):
        target_count = int(config.target_counts.get(domain, 0))
        if target_count == 0:
            continue
        budget = target_count * config.max_attempts_per_sample
        spent = 0
        rng = np.random.default_rng(np.random.SeedSequence([config.seed, domain_idx]))
        while state.accepted_count(domain) < target_count:
            if spent >= budget:
                constrained_rejections = [r for r in state.rejections if r["domain"] == domain.value]
                histogram: dict = {}
                for r in constrained_rejections:
                    histogram[r["class_name"]] = histogram.get(r["class_name"], 0) + 1
                rate = state.accepted_count(domain) / max(spent, 1)
                raise BudgetExhausted(
                    f"{domain.value}: budget of {budget} attempts exhausted at "
                    f"{state.accepted_count(domain)}/{target_count} accepted "
                    f"(acceptance rate {rate:.3f})",
                    acceptance_rate=rate,
                    rejection_histogram=histogram,
                )
            target = propose_constraints(state.stats, domain, config, rng, schema)
            parsed = _constrained_prompt(target, domain, schema)
            prompt_text = render_prompt(parsed)
            prompt_embedding = encode_prompt(parsed, prompt_config, schema)

            batch = min(config.proposal_batch, budget - spent)
            layout_seed = int(np.random.SeedSequence([config.seed, domain_idx, spent]).generate_state(1)[0])
            layouts = sample_layouts(
                stage_a_model, stage_a_schedule, target, domain, batch, layout_seed
            )
            for j, layout in enumerate(layouts):
                attempt_index = spent
                spent += 1
                state.attempts += 1
                realized = ratio_vector(layout)
                accepted, deviations = acceptance_check(realized, target, config.tolerance)
                if not accepted:
                    worst = int(np.argmax(deviations))
                    state.rejections.append(
                        {
                            "attempt": attempt_index,
                            "domain": domain.value,
                            "class_name": schema.class_names[worst],
                            "deviation": float(deviations[worst]),
                        }
                    )
                    continue
                index = state.accepted_count(domain)
                stem = f"syn_{domain.value.lower()}_{index:05d}"
                image_seed = int(
                    np.random.SeedSequence([config.seed, domain_idx, 1_000_000 + index]).generate_state(1)[0]
                )
                # stats track the mask as persisted (upsampled to the image
                # resolution); an integer upsample factor keeps the realized
                # ratio exact, so acceptance and the recount oracle agree
                persisted_mask = upsample_layout(layout, synth.image_size)
                record = {
                    "stem": stem,
                    "domain": domain.value,
                    "prompt": prompt_text,
                    "target_ratios": [float(v) for v in target.targets],
                    "constraint_mask": [int(v) for v in target.mask],
                    "realized_ratios": [float(v) for v in ratio_vector(persisted_mask)],
                    "seed": image_seed,
                    "layout_seed": layout_seed,
                    "attempt": attempt_index,
                }
                if write_images:
                    sample = sample_image(
                        synth,
                        synth_schedule,
                        layout,
                        prompt_embedding,
                        seed=image_seed,
                        num_steps=config.image_sample_steps,
                    )
                    img_path, mask_path = write_pair(out_root, "Train", domain, stem, sample)
                    record["image_path"] = str(img_path)
                    record["mask_path"] = str(mask_path)
                    meta_dir = domain_dir(out_root, "Train", domain) / META_DIR
                    meta_dir.mkdir(parents=True, exist_ok=True)
                    (meta_dir / f"{stem}.json").write_text(json.dumps(record, indent=2, sort_keys=True))
                state.stats = accumulate_stats(state.stats, persisted_mask, domain)
                state.manifest.append(record)
                if state.accepted_count(domain) >= target_count:
                    break

    write_manifest(out_root, state)
    return state


def write_manifest(out_root: Path, state: EnrichmentState) -> None:
    out_root = Path(out_root)
    out_root.mkdir(parents=True, exist_ok=True)
    with open(out_root / "manifest.jsonl", "w") as handle:
        for record in state.manifest:
            handle.write(json.dumps(record, sort_keys=True) + "\n")
    with open(out_root / "rejections.csv", "w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(["attempt", "domain", "class", "deviation"])
        for r in state.rejections:
            writer.writerow([r["attempt"], r["domain"], r["class_name"], r["deviation"]])
