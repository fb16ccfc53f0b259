"""Command-line surface: dataset tooling, training, generation, enrichment,
evaluation, and report emission."""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import checkpoint
from .config import RunConfig, apply_overrides, load_config, save_config
from .enrichment import run_enrichment
from .errors import CheckpointError, RatiodiffError
from .pipeline import PhasePaths, build_report, run_pipeline
from .prompting import PromptEncoderConfig, encode_prompt, parse_prompt, to_ratio_target
from .schema import DOMAINS, DomainLabel
from .corpus.loveda import META_DIR, domain_dir, iter_grids, iter_pairs, write_pair
from .corpus.stats import stats_from_pairs
from .corpus.toy import ToyCorpusSpec, make_toy_corpus
from .segmentation.harness import MixSpec, cross_domain_eval, train_segmenter
from .segmentation.model import default_model_factory
from .stage_a.sample import sample_layout
from .stage_b.sample import sample_image
from .corpus.grids import ratio_vector


def _load_run_config(args) -> RunConfig:
    config = load_config(args.config) if args.config else RunConfig()
    if getattr(args, "set", None):
        config = apply_overrides(config, args.set)
    return config


def _write_stats_outputs(out_dir: Path, report: dict, chart: bool, augmented: dict | None) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "stats.json").write_text(json.dumps(report, indent=2, sort_keys=True))
    lines = ["group,class,ratio"]
    groups = list(report["domains"].items()) + [("Combined", report["combined"])]
    for group, entry in groups:
        ratios = entry["ratios"] or [0.0] * len(report["class_names"])
        for name, r in zip(report["class_names"], ratios):
            lines.append(f"{group},{name},{r}")
    (out_dir / "stats.csv").write_text("\n".join(lines) + "\n")
    if chart:
        _frequency_chart(out_dir / "stats.png", report, augmented)


def _frequency_chart(path: Path, report: dict, augmented: dict | None) -> None:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    names = report["class_names"]
    groups = [d.value for d in DOMAINS] + ["Combined"]
    fig, axes = plt.subplots(1, len(groups), figsize=(4 * len(groups), 3.2), sharey=True)
    x = np.arange(len(names))
    width = 0.38 if augmented else 0.7
    for ax, group in zip(axes, groups):
        entry = report["domains"].get(group) or report["combined"]
        ratios = entry["ratios"] or [0.0] * len(names)
        ax.bar(x - (width / 2 if augmented else 0), ratios, width, label="original")
        if augmented:
            aug_entry = augmented["domains"].get(group) or augmented["combined"]
            aug = aug_entry["ratios"] or [0.0] * len(names)
            ax.bar(x + width / 2, aug, width, label="augmented", hatch="//")
        ax.set_title(group)
        ax.set_xticks(x)
        ax.set_xticklabels(names, rotation=60, ha="right", fontsize=7)
    axes[0].set_ylabel("pixel ratio")
    axes[0].legend(fontsize=7)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def cmd_stats(args) -> int:
    config = _load_run_config(args)
    schema = config.schema()
    stats = stats_from_pairs(iter_grids(Path(args.corpus), args.split, schema=schema), schema.num_classes)
    report = stats.to_report(schema, split_label=args.split)
    augmented = None
    if args.augmented:
        aug_stats = stats_from_pairs(
            iter_grids(Path(args.augmented), args.split, schema=schema), schema.num_classes
        )
        merged = stats.merge(aug_stats)
        augmented = merged.to_report(schema, split_label=f"{args.split}+synthetic")
        (Path(args.out_dir) / "augmented.json").parent.mkdir(parents=True, exist_ok=True)
    _write_stats_outputs(Path(args.out_dir), report, chart=not args.no_chart, augmented=augmented)
    if augmented:
        (Path(args.out_dir) / "augmented.json").write_text(
            json.dumps(augmented, indent=2, sort_keys=True)
        )
    print(f"stats written under {args.out_dir}")
    return 0


def cmd_make_toy(args) -> int:
    spec = ToyCorpusSpec(
        train_per_domain=args.train, val_per_domain=args.val, size=args.size, seed=args.seed
    )
    make_toy_corpus(Path(args.out), spec)
    print(f"toy corpus written to {args.out}")
    return 0


def cmd_train_a(args) -> int:
    from .stage_a.train import train_stage_a

    config = _load_run_config(args)
    schema = config.schema()
    pairs = list(iter_grids(Path(args.corpus), "Train", schema=schema))
    result = train_stage_a(pairs, config.stage_a, schema, Path(args.out), Path(args.log))
    print(f"stage-A final loss {result.log[-1]['total']:.4f}; checkpoint at {args.out}")
    return 0


def cmd_train_b(args) -> int:
    from .stage_b.train import train_stage_b

    config = _load_run_config(args)
    schema = config.schema()
    pairs = list(iter_pairs(Path(args.corpus), "Train", schema=schema))
    result = train_stage_b(pairs, config.stage_b, schema, Path(args.out), Path(args.log))
    print(f"stage-B final loss {result.log[-1]['loss']:.4f}; checkpoint at {args.out}")
    return 0


def cmd_generate(args) -> int:
    model, schedule_a, _, schema, _ = checkpoint.load_stage_a(args.stage_a)
    synth, schedule_b, b_config, schema_b, _ = checkpoint.load_stage_b(args.stage_b)
    if schema_b.class_names != schema.class_names:
        raise CheckpointError("stage-A and stage-B checkpoints use different schemas")
    parsed = parse_prompt(args.prompt, schema)
    target = to_ratio_target(parsed, schema)
    prompt_config = PromptEncoderConfig(token_dim=b_config.prompt_token_dim)
    embedding = encode_prompt(parsed, prompt_config, schema)

    out_root = Path(args.out)
    for i in range(args.count):
        seed = int(np.random.SeedSequence([args.seed, i]).generate_state(1)[0])
        layout = sample_layout(model, schedule_a, target, parsed.domain, seed)
        sample = sample_image(
            synth, schedule_b, layout, embedding, seed=seed, num_steps=b_config.sample_steps,
            method=b_config.sampler,
        )
        stem = f"gen_{i:05d}"
        write_pair(out_root, "Train", parsed.domain, stem, sample)
        meta_dir = domain_dir(out_root, "Train", parsed.domain) / META_DIR
        meta_dir.mkdir(parents=True, exist_ok=True)
        realized = ratio_vector(sample.paired_label)
        sidecar = {
            "prompt": args.prompt,
            "domain": parsed.domain.value,
            "target_ratios": [float(v) for v in target.targets],
            "constraint_mask": [int(v) for v in target.mask],
            "realized_ratios": [float(v) for v in realized],
            "seed": seed,
        }
        (meta_dir / f"{stem}.json").write_text(json.dumps(sidecar, indent=2, sort_keys=True))
    print(f"wrote {args.count} pair(s) under {out_root}")
    return 0


def cmd_enrich(args) -> int:
    config = _load_run_config(args)
    schema = config.schema()
    model, schedule_a, _, _, _ = checkpoint.load_stage_a(args.stage_a)
    synth, schedule_b, _, _, _ = checkpoint.load_stage_b(args.stage_b)
    real_stats = stats_from_pairs(
        iter_grids(Path(args.corpus), "Train", schema=schema), schema.num_classes
    )
    state = run_enrichment(
        model, schedule_a, synth, schedule_b, real_stats, config.enrichment, Path(args.out), schema
    )
    state.stats.save_report(Path(args.out) / "stats_after.json", schema, "Train+synthetic")
    print(
        f"accepted {len(state.manifest)} sample(s) over {state.attempts} attempt(s); "
        f"manifest at {Path(args.out) / 'manifest.jsonl'}"
    )
    return 0


def cmd_train_seg(args) -> int:
    config = _load_run_config(args)
    schema = config.schema()
    domains = _parse_domains(args.train_domains)
    mix = MixSpec(
        real_root=args.real,
        synthetic_root=args.synthetic,
        mode=config.segmentation.mode,
        synthetic_fraction=config.segmentation.synthetic_fraction,
        seed=args.seed,
    )
    model, report = train_segmenter(mix, config.segmentation.seg_config(), schema, domains, DOMAINS)
    Path(args.out).parent.mkdir(parents=True, exist_ok=True)
    Path(args.out).write_text(json.dumps(report, indent=2, sort_keys=True))
    if args.save_model:
        import torch

        torch.save(
            {
                "kind": "segmenter",
                "state_dict": model.state_dict(),
                "base_channels": config.segmentation.base_channels,
                "class_names": list(schema.class_names),
            },
            args.save_model,
        )
    print(f"eval report at {args.out}")
    return 0


def cmd_eval(args) -> int:
    import torch

    config = _load_run_config(args)
    schema = config.schema()
    try:
        payload = torch.load(args.model, map_location="cpu", weights_only=False)
        model = default_model_factory(schema.num_classes, payload["base_channels"])
        model.load_state_dict(payload["state_dict"])
    except Exception as exc:
        raise CheckpointError(f"cannot load segmenter from {args.model}: {exc}") from exc
    report = cross_domain_eval(model, args.corpus, DomainLabel.from_string(args.domain), schema)
    Path(args.out).parent.mkdir(parents=True, exist_ok=True)
    Path(args.out).write_text(json.dumps(report, indent=2, sort_keys=True))
    print(f"eval report at {args.out}")
    return 0


def cmd_pipeline(args) -> int:
    config = _load_run_config(args)
    run_dir = Path(args.run_dir)
    run_dir.mkdir(parents=True, exist_ok=True)
    save_config(config, run_dir / "config.json")
    report = run_pipeline(config, run_dir)
    print(json.dumps(report["gains"], indent=2, sort_keys=True))
    print(f"report at {run_dir / 'report' / 'comparison.json'}")
    return 0


def cmd_report(args) -> int:
    config = _load_run_config(args)
    paths = PhasePaths(Path(args.run_dir))
    build_report(config, paths, config.schema())
    print(f"report at {paths.report_json}")
    return 0


def _parse_domains(text: str):
    if not text:
        return DOMAINS
    return tuple(DomainLabel.from_string(part) for part in text.split(","))


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ratiodiff",
        description="Prompt-controlled two-stage diffusion augmentation toolkit",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add_config_args(p):
        p.add_argument("--config", type=str, default=None, help="TOML/JSON run config")
        p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                       help="dotted config override, e.g. stage_a.train_steps=500")

    p = sub.add_parser("stats", help="pixel-frequency report and bar chart")
    add_config_args(p)
    p.add_argument("--corpus", required=True)
    p.add_argument("--split", default="Train", choices=["Train", "Val"])
    p.add_argument("--augmented", default=None, help="synthetic corpus to overlay")
    p.add_argument("--out-dir", required=True)
    p.add_argument("--no-chart", action="store_true")
    p.set_defaults(func=cmd_stats)

    p = sub.add_parser("make-toy", help="generate the procedural toy corpus")
    p.add_argument("--out", required=True)
    p.add_argument("--train", type=int, default=60, help="pairs per domain in Train")
    p.add_argument("--val", type=int, default=16, help="pairs per domain in Val")
    p.add_argument("--size", type=int, default=64)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_make_toy)

    p = sub.add_parser("train-a", help="train the layout diffusion stage")
    add_config_args(p)
    p.add_argument("--corpus", required=True)
    p.add_argument("--out", required=True, help="checkpoint path")
    p.add_argument("--log", required=True, help="training-log CSV path")
    p.set_defaults(func=cmd_train_a)

    p = sub.add_parser("train-b", help="train the image synthesis stage")
    add_config_args(p)
    p.add_argument("--corpus", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--log", required=True)
    p.set_defaults(func=cmd_train_b)

    p = sub.add_parser("generate", help="prompt -> layout -> image pairs")
    p.add_argument("--stage-a", required=True)
    p.add_argument("--stage-b", required=True)
    p.add_argument("--prompt", required=True)
    p.add_argument("--count", type=int, default=1)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("enrich", help="greedy long-tail enrichment")
    add_config_args(p)
    p.add_argument("--stage-a", required=True)
    p.add_argument("--stage-b", required=True)
    p.add_argument("--corpus", required=True, help="real corpus for the running stats")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_enrich)

    p = sub.add_parser("train-seg", help="train/evaluate the downstream segmenter")
    add_config_args(p)
    p.add_argument("--real", required=True)
    p.add_argument("--synthetic", default=None)
    p.add_argument("--train-domains", default="", help="comma list, default both")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True, help="eval report JSON path")
    p.add_argument("--save-model", default=None)
    p.set_defaults(func=cmd_train_seg)

    p = sub.add_parser("eval", help="evaluate a saved segmenter on one domain")
    add_config_args(p)
    p.add_argument("--model", required=True)
    p.add_argument("--corpus", required=True)
    p.add_argument("--domain", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("pipeline", help="full experiment: stats/train/enrich/seg/report")
    add_config_args(p)
    p.add_argument("--run-dir", required=True)
    p.set_defaults(func=cmd_pipeline)

    p = sub.add_parser("report", help="re-render the comparison report")
    add_config_args(p)
    p.add_argument("--run-dir", required=True)
    p.set_defaults(func=cmd_report)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except RatiodiffError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code


if __name__ == "__main__":
    sys.exit(main())
