"""Resumable end-to-end experiment pipeline with content-hashed phase markers.

Phases: corpus -> stats -> train_a -> train_b -> enrich -> seg -> report.
Each phase's marker stores a hash chaining its own config subsection with
every upstream hash, so editing a phase's hyperparameters invalidates that
phase and everything downstream, and nothing upstream.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass
from pathlib import Path

from .checkpoint import load_stage_a, load_stage_b
from .config import RunConfig
from .enrichment import run_enrichment
from .errors import PipelineError, RatiodiffError
from .schema import DOMAINS
from .corpus.loveda import iter_grids
from .corpus.stats import CorpusStats, stats_from_pairs
from .corpus.toy import make_toy_corpus
from .segmentation.harness import MixSpec, train_segmenter
from .segmentation.metrics import render_comparison_table
from .stage_a.train import train_stage_a
from .stage_b.train import train_stage_b

PHASES = ("corpus", "stats", "train_a", "train_b", "enrich", "seg", "report")


def _hash(payload) -> str:
    return hashlib.sha256(json.dumps(payload, sort_keys=True).encode()).hexdigest()[:16]


def phase_hashes(config: RunConfig) -> dict:
    """Chained per-phase content hashes."""
    c = config.to_dict()
    hashes = {}
    hashes["corpus"] = _hash({"seed": c["seed"], "toy": c["toy"], "corpus_root": c["corpus_root"]})
    hashes["stats"] = _hash({"up": hashes["corpus"]})
    hashes["train_a"] = _hash({"up": hashes["stats"], "cfg": c["stage_a"]})
    hashes["train_b"] = _hash({"up": hashes["stats"], "cfg": c["stage_b"]})
    hashes["enrich"] = _hash(
        {"up": [hashes["train_a"], hashes["train_b"]], "cfg": c["enrichment"]}
    )
    hashes["seg"] = _hash({"up": hashes["enrich"], "cfg": c["segmentation"]})
    hashes["report"] = _hash({"up": hashes["seg"]})
    return hashes


@dataclass
class PhasePaths:
    run_dir: Path

    @property
    def markers(self) -> Path:
        return self.run_dir / "phases"

    @property
    def corpus(self) -> Path:
        return self.run_dir / "corpus"

    @property
    def stats_report(self) -> Path:
        return self.run_dir / "stats" / "original_stats.json"

    @property
    def stage_a_ckpt(self) -> Path:
        return self.run_dir / "checkpoints" / "stage_a.pt"

    @property
    def stage_a_log(self) -> Path:
        return self.run_dir / "logs" / "stage_a.csv"

    @property
    def stage_b_ckpt(self) -> Path:
        return self.run_dir / "checkpoints" / "stage_b.pt"

    @property
    def stage_b_log(self) -> Path:
        return self.run_dir / "logs" / "stage_b.csv"

    @property
    def synthetic(self) -> Path:
        return self.run_dir / "synthetic"

    @property
    def enriched_stats(self) -> Path:
        return self.run_dir / "stats" / "augmented_stats.json"

    @property
    def seg_dir(self) -> Path:
        return self.run_dir / "seg"

    @property
    def report_json(self) -> Path:
        return self.run_dir / "report" / "comparison.json"

    @property
    def report_table(self) -> Path:
        return self.run_dir / "report" / "comparison.txt"


def _marker_path(paths: PhasePaths, phase: str) -> Path:
    return paths.markers / f"{phase}.json"


def _phase_done(paths: PhasePaths, phase: str, expected_hash: str) -> bool:
    marker = _marker_path(paths, phase)
    if not marker.is_file():
        return False
    try:
        data = json.loads(marker.read_text())
    except json.JSONDecodeError:
        return False
    if data.get("hash") != expected_hash:
        return False
    return all(Path(p).exists() for p in data.get("outputs", []))


def _write_marker(paths: PhasePaths, phase: str, expected_hash: str, outputs: list) -> None:
    paths.markers.mkdir(parents=True, exist_ok=True)
    _marker_path(paths, phase).write_text(
        json.dumps({"hash": expected_hash, "outputs": [str(p) for p in outputs]}, indent=2)
    )


def _corpus_root(config: RunConfig, paths: PhasePaths) -> Path:
    return Path(config.corpus_root) if config.corpus_root else paths.corpus


def run_pipeline(config: RunConfig, run_dir: Path, echo=print) -> dict:
    """Run every phase that is stale; returns the final comparison report."""
    paths = PhasePaths(Path(run_dir))
    paths.run_dir.mkdir(parents=True, exist_ok=True)
    hashes = phase_hashes(config)
    schema = config.schema()
    corpus_root = _corpus_root(config, paths)

    def run_phase(phase: str, fn, outputs: list) -> None:
        if _phase_done(paths, phase, hashes[phase]):
            echo(f"[pipeline] {phase}: up to date")
            return
        echo(f"[pipeline] {phase}: running")
        try:
            fn()
        except RatiodiffError as exc:
            raise PipelineError(phase, str(exc)) from exc
        missing = [str(p) for p in outputs if not Path(p).exists()]
        if missing:
            raise PipelineError(phase, f"expected outputs missing: {missing}")
        _write_marker(paths, phase, hashes[phase], outputs)

    def do_corpus():
        if not config.corpus_root:
            make_toy_corpus(paths.corpus, config.toy, schema)

    corpus_outputs = [] if config.corpus_root else [paths.corpus / "Train", paths.corpus / "Val"]
    run_phase("corpus", do_corpus, corpus_outputs)

    def do_stats():
        stats = stats_from_pairs(iter_grids(corpus_root, "Train", schema=schema), schema.num_classes)
        stats.save_report(paths.stats_report, schema, split_label="Train")

    run_phase("stats", do_stats, [paths.stats_report])

    def do_train_a():
        pairs = list(iter_grids(corpus_root, "Train", schema=schema))
        train_stage_a(pairs, config.stage_a, schema, paths.stage_a_ckpt, paths.stage_a_log)

    run_phase("train_a", do_train_a, [paths.stage_a_ckpt, paths.stage_a_log])

    def do_train_b():
        from .corpus.loveda import iter_pairs

        pairs = list(iter_pairs(corpus_root, "Train", schema=schema))
        train_stage_b(pairs, config.stage_b, schema, paths.stage_b_ckpt, paths.stage_b_log)

    run_phase("train_b", do_train_b, [paths.stage_b_ckpt, paths.stage_b_log])

    def do_enrich():
        model, schedule_a, _, _, _ = load_stage_a(paths.stage_a_ckpt)
        synth, schedule_b, _, _, _ = load_stage_b(paths.stage_b_ckpt)
        real_stats = stats_from_pairs(
            iter_grids(corpus_root, "Train", schema=schema), schema.num_classes
        )
        state = run_enrichment(
            model, schedule_a, synth, schedule_b, real_stats, config.enrichment,
            paths.synthetic, schema,
        )
        state.stats.save_report(paths.enriched_stats, schema, split_label="Train+synthetic")

    run_phase(
        "enrich",
        do_enrich,
        [paths.synthetic / "manifest.jsonl", paths.enriched_stats],
    )

    seg_outputs = []
    for seed in config.segmentation.seeds:
        seg_outputs += [
            paths.seg_dir / f"real_seed{seed}.json",
            paths.seg_dir / f"mixed_seed{seed}.json",
        ]

    def do_seg():
        paths.seg_dir.mkdir(parents=True, exist_ok=True)
        seg_cfg = config.segmentation.seg_config()
        for seed in config.segmentation.seeds:
            for name, synthetic_root in (("real", None), ("mixed", str(paths.synthetic))):
                mix = MixSpec(
                    real_root=str(corpus_root),
                    synthetic_root=synthetic_root,
                    mode=config.segmentation.mode,
                    synthetic_fraction=config.segmentation.synthetic_fraction,
                    seed=seed,
                )
                _, report = train_segmenter(mix, seg_cfg, schema)
                out = paths.seg_dir / f"{name}_seed{seed}.json"
                out.write_text(json.dumps(report, indent=2, sort_keys=True))

    run_phase("seg", do_seg, seg_outputs)

    def do_report():
        build_report(config, paths, schema)

    run_phase("report", do_report, [paths.report_json, paths.report_table])
    return json.loads(paths.report_json.read_text())


def _mean(values: list) -> float:
    return sum(values) / len(values)


def build_report(config: RunConfig, paths: PhasePaths, schema) -> dict:
    """Aggregate seg runs into the real vs real+synthetic comparison report."""
    runs = {"real": [], "mixed": []}
    for seed in config.segmentation.seeds:
        for name in runs:
            data = json.loads((paths.seg_dir / f"{name}_seed{seed}.json").read_text())
            runs[name].append(data)

    def collect(name: str) -> dict:
        combined = [r["eval"]["combined"] for r in runs[name]]
        per_class = {}
        for cls in schema.class_names:
            vals = [c["per_class_iou"][cls] for c in combined if c["per_class_iou"][cls] is not None]
            per_class[cls] = _mean(vals) if vals else None
        return {
            "mIoU": _mean([c["mIoU"] for c in combined]),
            "mF1": _mean([c["mF1"] for c in combined]),
            "OA": _mean([c["OA"] for c in combined]),
            "per_class_iou": per_class,
            "seeds": list(config.segmentation.seeds),
        }

    original_stats = json.loads(paths.stats_report.read_text())
    augmented_stats = json.loads(paths.enriched_stats.read_text())
    report = {
        "original": collect("real"),
        "augmented": collect("mixed"),
        "gains": {},
        "frequencies": {
            "original": original_stats["combined"]["ratios"],
            "augmented": augmented_stats["combined"]["ratios"],
        },
    }
    report["gains"]["mIoU"] = report["augmented"]["mIoU"] - report["original"]["mIoU"]
    report["gains"]["per_class_iou"] = {
        cls: (
            None
            if report["original"]["per_class_iou"][cls] is None
            or report["augmented"]["per_class_iou"][cls] is None
            else report["augmented"]["per_class_iou"][cls] - report["original"]["per_class_iou"][cls]
        )
        for cls in schema.class_names
    }
    paths.report_json.parent.mkdir(parents=True, exist_ok=True)
    paths.report_json.write_text(json.dumps(report, indent=2, sort_keys=True))

    from .segmentation.metrics import SummaryMetrics
    import numpy as np

    def as_summary(entry: dict) -> SummaryMetrics:
        iou = np.array(
            [np.nan if entry["per_class_iou"][c] is None else entry["per_class_iou"][c] for c in schema.class_names]
        )
        return SummaryMetrics(miou=entry["mIoU"], mf1=entry["mF1"], oa=entry["OA"], iou=iou, f1=iou)

    table = render_comparison_table(
        schema.class_names,
        [("Orig.", as_summary(report["original"])), ("Orig.+Syn.", as_summary(report["augmented"]))],
        title="Mean over seeds, combined-domain evaluation (IoU % per class)",
    )
    paths.report_table.write_text(table)
    return report
