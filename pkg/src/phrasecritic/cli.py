"""Command line front end for the explanation pipeline.

Subcommands cover the full workflow: synth (build a dataset), train (fit
a ranking or binary critic), rank (select explanations for scenes),
counterfactual (evidence against the nearest other class), foil
(classification / detection / correction evaluation), and eval (compare
selection strategies).

Failures print a one-line JSON record to stderr and exit with a stable
code: 2 for usage errors, 3 for missing files, 4 for unreadable
checkpoints, 5 for invalid configuration or data, 1 otherwise. Relative
output paths are resolved against PHRASECRITIC_OUTDIR when it is set.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import fields

import numpy as np

from . import explain, foil, generation, metrics, negatives, render, textproc
from .critic import (CriticHyper, CriticModel, load_checkpoint,
                     save_checkpoint, train_ranker)
from .errors import CheckpointError, ConfigurationError, GenerationError
from .jsonio import write_json
from .worldsim import Dataset, WorldConfig, generate_dataset

EXIT_USAGE = 2
EXIT_MISSING_FILE = 3
EXIT_BAD_CHECKPOINT = 4
EXIT_BAD_CONFIG = 5


def _resolve_out(path: str) -> str:
    outdir = os.environ.get("PHRASECRITIC_OUTDIR")
    if outdir and not os.path.isabs(path):
        path = os.path.join(outdir, path)
    parent = os.path.dirname(path)
    if parent:
        os.makedirs(parent, exist_ok=True)
    return path


def _require_file(path: str) -> str:
    if not os.path.isfile(path):
        raise FileNotFoundError(f"no such file: {path}")
    return path


def _load_dataset(path: str) -> Dataset:
    return Dataset.load(_require_file(path))


def _load_model(path: str) -> CriticModel:
    return load_checkpoint(_require_file(path))


def _select_scenes(dataset: Dataset, args):
    if args.scene:
        by_id = {s.scene_id: s for s in dataset.scenes}
        missing = [i for i in args.scene if i not in by_id]
        if missing:
            raise ValueError(f"unknown scene ids: {missing}")
        scenes = [by_id[i] for i in args.scene]
    else:
        scenes = dataset.scenes_in_split(args.split)
        if not scenes:
            raise ValueError(f"no scenes in split {args.split!r}")
    if args.limit is not None:
        scenes = scenes[:args.limit]
    return scenes


def _hyper_from_args(args) -> CriticHyper:
    overrides = {}
    for field in fields(CriticHyper):
        value = getattr(args, field.name, None)
        if value is not None:
            overrides[field.name] = value
    return CriticHyper(**overrides)


def _emit_scene_svgs(directory: str, items) -> None:
    os.makedirs(directory, exist_ok=True)
    for scene, highlight in items:
        path = os.path.join(directory, f"scene_{scene.scene_id:05d}.svg")
        render.write_svg(path, scene, highlight)


# -- subcommands -------------------------------------------------------------

def cmd_synth(args) -> int:
    config = WorldConfig(
        colors=args.colors, sizes=args.sizes, patterns=args.patterns,
        num_classes=args.classes, scenes_per_class=args.scenes_per_class,
        sentences_per_scene=args.sentences_per_scene,
        foils_per_scene=args.foils_per_scene, noise=args.noise,
        sigma=args.sigma, feature_noise=args.feature_noise)
    dataset = generate_dataset(config, args.seed)
    out = _resolve_out(args.out)
    dataset.save(out)
    if args.emit_svg:
        _emit_scene_svgs(_resolve_out(args.emit_svg),
                         [(s, ()) for s in dataset.scenes[:args.svg_limit]])
    print(f"wrote {len(dataset.scenes)} scenes, "
          f"{len(dataset.sentences)} sentences to {out}")
    return 0


def cmd_train(args) -> int:
    dataset = _load_dataset(args.dataset)
    hyper = _hyper_from_args(args)
    if args.objective == "rank":
        pairs = negatives.build_rank_pairs(
            dataset, k=args.pairs_per_scene, seed=args.seed,
            sentences_per_scene=args.pair_sentences)
        grouped = negatives.ground_rank_pairs(dataset, pairs)
        train = grouped.get("train", [])
        if not train:
            raise ValueError("no training pairs in the train split")
        model = CriticModel.for_taxonomy(dataset.taxonomy, hyper, args.seed,
                                         objective="rank")
        report = train_ranker(model, train, grouped.get("val"),
                              seed=args.seed)
        if args.pairs_out:
            write_json(_resolve_out(args.pairs_out),
                       negatives.pairs_to_json(pairs))
    else:
        model, report = foil.train_foil_classifier(dataset, hyper, args.seed)
    out = _resolve_out(args.out)
    save_checkpoint(model, out)
    if args.report_out:
        write_json(_resolve_out(args.report_out),
                   report.to_json(include_timing=args.include_timing))
    final_val = report.val_metric[-1] if report.val_metric else float("nan")
    print(f"trained {args.objective} critic for {report.epochs} epochs, "
          f"final loss {report.final_train_loss:.4f}, "
          f"val metric {final_val:.4f}, saved to {out}")
    return 0


def cmd_rank(args) -> int:
    dataset = _load_dataset(args.dataset)
    model = _load_model(args.model)
    lms = generation.fit_class_lms(dataset)
    scenes = _select_scenes(dataset, args)
    records = []
    svg_items = []
    for scene in scenes:
        profile = dataset.profile_for(scene.class_id)
        candidates = generation.sample_candidates(
            scene, profile, dataset.taxonomy, lms[scene.class_id],
            n=args.candidates, error_rate=args.error_rate,
            seed=np.random.default_rng([args.seed, 7, scene.scene_id]))
        explanation = explain.select_explanation(
            candidates, scene, model, dataset.taxonomy, dataset.grounder,
            args.threshold)
        records.append(explain.explanation_to_json(explanation, scene))
        if args.emit_svg:
            svg_items.append(
                (scene, tuple(g.part for g in explanation.groundings)))
    out = _resolve_out(args.out)
    write_json(out, {"format": 1, "threshold": args.threshold,
                     "candidates": args.candidates,
                     "error_rate": args.error_rate, "seed": args.seed,
                     "explanations": records})
    if args.emit_svg:
        _emit_scene_svgs(_resolve_out(args.emit_svg), svg_items)
    fallbacks = sum(r["fallback"] for r in records)
    print(f"wrote {len(records)} explanations ({fallbacks} fallbacks) "
          f"to {out}")
    return 0


def cmd_counterfactual(args) -> int:
    dataset = _load_dataset(args.dataset)
    model = _load_model(args.model)
    lms = generation.fit_class_lms(dataset)
    scenes = _select_scenes(dataset, args)
    records = []
    for scene in scenes:
        cf_class = explain.counterfactual_class(scene, dataset.profiles)
        evidence, scores, explanation, neighbour = \
            explain.counterfactual_evidence(
                scene, cf_class, dataset, model, lms, n=args.candidates,
                error_rate=args.error_rate, seed=args.seed,
                threshold=args.threshold)
        cf_name = dataset.profile_for(cf_class).name
        negation, conditional = explain.negate_phrase(evidence, cf_name)
        records.append({
            "scene_id": scene.scene_id,
            "class_id": scene.class_id,
            "class_name": dataset.profile_for(scene.class_id).name,
            "counterfactual_class": cf_class,
            "counterfactual_name": cf_name,
            "neighbour_scene": neighbour.scene_id,
            "evidence": textproc.phrase_to_text(evidence),
            "negation": negation,
            "conditional": conditional,
            "phrase_scores": [
                {"text": textproc.phrase_to_text(p), "score": s}
                for p, s in zip(explanation.phrases, scores)],
        })
    out = _resolve_out(args.out)
    write_json(out, {"format": 1, "candidates": args.candidates,
                     "error_rate": args.error_rate, "seed": args.seed,
                     "counterfactuals": records})
    print(f"wrote {len(records)} counterfactuals to {out}")
    return 0


def cmd_foil(args) -> int:
    dataset = _load_dataset(args.dataset)
    model = _load_model(args.model)
    report = foil.run_foil_eval(dataset, model, split=args.split,
                                tau=args.tau)
    out = _resolve_out(args.out)
    write_json(out, report.to_json())
    if args.table:
        print(report.to_table())
    print(f"wrote foil report ({report.num_examples} examples, "
          f"{report.num_foils} foils) to {out}")
    return 0


def cmd_eval(args) -> int:
    dataset = _load_dataset(args.dataset)
    model = _load_model(args.model)
    lms = generation.fit_class_lms(dataset)
    if args.limit is not None:
        kept = {s.scene_id
                for s in dataset.scenes_in_split(args.split)[:args.limit]}
        dataset.scenes = [s for s in dataset.scenes
                          if s.split != args.split or s.scene_id in kept]
    report = metrics.compare_methods(
        dataset, model, lms, n=args.candidates, error_rate=args.error_rate,
        seed=args.seed, threshold=args.threshold, split=args.split)
    out = _resolve_out(args.out)
    write_json(out, report.to_json())
    if args.table:
        print(report.cnp_cs_table())
        print()
        print(report.keypoint_table())
    print(f"wrote metrics for {report.num_scenes} scenes to {out}")
    return 0


# -- parser ------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="phrasecritic",
        description="ranking-based explanation pipeline on synthetic "
                    "bird scenes")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic dataset")
    p.add_argument("--out", required=True, help="dataset JSON path")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--classes", type=int, default=20)
    p.add_argument("--scenes-per-class", type=int, default=150)
    p.add_argument("--sentences-per-scene", type=int, default=10)
    p.add_argument("--foils-per-scene", type=int, default=1)
    p.add_argument("--colors", type=int, default=8)
    p.add_argument("--sizes", type=int, default=4)
    p.add_argument("--patterns", type=int, default=4)
    p.add_argument("--noise", type=float, default=0.15)
    p.add_argument("--sigma", type=float, default=0.05)
    p.add_argument("--feature-noise", type=float, default=0.0)
    p.add_argument("--emit-svg", metavar="DIR",
                   help="also render scene SVGs into DIR")
    p.add_argument("--svg-limit", type=int, default=8)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("train", help="train a critic")
    p.add_argument("--dataset", required=True)
    p.add_argument("--out", required=True, help="checkpoint JSON path")
    p.add_argument("--objective", choices=("rank", "binary"), default="rank")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--pairs-per-scene", type=int, default=10)
    p.add_argument("--pair-sentences", type=int, default=1,
                   help="ground-truth sentences per scene to pair up")
    p.add_argument("--epochs", type=int)
    p.add_argument("--lr", type=float)
    p.add_argument("--batch-size", dest="batch_size", type=int)
    p.add_argument("--hidden-dim", dest="hidden_dim", type=int)
    p.add_argument("--pairs-out", help="also write the mined pairs")
    p.add_argument("--report-out", help="also write the training report")
    p.add_argument("--include-timing", action="store_true",
                   help="include wall-clock time in the report")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("rank", help="select explanations for scenes")
    p.add_argument("--dataset", required=True)
    p.add_argument("--model", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--split", default="test")
    p.add_argument("--scene", type=int, action="append",
                   help="explicit scene id (repeatable)")
    p.add_argument("--limit", type=int)
    p.add_argument("--candidates", type=int, default=100)
    p.add_argument("--error-rate", type=float, default=0.3)
    p.add_argument("--threshold", type=float,
                   default=explain.DEFAULT_FLUENCY_THRESHOLD)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--emit-svg", metavar="DIR")
    p.set_defaults(func=cmd_rank)

    p = sub.add_parser("counterfactual",
                       help="evidence against the nearest other class")
    p.add_argument("--dataset", required=True)
    p.add_argument("--model", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--split", default="test")
    p.add_argument("--scene", type=int, action="append")
    p.add_argument("--limit", type=int)
    p.add_argument("--candidates", type=int, default=100)
    p.add_argument("--error-rate", type=float, default=0.3)
    p.add_argument("--threshold", type=float,
                   default=explain.DEFAULT_FLUENCY_THRESHOLD)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_counterfactual)

    p = sub.add_parser("foil", help="evaluate the three foil tasks")
    p.add_argument("--dataset", required=True)
    p.add_argument("--model", required=True, help="binary-critic checkpoint")
    p.add_argument("--out", required=True)
    p.add_argument("--split", default="test")
    p.add_argument("--tau", type=float,
                   help="baseline threshold; tuned on train when omitted")
    p.add_argument("--table", action="store_true")
    p.set_defaults(func=cmd_foil)

    p = sub.add_parser("eval", help="compare selection strategies")
    p.add_argument("--dataset", required=True)
    p.add_argument("--model", required=True, help="rank-critic checkpoint")
    p.add_argument("--out", required=True)
    p.add_argument("--split", default="test")
    p.add_argument("--limit", type=int)
    p.add_argument("--candidates", type=int, default=100)
    p.add_argument("--error-rate", type=float, default=0.3)
    p.add_argument("--threshold", type=float,
                   default=explain.DEFAULT_FLUENCY_THRESHOLD)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--table", action="store_true")
    p.set_defaults(func=cmd_eval)

    return parser


def _fail(exc: Exception, code: int) -> int:
    record = {"error": type(exc).__name__, "message": str(exc), "code": code}
    print(json.dumps(record), file=sys.stderr)
    return code


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except FileNotFoundError as exc:
        return _fail(exc, EXIT_MISSING_FILE)
    except CheckpointError as exc:
        return _fail(exc, EXIT_BAD_CHECKPOINT)
    except (ConfigurationError, GenerationError, ValueError) as exc:
        return _fail(exc, EXIT_BAD_CONFIG)
    except Exception as exc:  # pragma: no cover - last resort
        return _fail(exc, 1)


if __name__ == "__main__":
    sys.exit(main())
