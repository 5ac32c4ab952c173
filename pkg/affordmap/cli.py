"""``affordmap`` command line.

Verbs: ``train``, ``predict``, ``eval``, ``split score|build|show`` and
``report``. Exit status is 0 on success, 2 when inputs fail validation and
1 for any other failure. Commands that write a directory build it next to
its final location and move it into place only once everything succeeded.
"""
from __future__ import annotations

import argparse
import contextlib
import dataclasses
import json
import logging
import os
import shutil
import sys
import tempfile
from typing import Any, Dict, Iterator, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from affordmap.basic import DatasetError, ValidationError, canonical_json
from affordmap.config import RunConfig, load_run_config
from affordmap.data.agd20k import load_depth, load_image
from affordmap.data.prompts import PromptVariant, build_prompt
from affordmap.densemap import resize_bilinear
from affordmap.mapio import load_map, save_afmp, save_png16
from affordmap.metrics import evaluate_batch, format_comparison_table


__all__ = ["main", "build_parser", "staged_directory"]


logger = logging.getLogger("affordmap.cli")

MAP_SUFFIXES = (".afmp", ".png")
PANEL_COUNT = 6


@contextlib.contextmanager
def staged_directory(final: str, overwrite: bool = False) -> Iterator[str]:
    """Yield a scratch directory that becomes ``final`` when the block succeeds."""
    final = os.path.abspath(final)
    if os.path.exists(final):
        if not os.path.isdir(final) or (os.listdir(final) and not overwrite):
            raise ValidationError(f"Output directory {final} already exists and is not empty.")
    parent = os.path.dirname(final)
    os.makedirs(parent, exist_ok=True)
    scratch = tempfile.mkdtemp(prefix=f".{os.path.basename(final)}.", dir=parent)
    try:
        yield scratch
    except BaseException:
        shutil.rmtree(scratch, ignore_errors=True)
        raise
    if os.path.exists(final):
        shutil.rmtree(final)
    os.replace(scratch, final)


def _write_text(path: str, text: str) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        f.write(text if text.endswith("\n") else text + "\n")


def _save_prediction(out_dir: str, stem: str, dmap: Any) -> None:
    save_png16(dmap, os.path.join(out_dir, stem + ".png"))
    save_afmp(dmap, os.path.join(out_dir, stem + ".afmp"))


# -- train --------------------------------------------------------------------

def _run_config(args: argparse.Namespace) -> RunConfig:
    if args.config is not None:
        cfg = load_run_config(args.config)
    else:
        cfg = RunConfig.synthetic_preset()
    if args.no_depth:
        cfg = cfg.replace(model=_replace(cfg.model, use_depth=False))
    if args.seed is not None:
        cfg = cfg.replace(
            model=_replace(cfg.model, seed=args.seed),
            optimizer=_replace(cfg.optimizer, seed=args.seed),
        )
    if args.steps is not None:
        cfg = cfg.replace(optimizer=_replace(cfg.optimizer, steps=args.steps))
    output_dir = args.output_dir or cfg.output_dir
    if not output_dir:
        raise ValidationError("No output directory: pass --output-dir or set output_dir in the config.")
    return cfg.replace(output_dir=output_dir)


def _replace(obj: Any, **changes: Any) -> Any:
    return dataclasses.replace(obj, **changes)


def cmd_train(args: argparse.Namespace) -> int:
    from affordmap.model.checkpoint import save_checkpoint
    from affordmap.report import save_panels
    from affordmap.training import (
        evaluate_predictions, history_frame, load_datasets, mask_emission_rate,
        predict_samples, run_manifest, train, uniform_report,
    )

    cfg = _run_config(args)
    train_samples, test_samples, split = load_datasets(cfg)
    with staged_directory(cfg.output_dir) as stage:
        result = train(cfg, train_samples, device=args.device)
        history_frame(result.history).to_csv(os.path.join(stage, "train_log.csv"), index=False)

        max_new = cfg.optimizer.max_new_tokens
        train_stats = mask_emission_rate(result.model, train_samples, result.vocab, cfg.variant, max_new)
        test_stats = mask_emission_rate(result.model, test_samples, result.vocab, cfg.variant, max_new)
        predictions = predict_samples(result.model, test_samples, result.vocab, cfg.variant, max_new)

        pred_dir = os.path.join(stage, "predictions")
        os.makedirs(pred_dir)
        by_id = {s.sample_id: s for s in test_samples}
        for sample_id, dmap in predictions:
            _save_prediction(pred_dir, by_id[sample_id].file_stem, dmap)

        report = evaluate_predictions(predictions, test_samples, cfg.parallel.eval_workers)
        baseline = uniform_report(test_samples, cfg.parallel.eval_workers)
        _write_text(os.path.join(stage, "report.json"), report.to_json())
        _write_text(
            os.path.join(stage, "report.txt"),
            format_comparison_table({"affordmap": report, "uniform": baseline}),
        )

        size = cfg.model.image_size
        shown = predictions[:PANEL_COUNT]
        save_panels(
            os.path.join(stage, "panels.npz"),
            [sample_id for sample_id, _ in shown],
            np.stack([by_id[i].image for i, _ in shown]),
            np.stack([resize_bilinear(by_id[i].gt_map, size, size).values for i, _ in shown]),
            np.stack([resize_bilinear(p, size, size).values for _, p in shown]),
        )

        save_checkpoint(
            os.path.join(stage, "checkpoint.zip"), result.model, result.vocab,
            {"steps": len(result.history), "prompt_variant": cfg.variant.value},
        )
        manifest = run_manifest(cfg, split, result, {"train": train_stats, "test": test_stats})
        manifest["baseline"] = {"uniform": list(baseline.summary())}
        _write_text(os.path.join(stage, "manifest.json"), json.dumps(manifest, sort_keys=True, indent=2))
        _write_text(os.path.join(stage, "config.json"), cfg.to_json())

    print(format_comparison_table({"affordmap": report, "uniform": baseline}))
    logger.info("Run written to %s", cfg.output_dir)
    return 0


# -- predict ------------------------------------------------------------------

def _predict_inputs(args: argparse.Namespace) -> List[Dict[str, Any]]:
    if args.inputs is not None:
        if not os.path.isfile(args.inputs):
            raise ValidationError(f"Input list {args.inputs} does not exist.")
        with open(args.inputs, encoding="utf-8") as f:
            entries = json.load(f)
        if not isinstance(entries, list) or not entries:
            raise ValidationError(f"{args.inputs} must hold a non-empty JSON list.")
    elif args.image:
        if not args.object or not args.action:
            raise ValidationError("--object and --action are required with --image.")
        entries = [
            {"image": path, "object": args.object, "action": args.action, "depth": args.depth}
            for path in args.image
        ]
    else:
        raise ValidationError("Nothing to predict: pass --image or --inputs.")
    seen = set()
    for entry in entries:
        for key in ("image", "object", "action"):
            if not entry.get(key):
                raise ValidationError(f"Input entry {entry} lacks '{key}'.")
        if not os.path.exists(entry["image"]):
            raise DatasetError(f"Image {entry['image']} does not exist.")
        entry.setdefault("sample_id", os.path.splitext(os.path.basename(entry["image"]))[0])
        if entry["sample_id"] in seen:
            raise ValidationError(f"Duplicate sample id '{entry['sample_id']}'.")
        seen.add(entry["sample_id"])
    return entries


def cmd_predict(args: argparse.Namespace) -> int:
    from affordmap.model.checkpoint import load_checkpoint
    from affordmap.model.network import GenerationStats

    entries = _predict_inputs(args)
    expected = load_run_config(args.config).model if args.config is not None else None
    model, vocab, state = load_checkpoint(args.checkpoint, expected)
    variant = PromptVariant.parse(args.prompt_variant or state.get("prompt_variant", "Full"))
    size = model.cfg.image_size
    for entry in entries:
        if model.cfg.use_depth and not entry.get("depth"):
            raise ValidationError(f"{entry['sample_id']}: the model uses depth but no depth file was given.")

    stats = GenerationStats()
    records = []
    with staged_directory(args.output_dir or "predictions") as stage:
        for entry in entries:
            image = load_image(entry["image"], size)
            depth = load_depth(entry["depth"], size) if model.cfg.use_depth else None
            prompt = vocab.encode(build_prompt(entry["object"], entry["action"], variant), add_eos=False)
            generation = model.generate(
                image, depth, prompt, args.max_new_tokens, stats, vocab_size=len(vocab)
            )
            stem = entry["sample_id"].replace("/", "__")
            _save_prediction(stage, stem, generation.affordance)
            records.append({
                "sample_id": entry["sample_id"],
                "text": vocab.detokenize(generation.token_ids),
                "forced": generation.forced,
            })
        _write_text(
            os.path.join(stage, "generation.json"),
            json.dumps({"stats": stats.to_dict(), "samples": records}, indent=2, sort_keys=True),
        )
    logger.info("Forced <mask_token> on %s of %s inputs", stats.forced, stats.calls)
    return 0


# -- eval ---------------------------------------------------------------------

def _index_maps(root: str) -> Dict[str, str]:
    """Map relative stem (sample id) to path, preferring float sidecars."""
    found: Dict[str, str] = {}
    for dirpath, _, files in os.walk(root):
        for fname in sorted(files):
            stem, ext = os.path.splitext(fname)
            if ext.lower() not in MAP_SUFFIXES:
                continue
            rel = os.path.relpath(os.path.join(dirpath, stem), root).replace(os.sep, "/")
            if rel not in found or ext.lower() == ".afmp":
                found[rel] = os.path.join(dirpath, fname)
    return found


def match_directories(pred_dir: str, gt_dir: str) -> List[Tuple[str, str, str]]:
    for path in (pred_dir, gt_dir):
        if not os.path.isdir(path):
            raise ValidationError(f"{path} is not a directory.")
    preds = _index_maps(pred_dir)
    gts = _index_maps(gt_dir)
    if not preds or not gts:
        raise ValidationError("Prediction or ground-truth directory holds no maps.")
    only_pred = sorted(set(preds) - set(gts))
    only_gt = sorted(set(gts) - set(preds))
    if only_pred or only_gt:
        lines = [f"  prediction without ground truth: {i}" for i in only_pred]
        lines += [f"  ground truth without prediction: {i}" for i in only_gt]
        raise ValidationError("Unmatched sample ids:\n" + "\n".join(lines))
    return [(preds[i], gts[i], i) for i in sorted(preds)]


def cmd_eval(args: argparse.Namespace) -> int:
    matched = match_directories(args.pred_dir, args.gt_dir)
    pairs = [(load_map(p), load_map(g), sample_id) for p, g, sample_id in matched]
    if args.threshold < 0:
        raise ValidationError(f"--threshold must be >= 0, got {args.threshold}.")
    report = evaluate_batch(
        pairs, workers=args.workers, binarize_gt=args.binarize_gt, threshold=args.threshold,
    )
    if report.num_skipped:
        logger.warning("Skipped %s samples with empty ground truth", report.num_skipped)
    table = report.format_table(args.method)
    with staged_directory(args.output_dir or "eval-report") as stage:
        _write_text(os.path.join(stage, "report.json"), report.to_json())
        _write_text(os.path.join(stage, "report.txt"), table)
        report.to_frame().to_csv(os.path.join(stage, "per_sample.csv"))
    print(table)
    return 0


# -- split --------------------------------------------------------------------

def _resolve_for_cli(name: str) -> Any:
    from affordmap.splits import load_canonical_splits, resolve_split, same_split

    if name.strip().lower() == "same":
        easy, _ = load_canonical_splits()
        return same_split(easy.train_classes | easy.test_classes)
    return resolve_split(name)


def cmd_split_score(args: argparse.Namespace) -> int:
    from affordmap.splits import (
        DEFAULT_EMBEDDING_TABLE, load_embedding_table, nearest_train_class,
        per_class_difficulty, split_difficulty,
    )

    path = args.embeddings or DEFAULT_EMBEDDING_TABLE
    if not os.path.exists(path):
        raise ValidationError(
            f"Embedding table {path} not found; build it with scripts/build_clip_embeddings.py."
        )
    table = load_embedding_table(path)
    split = _resolve_for_cli(args.split)
    score = split_difficulty(split, table)
    if args.json:
        out: Dict[str, Any] = {"split": split.name, "difficulty": score}
        if args.per_class:
            out["per_class"] = per_class_difficulty(split, table)
        print(canonical_json(out))
        return 0
    print(f"{split.name}: D = {score:.3f}")
    if args.per_class:
        rows = []
        for name, value in per_class_difficulty(split, table).items():
            nearest, _ = nearest_train_class(name, split, table)
            rows.append({"test class": name, "nearest train class": nearest, "difficulty": value})
        print(pd.DataFrame(rows).to_string(index=False, float_format=lambda v: f"{v:.3f}"))
    return 0


def cmd_split_build(args: argparse.Namespace) -> int:
    from affordmap.splits import build_lvis_random_split, build_random_split, format_split

    seed = 0 if args.seed is None else args.seed
    if args.classes is not None:
        with open(args.classes, encoding="utf-8") as f:
            classes = [line.strip() for line in f if line.strip() and not line.startswith("#")]
        split = build_random_split(classes, args.test_fraction, seed, name=args.name)
    else:
        split = build_lvis_random_split(args.lvis, seed)
    text = format_split(split)
    if args.output is None:
        sys.stdout.write(text)
        return 0
    tmp = args.output + ".tmp"
    _write_text(tmp, text)
    os.replace(tmp, args.output)
    logger.info("Wrote split with %s train / %s test classes to %s", *split.sizes, args.output)
    return 0


def cmd_split_show(args: argparse.Namespace) -> int:
    split = _resolve_for_cli(args.split)
    n_train, n_test = split.sizes
    print(f"{split.name}: {n_train} train / {n_test} test classes")
    print("[train]")
    print("\n".join(sorted(split.train_classes)))
    print("[test]")
    print("\n".join(sorted(split.test_classes)))
    return 0


# -- report -------------------------------------------------------------------

def cmd_report(args: argparse.Namespace) -> int:
    from affordmap.report import check_run_dir, write_report

    check_run_dir(args.run_dir)
    out = args.output_dir or os.path.join(args.run_dir, "report")
    with staged_directory(out, overwrite=True) as stage:
        written = write_report(args.run_dir, stage, compare=args.compare or ())
    if written["comparison"] is not None:
        print(written["comparison"])
    print(os.path.join(out, "report.md"))
    return 0


# -- entry point --------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="run config (canonical JSON)")
    common.add_argument("--seed", type=int)
    common.add_argument("--output-dir")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="affordmap", description=__doc__.splitlines()[0])
    verbs = parser.add_subparsers(dest="verb", required=True)

    p = verbs.add_parser("train", parents=[common], help="train and evaluate a model")
    p.add_argument("--steps", type=int)
    p.add_argument("--no-depth", action="store_true")
    p.add_argument("--device", default="cpu")
    p.set_defaults(func=cmd_train)

    p = verbs.add_parser("predict", parents=[common], help="predict maps from a checkpoint")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--image", nargs="*")
    p.add_argument("--depth")
    p.add_argument("--object")
    p.add_argument("--action")
    p.add_argument("--inputs", help="JSON list of {image, object, action, depth?, sample_id?}")
    p.add_argument("--prompt-variant")
    p.add_argument("--max-new-tokens", type=int, default=16)
    p.set_defaults(func=cmd_predict)

    p = verbs.add_parser("eval", parents=[common], help="score prediction maps")
    p.add_argument("pred_dir")
    p.add_argument("gt_dir")
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--binarize-gt", action="store_true")
    p.add_argument("--threshold", type=float, default=0.0, help="NSS weights are gt > threshold with --binarize-gt")
    p.add_argument("--method", default="affordmap")
    p.set_defaults(func=cmd_eval)

    p = verbs.add_parser("split", help="object-class splits")
    split_verbs = p.add_subparsers(dest="split_verb", required=True)
    s = split_verbs.add_parser("score", parents=[common])
    s.add_argument("split", help="easy, hard, same or a split file")
    s.add_argument("--embeddings")
    s.add_argument("--per-class", action="store_true")
    s.add_argument("--json", action="store_true")
    s.set_defaults(func=cmd_split_score)
    s = split_verbs.add_parser("build", parents=[common])
    s.add_argument("--classes", help="class list, one per line (default: LVIS categories)")
    s.add_argument("--lvis", type=int, default=50, help="number of LVIS classes to draw")
    s.add_argument("--test-fraction", type=float, default=0.5)
    s.add_argument("--name", default="random")
    s.add_argument("--output")
    s.set_defaults(func=cmd_split_build)
    s = split_verbs.add_parser("show", parents=[common])
    s.add_argument("split")
    s.set_defaults(func=cmd_split_show)

    p = verbs.add_parser("report", parents=[common], help="render plots and tables for a run")
    p.add_argument("run_dir")
    p.add_argument("--compare", action="append", help="another run directory")
    p.set_defaults(func=cmd_report)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
    )
    try:
        return int(args.func(args))
    except ValueError as err:
        logger.error("%s", err)
        return 2
    except Exception as err:
        logger.exception("%s", err)
        return 1


if __name__ == "__main__":
    sys.exit(main())
