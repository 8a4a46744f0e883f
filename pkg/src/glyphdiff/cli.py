"""Command-line front end.

Exit codes: 0 success, 2 invalid input or configuration, 3 inconsistent or
missing on-disk state, 4 numerical failure during training or sampling.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import shutil
import sys
from pathlib import Path
from typing import List, Optional

import torch

from .bnr import load_bnr, save_bnr, train_bnr
from .config import TrainConfig
from .errors import ConfigurationError, NumericsError, StateError, ValidationError
from .glyphdata import GlyphCorpus, build_dataset, ingest_dataset, save_image
from .metrics import load_classifier, report_to_csv, save_classifier, save_report, train_classifier
from .pipeline import (
    BNR_FILE,
    CLASSIFIER_FILE,
    DiffusionPipeline,
    ablation_grid,
    analyze_gradients,
    check_ablation_ordering,
    finetune,
    generate,
    grid_to_dict,
    refs_for_style,
    run_evaluation,
    save_comparison_grid,
    train_base,
)

_SETTINGS = ("scsf", "ucsf", "scuf", "ucuf")


def _say(msg: str) -> None:
    print(msg)


def _load_config(args) -> TrainConfig:
    config = TrainConfig.from_json(args.config) if args.config else TrainConfig()
    if args.seed is not None:
        config = dataclasses.replace(config, seed=args.seed)
    return config


def _setup_determinism(args) -> None:
    if getattr(args, "deterministic", False):
        torch.set_num_threads(1)
        torch.use_deterministic_algorithms(True)


def _seed_for(args, pipeline: DiffusionPipeline) -> int:
    return args.seed if args.seed is not None else pipeline.config.seed


def _load_pipeline(ckpt: str) -> DiffusionPipeline:
    return DiffusionPipeline.load(ckpt)


def _load_refiner(args, pipeline: DiffusionPipeline):
    """(refiner, threshold) or (None, threshold) under --no-bnr."""
    threshold = pipeline.config.bnr_threshold
    if getattr(args, "no_bnr", False):
        return None, threshold
    path = Path(args.ckpt) / BNR_FILE
    if not path.exists():
        raise StateError(
            f"{path} not found; run `glyphdiff train-bnr` first or pass --no-bnr"
        )
    return load_bnr(str(path), compat_hash=pipeline.config.compat_hash())


def _parse_chars(spec: str, manifest) -> List[int]:
    if spec == "seen":
        return list(manifest.seen_chars)
    if spec == "unseen":
        return list(manifest.unseen_chars)
    try:
        chars = [int(tok) for tok in spec.split(",") if tok.strip()]
    except ValueError as exc:
        raise ValidationError(
            f"--chars must be 'seen', 'unseen', or comma-separated ids, got {spec!r}"
        ) from exc
    if not chars:
        raise ValidationError("--chars resolved to an empty list")
    return chars


# ----------------------------------------------------------------------
# subcommand handlers
# ----------------------------------------------------------------------


def _cmd_render_dataset(args) -> int:
    seed = _load_config(args).seed
    manifest = build_dataset(args.out, args.chars, args.styles, size=args.size, seed=seed)
    _say(
        f"rendered {len(manifest.char_ids)} chars x {len(manifest.style_ids)} styles "
        f"at {manifest.size}px into {args.out}"
    )
    return 0


def _cmd_ingest(args) -> int:
    seed = _load_config(args).seed
    manifest = ingest_dataset(
        args.src, args.out, canonical_style_id=args.canonical_style, size=args.size, seed=seed
    )
    _say(
        f"ingested {len(manifest.char_ids)} chars x {len(manifest.style_ids)} styles "
        f"into {args.out}"
    )
    return 0


def _cmd_train(args) -> int:
    _setup_determinism(args)
    config = _load_config(args)
    corpus = GlyphCorpus.load(args.data)
    pipeline, history = train_base(corpus, config, log=_say)
    classifier = train_classifier(corpus, epochs=config.classifier_epochs, seed=config.seed)
    out = Path(args.out)
    pipeline.save(str(out))
    save_classifier(classifier, out / CLASSIFIER_FILE)
    lines = ["step,loss"] + [
        f"{i},{loss!r}" for i, loss in enumerate(history["step_losses"])
    ]
    (out / "loss_curve.csv").write_text("\n".join(lines) + "\n")
    (out / "history.json").write_text(json.dumps(history, indent=2, sort_keys=True) + "\n")
    _say(f"saved checkpoints to {out}")
    return 0


def _cmd_train_bnr(args) -> int:
    _setup_determinism(args)
    pipeline = _load_pipeline(args.ckpt)
    config = pipeline.config
    corpus = GlyphCorpus.load(args.data)
    classifier = load_classifier(Path(args.ckpt) / CLASSIFIER_FILE)
    seed = _seed_for(args, pipeline)
    epochs = args.epochs if args.epochs is not None else config.bnr_epochs
    model, losses = train_bnr(
        pipeline,
        corpus,
        classifier,
        epochs=epochs,
        seed=seed,
        decode_mode=config.bnr_decode_mode,
        threshold=config.bnr_threshold,
        base_width=config.bnr_base_width,
        edge_weight=config.edge_loss_weight,
        feature_weight=config.feature_loss_weight,
    )
    path = Path(args.ckpt) / BNR_FILE
    save_bnr(model, str(path), config.compat_hash(), threshold=config.bnr_threshold)
    final = losses[-1] if losses else float("nan")
    _say(f"refiner trained ({epochs} epochs, final loss {final:.5f}); saved to {path}")
    return 0


def _cmd_finetune(args) -> int:
    _setup_determinism(args)
    pipeline = _load_pipeline(args.ckpt)
    corpus = GlyphCorpus.load(args.data)
    seed = _seed_for(args, pipeline)
    n_refs = args.refs if args.refs is not None else pipeline.config.n_refs
    refs = refs_for_style(corpus, args.style, n_refs, seed)
    tuned, history = finetune(
        pipeline, corpus, refs, args.plan, epochs=args.epochs, seed=seed, log=_say
    )
    out = Path(args.out)
    tuned.save(str(out))
    for extra in (CLASSIFIER_FILE, BNR_FILE):
        src = Path(args.ckpt) / extra
        if src.exists():
            shutil.copyfile(src, out / extra)
    losses = history["epoch_losses"]
    tail = f", final loss {losses[-1]:.5f}" if losses else ""
    _say(f"fine-tuned style {args.style} with plan {args.plan}{tail}; saved to {out}")
    return 0


def _cmd_generate(args) -> int:
    _setup_determinism(args)
    pipeline = _load_pipeline(args.ckpt)
    corpus = GlyphCorpus.load(args.data)
    refiner, threshold = _load_refiner(args, pipeline)
    seed = _seed_for(args, pipeline)
    n_refs = args.refs if args.refs is not None else pipeline.config.n_refs
    refs = refs_for_style(corpus, args.style, n_refs, seed)
    ref_chars = {r.char_id for r in refs}
    chars = [c for c in _parse_chars(args.chars, corpus.manifest) if c not in ref_chars]
    if not chars:
        raise ValidationError("no target chars left after excluding the reference chars")
    outputs = generate(
        pipeline,
        corpus,
        refs,
        chars,
        seed=seed,
        deterministic=args.deterministic,
        refiner=refiner,
        threshold=threshold,
        stride=args.stride,
    )
    out = Path(args.out)
    canonical = corpus.manifest.canonical_style_id
    for glyph in outputs:
        save_image(glyph.pixels, out / str(glyph.style_id) / f"{glyph.char_id}.png")
    sources = [corpus.glyph(canonical, c) for c in chars]
    targets = [corpus.glyph(args.style, c) for c in chars]
    save_comparison_grid(out / "grid.png", [outputs, targets, sources])
    _say(f"generated {len(outputs)} glyphs for style {args.style} into {out}")
    return 0


def _cmd_evaluate(args) -> int:
    _setup_determinism(args)
    pipeline = _load_pipeline(args.ckpt)
    corpus = GlyphCorpus.load(args.data)
    classifier = load_classifier(Path(args.ckpt) / CLASSIFIER_FILE)
    seed = _seed_for(args, pipeline)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    if args.ablation:
        if args.no_bnr:
            raise ValidationError("--ablation compares refiner arms; drop --no-bnr")
        refiner, threshold = _load_refiner(args, pipeline)
        grid = ablation_grid(
            pipeline,
            corpus,
            classifier,
            refiner,
            threshold=threshold,
            seed=seed,
            finetune_epochs=args.finetune_epochs,
            stride=args.stride,
            deterministic=args.deterministic,
            max_chars_per_style=args.max_chars,
            log=_say,
        )
        (out / "ablation.json").write_text(
            json.dumps(grid_to_dict(grid), indent=2, sort_keys=True) + "\n"
        )
        problems = []
        for arm in ("nobnr", "bnr"):
            problems.extend(check_ablation_ordering(grid, arm=arm))
        diff = "\n".join(problems) if problems else "all expected orderings held"
        (out / "ablation_diff.txt").write_text(diff + "\n")
        _say(diff)
        return 0
    settings = [s.strip() for s in args.settings.split(",") if s.strip()]
    for setting in settings:
        if setting not in _SETTINGS:
            raise ValidationError(f"unknown setting {setting!r}; choose from {_SETTINGS}")
    refiner, threshold = _load_refiner(args, pipeline)
    reports = run_evaluation(
        pipeline,
        corpus,
        classifier,
        settings,
        seed=seed,
        refiner=refiner,
        threshold=threshold,
        deterministic=args.deterministic,
        stride=args.stride,
        max_chars_per_style=args.max_chars,
    )
    for setting, report in reports.items():
        save_report(report, out / f"report_{setting}.json")
        report_to_csv(report, out / f"report_{setting}.csv")
        agg = report.aggregates
        fid_part = f", fid {agg['fid']:.4f}" if "fid" in agg else ""
        _say(
            f"{setting}: l1 {agg['l1']:.4f}, ssim {agg['ssim']:.4f}, "
            f"grey {agg['grey']:.4f}, ocr {agg['ocr_accuracy']:.4f}{fid_part}"
        )
    return 0


def _cmd_analyze_gradients(args) -> int:
    _setup_determinism(args)
    pipeline = _load_pipeline(args.ckpt)
    corpus = GlyphCorpus.load(args.data)
    seed = _seed_for(args, pipeline)
    report, json_path, chart_path = analyze_gradients(
        pipeline, corpus, args.out, batch_size=args.batch_size, seed=seed
    )
    for setting, ratios in report.group_ratios.items():
        pretty = ", ".join(f"{g}={v:.4f}" for g, v in sorted(ratios.items()))
        _say(f"{setting}: {pretty}")
    _say(f"wrote {json_path} and {chart_path}")
    return 0


# ----------------------------------------------------------------------
# parser wiring
# ----------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    shared = argparse.ArgumentParser(add_help=False)
    shared.add_argument("--config", help="JSON config file")
    shared.add_argument("--seed", type=int, default=None, help="override the config seed")
    shared.add_argument(
        "--deterministic",
        action="store_true",
        help="single-threaded, deterministic-only kernels, noise-free sampling",
    )
    shared.add_argument("--no-bnr", action="store_true", help="skip the refiner stage")

    parser = argparse.ArgumentParser(
        prog="glyphdiff",
        description="few-shot glyph generation with a structure-aware latent diffusion model",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("render-dataset", parents=[shared], help="render a synthetic corpus")
    p.add_argument("--out", required=True)
    p.add_argument("--chars", type=int, required=True)
    p.add_argument("--styles", type=int, required=True)
    p.add_argument("--size", type=int, default=64, choices=(32, 64, 128))
    p.set_defaults(func=_cmd_render_dataset)

    p = sub.add_parser("ingest", parents=[shared], help="import an existing image tree")
    p.add_argument("--src", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--canonical-style", type=int, required=True)
    p.add_argument("--size", type=int, default=64, choices=(32, 64, 128))
    p.set_defaults(func=_cmd_ingest)

    p = sub.add_parser("train", parents=[shared], help="train codec, denoiser, and classifier")
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_train)

    p = sub.add_parser("train-bnr", parents=[shared], help="train the refiner on a frozen base")
    p.add_argument("--data", required=True)
    p.add_argument("--ckpt", required=True)
    p.add_argument("--epochs", type=int, default=None)
    p.set_defaults(func=_cmd_train_bnr)

    p = sub.add_parser("finetune", parents=[shared], help="adapt to one style from references")
    p.add_argument("--data", required=True)
    p.add_argument("--ckpt", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--style", type=int, required=True)
    p.add_argument("--plan", required=True, choices=("no", "clip", "kv", "peft", "all"))
    p.add_argument("--epochs", type=int, default=None)
    p.add_argument("--refs", type=int, default=None, help="reference count override")
    p.set_defaults(func=_cmd_finetune)

    p = sub.add_parser("generate", parents=[shared], help="sample glyphs in a reference style")
    p.add_argument("--data", required=True)
    p.add_argument("--ckpt", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--style", type=int, required=True)
    p.add_argument("--chars", default="unseen", help="'seen', 'unseen', or comma-separated ids")
    p.add_argument("--stride", type=int, default=None)
    p.add_argument("--refs", type=int, default=None)
    p.set_defaults(func=_cmd_generate)

    p = sub.add_parser("evaluate", parents=[shared], help="score settings or run the ablation")
    p.add_argument("--data", required=True)
    p.add_argument("--ckpt", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--settings", default="scsf,ucsf,scuf,ucuf")
    p.add_argument("--ablation", action="store_true")
    p.add_argument("--finetune-epochs", type=int, default=None)
    p.add_argument("--max-chars", type=int, default=None, help="cap target chars per style")
    p.add_argument("--stride", type=int, default=None)
    p.set_defaults(func=_cmd_evaluate)

    p = sub.add_parser(
        "analyze-gradients", parents=[shared], help="per-group gradient sensitivity probe"
    )
    p.add_argument("--data", required=True)
    p.add_argument("--ckpt", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--batch-size", type=int, default=64)
    p.set_defaults(func=_cmd_analyze_gradients)

    return parser


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ConfigurationError, ValidationError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except StateError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except NumericsError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())
