"""Command-line interface.

Commands: build-dataset, train, colorize, evaluate, benchmark.  Exit codes:
0 on success, 2 on usage or configuration errors, 1 on runtime failures.
Reports are written as CSV plus a text table, with a rendered PNG figure
alongside.  Set CHROMAWARP_CACHE to redirect downloaded provider weights.
"""

from __future__ import annotations

import argparse
import dataclasses
import logging
import os
import sys
import traceback
from pathlib import Path

from . import dataset as ds_mod
from . import imgio
from .config import load_config
from .errors import CheckpointError, ConfigError, DimensionError, ValidationError

logger = logging.getLogger(__name__)

USAGE_ERRORS = (ConfigError, ValidationError, DimensionError, CheckpointError, FileNotFoundError)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="chromawarp",
        description="Reference-based line-art sequence colorization.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p):
        p.add_argument("--config", type=Path, help="INI config file")
        p.add_argument("--seed", type=int, help="seed for every random component")

    p = sub.add_parser("build-dataset", help="shots, training pairs and sketches from frames")
    add_common(p)
    p.add_argument("--frames", type=Path, required=True, help="directory of PNG frames")
    p.add_argument("--out", type=Path, required=True, help="output dataset directory")
    p.add_argument("--stride", type=int, help="sliding window stride")
    p.add_argument("--width", type=int, help="sliding window width (pair distance)")
    p.add_argument("--shot-threshold", type=float, help="histogram cut threshold")

    p = sub.add_parser("train", help="optimize a generator over a dataset manifest")
    add_common(p)
    p.add_argument("--manifest", type=Path, required=True)
    p.add_argument("--out", type=Path, required=True, help="run directory for checkpoints/logs")
    p.add_argument("--resume", type=Path, help="checkpoint to continue from")
    p.add_argument("--epochs", type=int)
    p.add_argument("--max-iterations", type=int)
    p.add_argument("--resolution", type=int)
    p.add_argument("--ablation-no-warp", action="store_true", help="train without feature warping")

    p = sub.add_parser("colorize", help="color a sketch sequence from one colored reference")
    add_common(p)
    p.add_argument("--checkpoint", type=Path, required=True)
    p.add_argument("--ref-sketch", type=Path, required=True)
    p.add_argument("--ref-color", type=Path, required=True)
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--chain", action="store_true",
                   help="feed each prediction as the next reference instead of keeping the first")
    p.add_argument("sketches", nargs="+", type=Path, help="sketch PNGs in order")

    p = sub.add_parser("evaluate", help="stride-based consistency report for a checkpoint")
    add_common(p)
    p.add_argument("--checkpoint", type=Path, required=True)
    p.add_argument("--frames", type=Path, required=True)
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--strides", help="comma-separated strides (default from config: 1,5,10)")
    p.add_argument("--shot-threshold", type=float)
    p.add_argument("--exclusions", type=Path, help="file of shot ids to skip")
    p.add_argument("--label", help="method label in reports (default: checkpoint stem)")

    p = sub.add_parser("benchmark", help="seconds-per-frame timing for a checkpoint")
    add_common(p)
    p.add_argument("--checkpoint", type=Path, required=True)
    p.add_argument("--frames", type=Path, required=True)
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--warmup", type=int)
    p.add_argument("--repeats", type=int)
    p.add_argument("--limit", type=int, default=3, help="number of frame pairs to time")

    return parser


def _run_config(args):
    cfg = load_config(args.config)
    if args.seed is not None:
        cfg = cfg.with_seed(args.seed)
    return cfg


def cmd_build_dataset(args) -> int:
    cfg = _run_config(args)
    opts = cfg.dataset
    if not args.frames.is_dir():
        raise ValidationError(f"frames directory not found: {args.frames}")
    manifest, shots = ds_mod.build_manifest(
        args.frames,
        args.out,
        stride=args.stride if args.stride is not None else opts.stride,
        width=args.width if args.width is not None else opts.width,
        shot_threshold=(
            args.shot_threshold if args.shot_threshold is not None else opts.shot_threshold
        ),
        lineart=opts.lineart,
    )
    print(f"shots: {len(shots)}")
    print(f"pairs: {len(manifest.records)}")
    print(f"manifest: {args.out / 'manifest.txt'}")
    return 0


def cmd_train(args) -> int:
    from . import figures
    from .training import read_training_log, train

    cfg = _run_config(args)
    train_cfg = cfg.train
    updates = {}
    if args.epochs is not None:
        updates["epochs"] = args.epochs
    if args.max_iterations is not None:
        updates["max_iterations"] = args.max_iterations
    if args.resolution is not None:
        updates["resolution"] = args.resolution
    if args.ablation_no_warp:
        updates["generator"] = dataclasses.replace(train_cfg.generator, ablation_no_warp=True)
    if updates:
        train_cfg = dataclasses.replace(train_cfg, **updates)
    if not args.manifest.is_file():
        raise ValidationError(f"manifest not found: {args.manifest}")
    model, final = train(args.manifest, train_cfg, args.out, resume_from=args.resume)
    records = read_training_log(args.out / "train_log.jsonl")
    if records:
        figures.save_loss_figure(records, args.out / "loss_curve.png")
        print(f"iterations: {records[-1]['iteration']}  final loss: {records[-1]['total']:.5f}")
    print(f"checkpoint: {final}")
    return 0


def cmd_colorize(args) -> int:
    from .training import load_colorizer

    if not args.checkpoint.is_file():
        raise CheckpointError(f"checkpoint not found: {args.checkpoint}")
    predict = load_colorizer(args.checkpoint)
    ref_sketch = imgio.load_sketch(args.ref_sketch)
    ref_color = imgio.load_color(args.ref_color)
    args.out.mkdir(parents=True, exist_ok=True)
    for sketch_path in args.sketches:
        sketch = imgio.load_sketch(sketch_path)
        estimate = predict(ref_sketch, ref_color, sketch)
        out_path = args.out / sketch_path.name
        imgio.save_color(out_path, estimate)
        print(out_path)
        if args.chain:
            ref_sketch, ref_color = sketch, estimate
    return 0


def _sequences_for(args, cfg, frame_paths, shots):
    exclusions = ds_mod.load_exclusions(args.exclusions) if args.exclusions else frozenset()
    strides = (
        tuple(int(s) for s in args.strides.split(",")) if args.strides else cfg.eval.strides
    )
    sequences = []
    for stride in strides:
        sequences.extend(
            ds_mod.build_eval_sequences(
                shots,
                frame_paths,
                stride=stride,
                seed=cfg.seed,
                change_threshold=cfg.eval.change_threshold,
                exclusions=exclusions,
            )
        )
    return sequences


def cmd_evaluate(args) -> int:
    from . import figures
    from .evaluation import evaluate
    from .training import load_checkpoint

    cfg = _run_config(args)
    if not args.checkpoint.is_file():
        raise CheckpointError(f"checkpoint not found: {args.checkpoint}")
    model, payload = load_checkpoint(args.checkpoint)
    model.eval()
    frame_paths = imgio.list_frames(args.frames)
    if not frame_paths:
        raise ValidationError(f"no frames found in {args.frames}")
    threshold = (
        args.shot_threshold if args.shot_threshold is not None else cfg.dataset.shot_threshold
    )
    shots = ds_mod.detect_shots(frame_paths, threshold)
    sequences = _sequences_for(args, cfg, frame_paths, shots)
    if not sequences:
        raise ValidationError("no usable evaluation sequences (all cleaned or shots too short)")
    label = args.label or args.checkpoint.stem
    report = evaluate(
        model.colorize,
        sequences,
        frame_paths,
        method=label,
        lineart=cfg.dataset.lineart,
        metadata={
            "checkpoint": f"{args.checkpoint.name}:{payload['config_fingerprint'][:12]}",
            "dataset": str(args.frames),
            "seed": cfg.seed,
        },
    )
    args.out.mkdir(parents=True, exist_ok=True)
    (args.out / "report.csv").write_text(report.to_csv(), encoding="utf-8")
    (args.out / "report.txt").write_text(report.to_table(), encoding="utf-8")
    figures.save_eval_figure(report, args.out / "report.png")
    print(report.to_table())
    print(f"report: {args.out / 'report.csv'}")
    return 0


def cmd_benchmark(args) -> int:
    from . import figures
    from .evaluation import benchmark_time
    from .training import load_colorizer

    cfg = _run_config(args)
    if not args.checkpoint.is_file():
        raise CheckpointError(f"checkpoint not found: {args.checkpoint}")
    predict = load_colorizer(args.checkpoint)
    frame_paths = imgio.list_frames(args.frames)
    if len(frame_paths) < 2:
        raise ValidationError(f"need at least 2 frames in {args.frames}")
    inputs = []
    for prev, nxt in zip(frame_paths, frame_paths[1:]):
        prev_color = imgio.load_color(prev)
        next_color = imgio.load_color(nxt)
        inputs.append(
            (
                ds_mod.synthesize_lineart(prev_color, cfg.dataset.lineart),
                prev_color,
                ds_mod.synthesize_lineart(next_color, cfg.dataset.lineart),
            )
        )
        if len(inputs) >= args.limit:
            break
    result = benchmark_time(
        predict,
        inputs,
        warmup=args.warmup if args.warmup is not None else cfg.eval.warmup,
        repeats=args.repeats if args.repeats is not None else cfg.eval.repeats,
    )
    args.out.mkdir(parents=True, exist_ok=True)
    (args.out / "benchmark.csv").write_text(result.to_csv(), encoding="utf-8")
    summary = (
        f"seconds per frame (median): {result.seconds_per_frame:.4f}\n"
        f"frames: {result.n_frames}  repeats: {result.repeats}\n"
        f"hardware: {result.hardware}\n"
    )
    (args.out / "benchmark.txt").write_text(summary, encoding="utf-8")
    figures.save_benchmark_figure(
        {args.checkpoint.stem: result}, args.out / "benchmark.png"
    )
    print(summary, end="")
    return 0


_HANDLERS = {
    "build-dataset": cmd_build_dataset,
    "train": cmd_train,
    "colorize": cmd_colorize,
    "evaluate": cmd_evaluate,
    "benchmark": cmd_benchmark,
}


def main(argv=None) -> int:
    logging.basicConfig(level=os.environ.get("CHROMAWARP_LOGLEVEL", "INFO"))
    cache = os.environ.get("CHROMAWARP_CACHE")
    if cache:
        os.environ.setdefault("TORCH_HOME", cache)
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return _HANDLERS[args.command](args)
    except USAGE_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except Exception:  # noqa: BLE001  runtime failure -> exit 1 with trace
        traceback.print_exc()
        return 1


if __name__ == "__main__":
    sys.exit(main())
