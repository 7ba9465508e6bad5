"""Command-line entry point: ``sceneseg <command> [flags]``.

Exit codes: 0 success, 1 validation failure, 2 input error, 3 internal error.
``SCENESEG_THREADS`` caps the number of worker threads used for per-video work.
A JSON file given with ``--defaults`` maps command names to flag defaults, e.g.
``{"decode": {"thr": 0.4}}``; flags on the command line still win.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import fields
from pathlib import Path
from typing import Callable, Iterable, Sequence, TypeVar

from . import __version__
from .annotation_io import (
    AnnotationValidationError,
    ParseError,
    PredictionRejected,
    dataset_stats,
    parse_annotations,
    parse_predictions,
    parse_shots,
    plan_snaps,
    serialize_annotations,
    serialize_predictions,
    serialize_shots,
)
from .core import SceneSegError, ValidationReport, load_taxonomy, validate_annotation
from .decode import decode_boundaries, framewise_threshold_decode, read_frame_outputs, write_frame_outputs
from .metrics import UnknownVideoError, evaluate, format_report, report_csv, report_json
from .model import FitConfig, ModelConfig, ModelWeights, fit, forward, read_bundle, write_bundle
from .model.config import list_bundle_ids
from .synth import InfeasibleConfig, SynthConfig, gen_corpus

log = logging.getLogger("sceneseg")

EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_INPUT = 2
EXIT_INTERNAL = 3

OUTPUTS_SUFFIX = ".outputs.bin"

T = TypeVar("T")
R = TypeVar("R")


class CommandError(Exception):
    """Raised by a command to leave with a specific exit code and message."""

    def __init__(self, code: int, message: str):
        super().__init__(message)
        self.code = code


def thread_count() -> int:
    raw = os.environ.get("SCENESEG_THREADS")
    if raw is None:
        return os.cpu_count() or 1
    try:
        n = int(raw)
    except ValueError:
        raise CommandError(EXIT_INPUT, f"SCENESEG_THREADS must be an integer, got {raw!r}") from None
    return max(1, n)


def parallel_map(fn: Callable[[T], R], items: Iterable[T]) -> list[R]:
    """Order-preserving map over a thread pool sized by SCENESEG_THREADS."""
    items = list(items)
    n = min(thread_count(), len(items))
    if n <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=n) as pool:
        return list(pool.map(fn, items))


def _read_text(path: str) -> str:
    try:
        return Path(path).read_text()
    except OSError as e:
        raise CommandError(EXIT_INPUT, f"cannot read {path}: {e.strerror or e}") from None


def _write_text(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text)


def _taxonomy(path: str | None):
    try:
        return load_taxonomy(path)
    except OSError as e:
        raise CommandError(EXIT_INPUT, f"cannot read taxonomy {path}: {e.strerror or e}") from None


# ---------------------------------------------------------------------------
# commands


def cmd_evaluate(args: argparse.Namespace) -> int:
    tax = _taxonomy(args.taxonomy)
    try:
        gt = parse_annotations(_read_text(args.gt), tax)
    except AnnotationValidationError as e:
        raise CommandError(EXIT_VALIDATION, f"ground truth rejected: {e}") from None
    try:
        preds = parse_predictions(_read_text(args.pred), tax)
    except PredictionRejected as e:
        lines = [f"predictions rejected for video {e.video_id}:"] + [f"  {v.kind}: {v.detail}" for v in e.violations]
        raise CommandError(EXIT_VALIDATION, "\n".join(lines)) from None
    try:
        report = evaluate(gt, preds, tax, strategy=args.f1_strategy)
    except UnknownVideoError as e:
        raise CommandError(EXIT_INPUT, str(e)) from None
    if args.out:
        out = Path(args.out)
        _write_text(out / "report.json", report_json(report))
        _write_text(out / "report.csv", report_csv(report))
    sys.stdout.write(format_report(report))
    return EXIT_OK


def _outputs_files(directory: str) -> list[Path]:
    d = Path(directory)
    if not d.is_dir():
        raise CommandError(EXIT_INPUT, f"{directory} is not a directory")
    return sorted(d.glob("*" + OUTPUTS_SUFFIX))


def cmd_decode(args: argparse.Namespace) -> int:
    files = _outputs_files(args.outputs_dir)

    def one(path: Path):
        video_id = path.name[: -len(OUTPUTS_SUFFIX)]
        out = read_frame_outputs(path)
        if args.mode == "framewise":
            return framewise_threshold_decode(out, args.thr, video_id)
        return decode_boundaries(out, video_id, args.thr, args.nms_window)

    preds = parallel_map(one, files)
    text = serialize_predictions(preds)
    if args.out:
        _write_text(Path(args.out), text)
    else:
        sys.stdout.write(text)
    log.info("decoded %d videos (%s mode)", len(preds), args.mode)
    return EXIT_OK


def cmd_validate(args: argparse.Namespace) -> int:
    tax = _taxonomy(args.taxonomy)
    split = parse_annotations(_read_text(args.ann), tax, strict=False)
    report = ValidationReport()
    for ann in split.annotations:
        report.extend(validate_annotation(ann, tax))
    lines = [str(v) for v in report.violations]
    lines.append(f"{len(report)} violations in {len(split)} videos")
    if args.shots:
        shots = parse_shots(_read_text(args.shots))
        total = 0
        lines.append(f"snap preview (eps {args.snap_eps} s):")
        for ann in split.annotations:
            if ann.video_id not in shots or not validate_annotation(ann).valid:
                continue
            for m in plan_snaps(ann, shots[ann.video_id], args.snap_eps):
                total += 1
                state = "move" if m.applied else "keep (would collapse a scene)"
                lines.append(f"  {ann.video_id} boundary {m.index}: {m.old_s:.6f} -> {m.shot_s:.6f}  {state}")
        lines.append(f"{total} boundaries within {args.snap_eps} s of a shot cut")
    sys.stdout.write("\n".join(lines) + "\n")
    return EXIT_OK if report.valid else EXIT_VALIDATION


def cmd_stats(args: argparse.Namespace) -> int:
    tax = _taxonomy(args.taxonomy)
    try:
        split = parse_annotations(_read_text(args.ann), tax)
    except AnnotationValidationError as e:
        raise CommandError(EXIT_VALIDATION, str(e)) from None
    stats = dataset_stats(split, tax, bin_s=args.bin_s)
    if args.out:
        _write_text(Path(args.out), stats.to_csv())
    sys.stdout.write(stats.to_text())
    return EXIT_OK


def _synth_config(args: argparse.Namespace) -> SynthConfig:
    base = json.loads(_read_text(args.config)) if args.config else {}
    known = {f.name for f in fields(SynthConfig)}
    unknown = sorted(set(base) - known)
    if unknown:
        raise CommandError(EXIT_INPUT, f"unknown synth config keys: {unknown}")
    for name in ("seed", "num_videos", "video_offset", "feature_noise", "label_noise", "boundary_noise", "offset_noise_s"):
        value = getattr(args, name)
        if value is not None:
            base[name] = value
    return SynthConfig(**base)


def cmd_synth(args: argparse.Namespace) -> int:
    tax = _taxonomy(args.taxonomy)
    cfg = _synth_config(args)
    corpus = gen_corpus(cfg, tax)
    out = Path(args.out)
    _write_text(out / "annotations.json", serialize_annotations(corpus.split))
    _write_text(out / "shots.json", serialize_shots(corpus.shots[a.video_id] for a in corpus.split.annotations))
    for a in corpus.split.annotations:
        write_bundle(out / "features", a.video_id, corpus.features[a.video_id])
        (out / "outputs").mkdir(parents=True, exist_ok=True)
        write_frame_outputs(out / "outputs" / (a.video_id + OUTPUTS_SUFFIX), corpus.outputs[a.video_id])
    log.info("wrote %d videos to %s", len(corpus.split), out)
    return EXIT_OK


def cmd_model_demo(args: argparse.Namespace) -> int:
    if args.weights and Path(args.weights).exists() and not args.fit_ann:
        weights = ModelWeights.load(args.weights)
    else:
        cfg = ModelConfig.load(args.config) if args.config else ModelConfig()
        weights = ModelWeights.init(cfg)
    if args.fit_ann:
        if not args.fit_features:
            raise CommandError(EXIT_INPUT, "--fit-ann needs --fit-features")
        split = parse_annotations(_read_text(args.fit_ann), None)
        bundles = [read_bundle(args.fit_features, a.video_id) for a in split.annotations]
        fit_cfg = FitConfig(steps=args.steps, lr=args.lr, heads_only=args.heads_only, batch_size=args.batch_size,
                            seed=args.fit_seed, log_every=100 if args.verbose else 0)
        weights, hist = fit(weights, bundles, split.annotations, fit_cfg)
        log.info("fitted on %d videos: final losses cls %.4f bnd %.4f off %.5f", len(bundles),
                 hist.cls_loss[-1], hist.bnd_loss[-1], hist.off_loss[-1])
        if args.weights:
            weights.save(args.weights)
    ids = list_bundle_ids(args.features_dir)
    if not ids:
        raise CommandError(EXIT_INPUT, f"no feature bundles in {args.features_dir}")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)

    def one(video_id: str) -> None:
        res = forward(read_bundle(args.features_dir, video_id), weights)
        write_frame_outputs(out / (video_id + OUTPUTS_SUFFIX), res.frame_outputs())

    parallel_map(one, ids)
    log.info("wrote outputs for %d videos to %s", len(ids), out)
    return EXIT_OK


# ---------------------------------------------------------------------------
# parser


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="sceneseg", description="Multi-label temporal scene segmentation tools.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    p.add_argument("--defaults", metavar="FILE", help="JSON file of per-command flag defaults")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True, metavar="COMMAND")

    e = sub.add_parser("evaluate", help="score predictions against ground truth (Avg_mAP, Avg_F1)")
    e.add_argument("--gt", required=True, help="ground-truth annotations.json")
    e.add_argument("--pred", required=True, help="predictions.json")
    e.add_argument("--taxonomy", help="taxonomy JSON (default: the bundled 82-class taxonomy)")
    e.add_argument("--out", help="directory for report.json and report.csv")
    e.add_argument("--f1-strategy", choices=("ordered", "nearest-pair"), default="ordered",
                   help="boundary matching: ordered claim-and-delete (default) or globally nearest pairs")
    e.set_defaults(func=cmd_evaluate)

    d = sub.add_parser("decode", help="turn frame-output files into a predictions document")
    d.add_argument("--outputs-dir", required=True, help=f"directory of <video_id>{OUTPUTS_SUFFIX} files")
    d.add_argument("--thr", type=float, default=0.5, help="probability threshold (default 0.5)")
    d.add_argument("--nms-window", type=float, default=1.0, help="peak suppression half-window in seconds (default 1.0)")
    d.add_argument("--mode", choices=("boundary", "framewise"), default="boundary",
                   help="boundary-head peak picking (default) or frame-wise label thresholding")
    d.add_argument("--out", help="predictions.json to write (default: stdout)")
    d.set_defaults(func=cmd_decode)

    v = sub.add_parser("validate", help="lint annotations and preview shot snapping")
    v.add_argument("--ann", required=True, help="annotations.json")
    v.add_argument("--taxonomy", help="taxonomy JSON (default: the bundled taxonomy)")
    v.add_argument("--shots", help="shots.json; lists boundaries that snapping would move")
    v.add_argument("--snap-eps", type=float, default=0.1, help="snapping distance in seconds (default 0.1)")
    v.set_defaults(func=cmd_validate)

    s = sub.add_parser("stats", help="corpus statistics")
    s.add_argument("--ann", required=True, help="annotations.json")
    s.add_argument("--taxonomy", help="taxonomy JSON (default: the bundled taxonomy)")
    s.add_argument("--bin-s", type=float, default=5.0, help="duration histogram bin width in seconds")
    s.add_argument("--out", help="CSV file for per-class scene counts")
    s.set_defaults(func=cmd_stats)

    y = sub.add_parser("synth", help="generate a synthetic corpus")
    y.add_argument("--out", required=True, help="output directory")
    y.add_argument("--config", help="JSON file of SynthConfig fields")
    y.add_argument("--taxonomy", help="taxonomy JSON (default: the bundled taxonomy)")
    y.add_argument("--seed", type=int, help="random seed (default 0)")
    y.add_argument("--num-videos", type=int, help="number of videos (default 100)")
    y.add_argument("--video-offset", type=int,
                   help="index of the first video; use with the same seed for a disjoint training corpus")
    y.add_argument("--feature-noise", type=float, help="feature noise standard deviation (default 0.05)")
    y.add_argument("--label-noise", type=float, help="label-score noise in the frame outputs (default 0)")
    y.add_argument("--boundary-noise", type=float, help="boundary-probability noise in the frame outputs (default 0)")
    y.add_argument("--offset-noise-s", type=float, help="offset noise in seconds in the frame outputs (default 0)")
    y.set_defaults(func=cmd_synth)

    m = sub.add_parser("model-demo", help="run the network on feature bundles, optionally fitting it first")
    m.add_argument("--config", help="ModelConfig JSON (used when weights are initialized)")
    m.add_argument("--weights", help="weights manifest to load, or to save after fitting")
    m.add_argument("--features-dir", required=True, help="directory of <video_id>.<modality>.bin bundles")
    m.add_argument("--out", required=True, help=f"directory for <video_id>{OUTPUTS_SUFFIX} files")
    m.add_argument("--fit-ann", help="annotations.json of a training corpus; fit the weights before running")
    m.add_argument("--fit-features", help="feature directory of the training corpus")
    m.add_argument("--steps", type=int, default=FitConfig.steps, help=f"fitting steps (default {FitConfig.steps})")
    m.add_argument("--lr", type=float, default=FitConfig.lr, help=f"peak learning rate (default {FitConfig.lr})")
    m.add_argument("--batch-size", type=int, default=FitConfig.batch_size,
                   help="videos per fitting step (default: all)")
    m.add_argument("--fit-seed", type=int, default=FitConfig.seed, help="mini-batch sampling seed (default 0)")
    m.add_argument("--heads-only", action="store_true", help="fit only the prediction heads")
    m.set_defaults(func=cmd_model_demo)
    return p


def _apply_defaults(parser: argparse.ArgumentParser, argv: Sequence[str]) -> None:
    pre = argparse.ArgumentParser(add_help=False)
    pre.add_argument("--defaults")
    known, _ = pre.parse_known_args(argv)
    if not known.defaults:
        return
    table = json.loads(_read_text(known.defaults))
    subparsers = next(a for a in parser._actions if isinstance(a, argparse._SubParsersAction))
    for command, values in table.items():
        if command not in subparsers.choices:
            raise CommandError(EXIT_INPUT, f"--defaults names unknown command {command!r}")
        subparsers.choices[command].set_defaults(**{k.replace("-", "_"): v for k, v in values.items()})


def main(argv: Sequence[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        _apply_defaults(parser, argv)
        args = parser.parse_args(argv)   # exits with status 2 on unknown flags
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                            format="%(levelname)s %(name)s: %(message)s")
        return args.func(args)
    except CommandError as e:
        print(f"sceneseg: {e}", file=sys.stderr)
        return e.code
    except (ParseError, InfeasibleConfig, json.JSONDecodeError, FileNotFoundError, ValueError, SceneSegError) as e:
        print(f"sceneseg: input error: {e}", file=sys.stderr)
        return EXIT_INPUT
    except Exception as e:  # noqa: BLE001 - last-resort guard for the exit-code contract
        print(f"sceneseg: internal error: {type(e).__name__}: {e}", file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
