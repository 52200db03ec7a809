"""Command-line front end.

Exit codes: 0 success, 1 validation or input error, 2 usage error.
Data goes to files or stdout; diagnostics go to stderr.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import __version__
from .combine import DEFAULT_SCORE_THRESHOLD, combine_dataset
from .core import PROTOCOL_VERSION
from .formats import (
    EvalResult,
    UnsupportedFormatError,
    atomic_write,
    format_table,
    load_dataset,
    read_manifest_file,
    save_label_map,
    write_dataset,
    write_report,
)
from .harness import MODES, SynthParams, synth_dataset, upper_bound
from .instance import evaluate_instances
from .parallel import default_threads
from .rescoring import DEFAULT_TOPK, calibration, rescore_dataset
from .semantic import ConfusionMatrix, pixel_confusion, scores

log = logging.getLogger("parsingeval")


def _shared(p: argparse.ArgumentParser, manifest=True):
    if manifest:
        p.add_argument("--manifest", required=True, help="dataset manifest JSON")
    p.add_argument("--out", help="output directory (reports, maps, datasets)")
    p.add_argument("--threads", type=int, default=default_threads(), help="worker threads (default: all cores)")
    p.add_argument("--score-threshold", type=float, default=DEFAULT_SCORE_THRESHOLD,
                   help="minimum parsing score for instances rendered into semantic maps")
    p.add_argument("--topk", type=int, default=DEFAULT_TOPK, help="predictions kept per image when re-scoring")
    p.add_argument("--ignore-background", action="store_true", help="exclude category 0 from mIoU and mean accuracy")
    p.add_argument("--seed", type=int, default=7)
    p.add_argument("--format", choices=("table", "json"), default="table", help="what to print on stdout")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="parsingeval", description=__doc__.splitlines()[0],
                                     formatter_class=argparse.RawDescriptionHelpFormatter)
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__} [{PROTOCOL_VERSION}]")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("eval-semantic", help="mIoU / pixel acc. / mean acc.")
    _shared(p)
    p.add_argument("--source", choices=("auto", "global", "instance", "combine"), default="auto",
                   help="semantic prediction to score (auto: combine if global maps exist, else instance)")

    p = sub.add_parser("eval-instance", help="AP^p at mIoU thresholds, AP^p_vol, PCP_50")
    _shared(p)

    p = sub.add_parser("rescore", help="top-K selection and fused parsing scores; writes a new dataset")
    _shared(p)
    p.add_argument("--oracle", action="store_true", help="use the true mIoU target as iou_score")

    p = sub.add_parser("combine", help="global / instance / combined semantic maps and their scores")
    _shared(p)

    p = sub.add_parser("calibrate", help="true mIoU against detection and parsing scores")
    _shared(p)

    p = sub.add_parser("upper-bound", help="ground-truth swap analysis")
    _shared(p)
    p.add_argument("--mode", choices=MODES + ("all",), default="all")

    p = sub.add_parser("synth", help="generate a synthetic dataset")
    _shared(p, manifest=False)
    p.add_argument("--images", type=int, default=50)
    p.add_argument("--width", type=int, default=256)
    p.add_argument("--height", type=int, default=256)
    p.add_argument("--classes", type=int, default=20)
    p.add_argument("--instances", type=int, nargs=2, default=(2, 5), metavar=("MIN", "MAX"))
    p.add_argument("--parts", type=int, nargs=2, default=(2, 6), metavar=("MIN", "MAX"))
    p.add_argument("--miou-range", type=float, nargs=2, default=(0.2, 0.95), metavar=("LO", "HI"))
    p.add_argument("--score-model", choices=("independent", "correlated"), default="independent")
    p.add_argument("--score-sigma", type=float, default=0.1)
    p.add_argument("--box-jitter", type=int, default=3)
    p.add_argument("--perturb", choices=("erode", "shift", "mixed"), default="mixed")
    p.add_argument("--no-global", action="store_true", help="do not emit global semantic predictions")
    return parser


def _load(args):
    manifest = read_manifest_file(args.manifest)
    return load_dataset(manifest)


def _emit(args, results, deltas=None, extra=None):
    report = write_report(results, extra)
    table = format_table(results, deltas)
    if args.out:
        out = Path(args.out)
        atomic_write(out / "report.json", report)
        atomic_write(out / "report.txt", table)
    sys.stdout.write(report if args.format == "json" else table)


def cmd_eval_semantic(args):
    data = _load(args)
    source = args.source
    if source == "auto":
        has_global = all(im.pred_semantic is not None for im in data.manifest.images)
        source = "combine" if has_global else "instance"
    if source == "global":
        n = data.categories.count
        cm = ConfusionMatrix.empty(n)
        for rec in data:
            if rec.pred_semantic is None:
                raise ValueError(f"image {rec.image_id!r} has no pred_semantic")
            cm = cm.merge(pixel_confusion(rec.pred_semantic, rec.gt_semantic, n))
        metrics = scores(cm, args.ignore_background)
    else:
        res = combine_dataset(data, args.score_threshold, args.ignore_background, args.threads, cls_fallback=True)
        for w in res.warnings:
            log.warning(w)
        if source not in res.metrics:
            raise ValueError(f"cannot score source {source!r}: {'; '.join(res.warnings)}")
        metrics = res.metrics[source]
    _emit(args, EvalResult(source, len(data), semantic=metrics))


def cmd_eval_instance(args):
    data = _load(args)
    _emit(args, EvalResult("instance", len(data), instance=evaluate_instances(data, threads=args.threads)))


def _require_out(args):
    if not args.out:
        raise ValueError("--out is required for this command")
    return Path(args.out)


def cmd_rescore(args):
    data = _load(args)
    out = _require_out(args)
    records = rescore_dataset(data, args.topk, args.oracle, args.threads)
    path = write_dataset(records, out, data.categories)
    log.info("wrote %s", path)
    print(path)


def cmd_combine(args):
    data = _load(args)
    res = combine_dataset(data, args.score_threshold, args.ignore_background, args.threads, cls_fallback=True)
    for w in res.warnings:
        log.warning(w)
    if args.out:
        maps_dir = Path(args.out) / "maps"
        for im in res.maps:
            for mode, m in im.by_mode().items():
                if m is not None:
                    d = maps_dir / mode
                    d.mkdir(parents=True, exist_ok=True)
                    save_label_map(d / f"{im.image_id}.png", m)
    rows = [EvalResult(mode, len(data), semantic=m) for mode, m in res.metrics.items()]
    _emit(args, rows, extra={"warnings": res.warnings} if res.warnings else None)


def cmd_calibrate(args):
    data = _load(args)
    rep = calibration(data, args.threads)
    summary = json.dumps(rep.summary(), indent=2, sort_keys=True) + "\n"
    if args.out:
        atomic_write(Path(args.out) / "calibration.csv", rep.to_csv())
        atomic_write(Path(args.out) / "calibration.json", summary)
    sys.stdout.write(summary)


def cmd_upper_bound(args):
    data = _load(args)
    modes = MODES[1:] if args.mode == "all" else (args.mode,)
    rows, deltas, notes = upper_bound(
        data, modes, score_threshold=args.score_threshold, ignore_background=args.ignore_background,
        threads=args.threads,
    )
    if args.mode not in ("all", "baseline"):
        rows = [r for r in rows if r.name == args.mode]
        deltas = {}
    extra = {"notes": notes, "deltas": {k: {c: round(v, 4) for c, v in d.items()} for k, d in deltas.items()}}
    _emit(args, rows, deltas, extra)


def cmd_synth(args):
    out = _require_out(args)
    params = SynthParams(
        seed=args.seed,
        width=args.width,
        height=args.height,
        num_classes=args.classes,
        instances=tuple(args.instances),
        parts=tuple(args.parts),
        miou_range=tuple(args.miou_range),
        score_model=args.score_model,
        score_sigma=args.score_sigma,
        box_jitter=args.box_jitter,
        perturb=args.perturb,
        with_global=not args.no_global,
    )
    records = synth_dataset(params, args.images, args.threads)
    path = write_dataset(records, out, params.categories)
    print(path)


COMMANDS = {
    "eval-semantic": cmd_eval_semantic,
    "eval-instance": cmd_eval_instance,
    "rescore": cmd_rescore,
    "combine": cmd_combine,
    "calibrate": cmd_calibrate,
    "upper-bound": cmd_upper_bound,
    "synth": cmd_synth,
}


def dispatch(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, stream=sys.stderr,
                        format="%(asctime)s %(levelname)s %(message)s")
    if getattr(args, "threads", 1) < 1:
        parser.print_usage(sys.stderr)
        print("error: --threads must be >= 1", file=sys.stderr)
        return 2
    try:
        COMMANDS[args.command](args)
    except (ValueError, UnsupportedFormatError, OSError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    return 0


def main():
    sys.exit(dispatch())


if __name__ == "__main__":
    main()
