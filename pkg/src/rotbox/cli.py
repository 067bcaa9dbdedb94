"""Command-line entry point: ``rotbox <subcommand> ...``.

Exit codes: 0 success, 1 data error, 2 usage error.
"""

from __future__ import annotations

import argparse
import logging
import math
import sys
import time
from pathlib import Path

import numpy as np

from . import annotations as ann
from . import reports
from .assign import (BASELINE_ANGLES, AnchorGridSpec, AssignerConfig, assignment_stats, atss_assign,
                     generate_anchors, make_synthetic_refiner, max_iou_assign, ts4_assign)
from .evaluation import Detection, GroundTruth, MetricStyle, evaluate_detections
from .kernels import iou_matrix, rotated_nms
from .obb import AngleMode, OrientedBox
from .synthetic import random_boxes

log = logging.getLogger("rotbox")


class DataError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(2, f"{self.prog}: error: {message}\n")


def _read(path: str) -> str:
    try:
        return Path(path).read_text()
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc.strerror or exc}") from exc


def _write(path: str | None, text: str) -> None:
    if path is None or path == "-":
        sys.stdout.write(text)
    else:
        Path(path).parent.mkdir(parents=True, exist_ok=True)
        Path(path).write_text(text)


def _mode(args) -> AngleMode | None:
    return AngleMode(args.mode) if args.mode else None


def load_annotation(path: str, fmt: str = "auto", mode: AngleMode | None = None,
                    degrees: bool = False) -> ann.AnnotationRecord:
    text = _read(path)
    header = ann._header_fields(text)
    image_id = header.get("image_id") or Path(path).stem
    return ann.parse_annotation(text, fmt, image_id=image_id, mode=mode, degrees=degrees, source=path)


def read_box_list(path: str, degrees: bool = False, with_score: bool = False):
    """``cx cy w h theta [score]`` per line; returns boxes (N, 5) and scores."""
    boxes, scores, errors = [], [], []
    for n, toks in ann._data_lines(_read(path)):
        need = 6 if with_score else 5
        try:
            if len(toks) < need:
                raise ValueError(f"expected at least {need} numeric fields, got {len(toks)}")
            vals = [float(t) for t in toks[:need]]
            if degrees:
                vals[4] = math.radians(vals[4])
            box = OrientedBox(*vals[:5])
        except ValueError as exc:
            errors.append((n, str(exc)))
            continue
        boxes.append(box.as_tuple())
        if with_score:
            scores.append(vals[5])
    if errors:
        raise ann.AnnotationParseError(errors, path)
    return np.asarray(boxes, dtype=np.float64).reshape(-1, 5), np.asarray(scores)


def read_detections(path: str, degrees: bool = False) -> list[Detection]:
    """``image_id class score cx cy w h theta`` per line."""
    dets, errors = [], []
    for n, toks in ann._data_lines(_read(path)):
        try:
            if len(toks) != 8:
                raise ValueError(f"expected 'image_id class score cx cy w h theta', got {len(toks)} fields")
            score, *vals = (float(t) for t in toks[2:])
            if degrees:
                vals[4] = math.radians(vals[4])
            dets.append(Detection(OrientedBox(*vals), score, toks[1], toks[0]))
        except ValueError as exc:
            errors.append((n, str(exc)))
    if errors:
        raise ann.AnnotationParseError(errors, path)
    return dets


# -- subcommands ----------------------------------------------------------------


def cmd_iou(args) -> int:
    a, _ = read_box_list(args.boxes_a, args.degrees)
    b, _ = read_box_list(args.boxes_b, args.degrees)
    if len(a) == 0 or len(b) == 0:
        raise DataError("both box lists must be non-empty")
    m = iou_matrix(a, b, threads=args.threads)
    _write(args.output, "".join(" ".join(f"{v:.6f}" for v in row) + "\n" for row in m))
    return 0


def cmd_nms(args) -> int:
    boxes, scores = read_box_list(args.boxes, args.degrees, with_score=True)
    keep = rotated_nms(boxes, scores, args.iou)
    _write(args.output, "".join(f"{k}\n" for k in keep))
    return 0


def _run_strategy(name, anchors, gts, args):
    if name == "max-iou":
        res = max_iou_assign(anchors.boxes, gts, AssignerConfig(args.pos_iou, args.neg_iou))
        return res, {}
    if name == "atss":
        return atss_assign(anchors.boxes, anchors.levels, gts, args.topk), {}
    refiner = make_synthetic_refiner(args.noise, args.seed)
    out = ts4_assign(anchors.boxes, anchors.levels, gts, args.topk,
                     AssignerConfig(args.stage2_pos_iou, args.stage2_neg_iou), refiner)
    extra = {
        "stage1_positives": out.stage1.num_positive,
        "stage1_mean_positive_iou": out.stage1.mean_positive_iou(),
    }
    return out.stage2, extra


def cmd_assign(args) -> int:
    record = load_annotation(args.annotation, args.format, _mode(args), args.degrees)
    gts = record.boxes()
    angles = BASELINE_ANGLES if args.baseline_angles else (0.0,)
    anchors = generate_anchors(AnchorGridSpec(angles=angles), args.image_size[0], args.image_size[1])
    strategies = [args.strategy] + [s for s in args.compare or [] if s != args.strategy]
    parts, collected = [], {}
    for name in strategies:
        res, extra = _run_strategy(name, anchors, gts, args)
        st = assignment_stats(res, gts)
        collected[name] = st
        parts.append(reports.assignment_block(st, name, **extra))
    _write(args.output, "".join(parts))
    if args.plot_dir:
        from .plotting import plot_assignment_comparison
        plot_assignment_comparison(collected, Path(args.plot_dir) / f"{record.image_id}_assign.png")
    return 0


def cmd_eval(args) -> int:
    dets = read_detections(args.dets, args.degrees)
    gts = []
    for path in args.gt:
        rec = load_annotation(path, args.format, _mode(args), args.degrees)
        gts += [GroundTruth(i.box, i.cls, i.difficult, rec.image_id) for i in rec.instances]
    report = evaluate_detections(dets, gts, MetricStyle(args.style), args.iou, args.ignore_difficult_hits)
    _write(args.output, reports.eval_report_text(report))
    if args.csv:
        _write(args.csv, reports.pr_csv(report))
    if args.plot_dir:
        from .plotting import plot_pr_curves
        plot_pr_curves(report, Path(args.plot_dir) / f"pr_{report.style.value}.png")
    return 0


def cmd_tile(args) -> int:
    record = load_annotation(args.annotation, args.format, _mode(args), args.degrees)
    spec = ann.TilingSpec(args.patch, args.patch_h or args.patch, args.stride, args.min_area)
    tiles = ann.tile_annotations(record, args.image_size[0], args.image_size[1], spec)
    lines = []
    for (x0, y0), rec in tiles:
        lines.append(f"patch {rec.image_id} x={x0} y={y0} instances={len(rec)}\n")
        if args.out_dir:
            _write(str(Path(args.out_dir) / f"{rec.image_id}.txt"), ann.write_canonical(rec))
    lines.append(f"patches {len(tiles)}\n")
    _write(args.output, "".join(lines))
    return 0


def cmd_convert(args) -> int:
    record = load_annotation(args.annotation, args.format, _mode(args), args.degrees)
    text = ann.write_quad_file(record) if args.to == "quad" else ann.write_canonical(record)
    _write(args.output, text)
    return 0


def cmd_stats(args) -> int:
    records = [load_annotation(p, args.format, _mode(args), args.degrees) for p in args.annotations]
    stats = ann.dataset_stats(records)
    _write(args.output, reports.dataset_stats_text(stats))
    if args.csv:
        _write(args.csv, reports.stats_csv(stats))
    if args.plot_dir:
        from .plotting import plot_dataset_stats
        plot_dataset_stats(stats, Path(args.plot_dir) / "dataset_stats.png")
    return 0


def cmd_bench(args) -> int:
    a = random_boxes(args.n_iou, seed=args.seed)
    b = random_boxes(args.n_iou, seed=args.seed + 1)
    nms_boxes = random_boxes(args.n_nms, seed=args.seed + 2)
    scores = np.random.default_rng(args.seed + 3).uniform(size=args.n_nms)
    # compile outside the timed region
    iou_matrix(a[:2], b[:2], threads=1)
    rotated_nms(nms_boxes[:2], scores[:2], 0.5)

    t0 = time.perf_counter()
    m = iou_matrix(a, b, threads=args.threads)
    t_iou = time.perf_counter() - t0
    t0 = time.perf_counter()
    keep = rotated_nms(nms_boxes, scores, args.nms_iou)
    t_nms = time.perf_counter() - t0
    rows = [
        ("iou_matrix_shape", f"{len(a)}x{len(b)}"),
        ("iou_matrix_seconds", f"{t_iou:.4f}"),
        ("iou_matrix_nonzero", int(np.count_nonzero(m))),
        ("nms_boxes", len(nms_boxes)),
        ("nms_seconds", f"{t_nms:.4f}"),
        ("nms_kept", len(keep)),
    ]
    if not args.skip_thread_check:
        single = iou_matrix(a, b, threads=1)
        rows.append(("threads_identical", str(bool(np.array_equal(single, m))).lower()))
    _write(args.output, reports.block("bench", rows, threads=args.threads or "auto"))
    return 0


# -- parser ---------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--mode", choices=[m.value for m in AngleMode], default=None,
                        help="angle convention (default: file header, else detection)")
    common.add_argument("--degrees", action="store_true", help="input angles are in degrees")
    common.add_argument("--format", choices=["auto", "quad", "theta"], default="auto")
    common.add_argument("-o", "--output", default=None, help="write the report here instead of stdout")
    common.add_argument("-v", "--verbose", action="store_true")

    p = _Parser(prog="rotbox", description="Rotated-box geometry, label assignment and evaluation.")
    sub = p.add_subparsers(dest="command", parser_class=_Parser)
    sub.required = True

    s = sub.add_parser("iou", parents=[common], help="pairwise rotated IoU of two box lists")
    s.add_argument("boxes_a")
    s.add_argument("boxes_b")
    s.add_argument("--threads", type=int, default=None)
    s.set_defaults(func=cmd_iou)

    s = sub.add_parser("nms", parents=[common], help="greedy rotated NMS over 'cx cy w h theta score' lines")
    s.add_argument("boxes")
    s.add_argument("--iou", type=float, default=0.5)
    s.set_defaults(func=cmd_nms)

    s = sub.add_parser("assign", parents=[common], help="label assignment statistics for one image")
    s.add_argument("annotation")
    s.add_argument("--image-size", type=int, nargs=2, metavar=("W", "H"), required=True)
    s.add_argument("--strategy", choices=["max-iou", "atss", "ts4"], default="ts4")
    s.add_argument("--compare", choices=["max-iou", "atss", "ts4"], action="append")
    s.add_argument("--topk", type=int, default=9)
    s.add_argument("--pos-iou", type=float, default=0.5)
    s.add_argument("--neg-iou", type=float, default=0.4)
    s.add_argument("--stage2-pos-iou", type=float, default=0.6)
    s.add_argument("--stage2-neg-iou", type=float, default=0.5)
    s.add_argument("--noise", type=float, default=0.1, help="synthetic refiner noise scale")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--baseline-angles", action="store_true", help="anchors at 0, pi/6, pi/3")
    s.add_argument("--plot-dir", default=None)
    s.set_defaults(func=cmd_assign)

    s = sub.add_parser("eval", parents=[common], help="VOC07 / VOC12 / COCO-style AP")
    s.add_argument("--dets", required=True)
    s.add_argument("--gt", nargs="+", required=True)
    s.add_argument("--style", choices=[m.value for m in MetricStyle], default="voc12")
    s.add_argument("--iou", type=float, nargs="+", default=None)
    s.add_argument("--csv", default=None, help="write precision/recall points as CSV")
    s.add_argument("--ignore-difficult-hits", action="store_true",
                   help="drop detections that only hit difficult gts instead of counting them as FP")
    s.add_argument("--plot-dir", default=None)
    s.set_defaults(func=cmd_eval)

    s = sub.add_parser("tile", parents=[common], help="split large-scene annotations into patches")
    s.add_argument("annotation")
    s.add_argument("--image-size", type=int, nargs=2, metavar=("W", "H"), required=True)
    s.add_argument("--patch", type=int, default=1024)
    s.add_argument("--patch-h", type=int, default=None)
    s.add_argument("--stride", type=int, default=824)
    s.add_argument("--min-area", type=float, default=0.5)
    s.add_argument("--out-dir", default=None)
    s.set_defaults(func=cmd_tile)

    s = sub.add_parser("convert", parents=[common], help="rewrite an annotation file")
    s.add_argument("annotation")
    s.add_argument("--to", choices=["theta", "quad"], default="theta")
    s.set_defaults(func=cmd_convert)

    s = sub.add_parser("stats", parents=[common], help="size/angle/count statistics of annotation files")
    s.add_argument("annotations", nargs="+")
    s.add_argument("--csv", default=None)
    s.add_argument("--plot-dir", default=None)
    s.set_defaults(func=cmd_stats)

    s = sub.add_parser("bench", parents=[common], help="time iou_matrix and rotated_nms")
    s.add_argument("--n-iou", type=int, default=1000)
    s.add_argument("--n-nms", type=int, default=5000)
    s.add_argument("--nms-iou", type=float, default=0.5)
    s.add_argument("--threads", type=int, default=None)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--skip-thread-check", action="store_true")
    s.set_defaults(func=cmd_bench)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    log.debug("running %s", args.command)
    try:
        return args.func(args)
    except (DataError, ann.AnnotationParseError, ValueError) as exc:
        print(f"rotbox {args.command}: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
