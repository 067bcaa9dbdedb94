"""Line-oriented text reports and CSV exports.

A report is a sequence of blocks.  Each block opens with a header line
``[name key=value ...]`` followed by ``key value`` lines and ends with a
blank line.  Keys never contain whitespace; list values are comma
separated.  :func:`read_blocks` parses any report written here.
"""

from __future__ import annotations

import csv
import io
from typing import Iterable

from .annotations import DatasetStats
from .assign import AssignmentStats
from .evaluation import EvalReport


def _f(v: float, digits: int = 6) -> str:
    s = f"{v:.{digits}f}"
    return s[1:] if s.startswith("-") and float(s) == 0 else s


def _ints(vals: Iterable[int]) -> str:
    return ",".join(str(int(v)) for v in vals) or "-"


def _floats(vals: Iterable[float], digits: int = 6) -> str:
    return ",".join(_f(v, digits) for v in vals) or "-"


def block(kind: str, rows: list[tuple[str, object]], **attrs) -> str:
    head = " ".join([kind] + [f"{k}={v}" for k, v in attrs.items()])
    lines = [f"[{head}]"] + [f"{k} {v}" for k, v in rows]
    return "\n".join(lines) + "\n\n"


def read_blocks(text: str) -> list[tuple[str, dict[str, str], dict[str, str]]]:
    """Parse report text into ``(name, header_attrs, fields)`` triples."""
    out = []
    current = None
    for raw in text.splitlines():
        line = raw.strip()
        if not line:
            continue
        if line.startswith("[") and line.endswith("]"):
            toks = line[1:-1].split()
            attrs = dict(t.split("=", 1) for t in toks[1:])
            current = (toks[0], attrs, {})
            out.append(current)
        elif current is not None:
            key, _, value = line.partition(" ")
            current[2][key] = value
    return out


def assignment_block(stats: AssignmentStats, strategy: str, **extra) -> str:
    rows = [
        ("anchors", stats.num_anchors),
        ("gts", stats.num_gts),
        ("positives", stats.num_positive),
        ("negatives", stats.num_negative),
        ("ignored", stats.num_ignore),
        ("gts_without_positive", stats.gts_without_positive),
        ("mean_positive_iou", _f(stats.mean_positive_iou)),
        ("per_gt_positives", _ints(stats.per_gt_positives)),
        ("iou_bins", _floats(stats.bins, 2)),
        ("iou_hist", _ints(stats.iou_hist)),
    ]
    rows += [(k, _f(v) if isinstance(v, float) else v) for k, v in extra.items()]
    return block("assign", rows, strategy=strategy)


def parse_assignment_block(fields: dict[str, str]) -> AssignmentStats:
    def ints(s):
        return [] if s == "-" else [int(x) for x in s.split(",")]

    return AssignmentStats(
        num_anchors=int(fields["anchors"]),
        num_positive=int(fields["positives"]),
        num_negative=int(fields["negatives"]),
        num_ignore=int(fields["ignored"]),
        per_gt_positives=ints(fields["per_gt_positives"]),
        iou_hist=ints(fields["iou_hist"]),
        mean_positive_iou=float(fields["mean_positive_iou"]),
        bins=[float(x) for x in fields["iou_bins"].split(",")],
    )


def eval_report_text(report: EvalReport) -> str:
    head = [
        ("thresholds", _floats(report.thresholds, 2)),
        ("classes", sum(1 for r in report.classes.values() if r.num_gt > 0)),
        ("mAP", _f(report.mAP, 4)),
    ]
    head += [(k, _f(v, 4)) for k, v in report.extra.items()]
    parts = [block("eval", head, style=report.style.value)]
    for name, res in report.classes.items():
        rows = [("gts", res.num_gt), ("dets", res.num_det), ("ap", _f(res.ap))]
        for c in res.curves:
            tp = int(c.tp.sum())
            rows.append((f"ap@{c.threshold:.2f}", _f(c.ap)))
            rows.append((f"tp@{c.threshold:.2f}", tp))
            rows.append((f"fp@{c.threshold:.2f}", len(c.tp) - tp))
        parts.append(block("class", rows, name=name))
    return "".join(parts)


def pr_csv(report: EvalReport) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["class", "iou_threshold", "rank", "score", "tp", "precision", "recall"])
    for name, res in report.classes.items():
        for c in res.curves:
            for k in range(len(c.scores)):
                writer.writerow([name, f"{c.threshold:.2f}", k + 1, _f(c.scores[k]), int(c.tp[k]),
                                 _f(c.precision[k]), _f(c.recall[k])])
    return buf.getvalue()


def dataset_stats_text(stats: DatasetStats) -> str:
    rows = [
        ("images", stats.num_images),
        ("instances", stats.num_instances),
        ("mean_per_image", _f(stats.mean_per_image)),
        ("per_image_counts", _ints(stats.per_image_counts)),
    ]
    rows += [(f"class.{k}", v) for k, v in stats.class_counts.items()]
    for name in ("width", "height", "angle", "aspect"):
        counts, edges = getattr(stats, f"{name}_hist")
        rows.append((f"{name}_edges", _floats(edges, 4)))
        rows.append((f"{name}_hist", _ints(counts)))
    return block("stats", rows)


def stats_csv(stats: DatasetStats) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["quantity", "bin_lo", "bin_hi", "count"])
    for name in ("width", "height", "angle", "aspect"):
        counts, edges = getattr(stats, f"{name}_hist")
        for c, lo, hi in zip(counts, edges[:-1], edges[1:]):
            writer.writerow([name, _f(lo, 4), _f(hi, 4), c])
    return buf.getvalue()
