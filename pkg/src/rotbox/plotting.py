"""Report figures.  Uses the object-oriented matplotlib API with the Agg
canvas so nothing touches pyplot's global state."""

from __future__ import annotations

from pathlib import Path

import numpy as np
from matplotlib.backends.backend_agg import FigureCanvasAgg
from matplotlib.figure import Figure

from .annotations import DatasetStats
from .assign import AssignmentStats
from .evaluation import EvalReport

FIG_WIDTH = 6.4
GOLDEN = (np.sqrt(5.0) - 1.0) / 2.0


def _new_figure(ncols: int = 1, nrows: int = 1, width: float = FIG_WIDTH):
    fig = Figure(figsize=(width * ncols, width * GOLDEN * nrows), dpi=100)
    FigureCanvasAgg(fig)
    axes = fig.subplots(nrows, ncols, squeeze=False)
    return fig, axes


def _save(fig: Figure, path: Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.tight_layout()
    # fixed metadata keeps output byte-stable between runs
    fig.savefig(path, metadata={"Software": None})
    return path


def _bars(ax, counts, edges, **kw):
    edges = np.asarray(edges, dtype=float)
    ax.bar(edges[:-1], counts, width=np.diff(edges), align="edge", edgecolor="k", linewidth=0.4, **kw)


def plot_pr_curves(report: EvalReport, path) -> Path:
    fig, axes = _new_figure()
    ax = axes[0, 0]
    for name, res in report.classes.items():
        if not res.curves or res.num_gt == 0:
            continue
        c = res.curves[0]
        rec = np.concatenate(([0.0], c.recall))
        prec = np.concatenate(([1.0 if len(c.precision) else 0.0], c.precision))
        ax.step(rec, prec, where="post", label=f"{name} (AP {res.ap:.3f})")
    ax.set_xlim(0, 1.02)
    ax.set_ylim(0, 1.02)
    ax.set_xlabel("recall")
    ax.set_ylabel("precision")
    thr = report.thresholds[0]
    ax.set_title(f"{report.style.value} @ IoU {thr:.2f}: mAP {report.mAP:.4f}")
    if report.classes:
        ax.legend(loc="lower left", fontsize="small")
    return _save(fig, path)


def plot_dataset_stats(stats: DatasetStats, path) -> Path:
    fig, axes = _new_figure(ncols=2, nrows=2, width=4.0)
    panels = [
        ("width (long side, px)", stats.width_hist),
        ("height (short side, px)", stats.height_hist),
        ("angle (rad)", stats.angle_hist),
    ]
    for ax, (label, (counts, edges)) in zip(axes.ravel(), panels):
        _bars(ax, counts, edges)
        ax.set_xlabel(label)
        ax.set_ylabel("instances")
    ax = axes[1, 1]
    if stats.per_image_counts:
        top = max(stats.per_image_counts)
        ax.hist(stats.per_image_counts, bins=np.arange(0, top + 2) - 0.5, edgecolor="k", linewidth=0.4)
    ax.set_xlabel(f"instances per image (mean {stats.mean_per_image:.2f})")
    ax.set_ylabel("images")
    return _save(fig, path)


def plot_assignment_comparison(stats: dict[str, AssignmentStats], path) -> Path:
    """Positive-IoU histograms and per-gt positive counts, one series per strategy."""
    fig, axes = _new_figure(ncols=2, width=5.0)
    ax_hist, ax_gt = axes[0]
    n = max(len(stats), 1)
    for k, (name, st) in enumerate(stats.items()):
        edges = np.asarray(st.bins)
        width = np.diff(edges) / n
        ax_hist.bar(edges[:-1] + k * width, st.iou_hist, width=width, align="edge",
                    label=f"{name} ({st.num_positive} pos)")
        gidx = np.arange(st.num_gts)
        ax_gt.bar(gidx + k / n, st.per_gt_positives, width=1 / n, align="edge", label=name)
    ax_hist.set_xlabel("IoU of positive anchor with its gt")
    ax_hist.set_ylabel("positives")
    ax_hist.legend(fontsize="small")
    ax_gt.set_xlabel("gt index")
    ax_gt.set_ylabel("positives")
    ax_gt.legend(fontsize="small")
    return _save(fig, path)
