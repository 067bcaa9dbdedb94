"""Rotated detection evaluation: VOC07 (11-point), VOC12 (all-point) and
COCO-style threshold-averaged AP."""

from __future__ import annotations

import enum
from collections import defaultdict
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .kernels import iou_matrix, score_order
from .obb import OrientedBox, boxes_to_array

COCO_THRESHOLDS = tuple(np.round(np.arange(0.5, 0.951, 0.05), 2).tolist())


class MetricStyle(enum.Enum):
    VOC07 = "voc07"
    VOC12 = "voc12"
    COCO = "coco"

    @property
    def default_thresholds(self) -> tuple[float, ...]:
        return COCO_THRESHOLDS if self is MetricStyle.COCO else (0.5,)


@dataclass(frozen=True)
class Detection:
    box: OrientedBox
    score: float
    cls: str
    image_id: str = ""


@dataclass(frozen=True)
class GroundTruth:
    box: OrientedBox
    cls: str
    difficult: bool = False
    image_id: str = ""


@dataclass
class ClassCurve:
    """Precision/recall trace of one class at one IoU threshold."""

    threshold: float
    scores: np.ndarray
    precision: np.ndarray
    recall: np.ndarray
    tp: np.ndarray
    ap: float


@dataclass
class ClassResult:
    cls: str
    num_gt: int
    num_det: int
    curves: list[ClassCurve]
    ap: float

    def ap_at(self, thr: float) -> float | None:
        for c in self.curves:
            if abs(c.threshold - thr) < 1e-9:
                return c.ap
        return None


@dataclass
class EvalReport:
    style: MetricStyle
    thresholds: tuple[float, ...]
    classes: dict[str, ClassResult]
    mAP: float
    extra: dict[str, float] = field(default_factory=dict)


def voc07_ap(recall: np.ndarray, precision: np.ndarray) -> float:
    """11-point interpolated AP on the recall grid 0, 0.1, ..., 1."""
    if len(recall) == 0:
        return 0.0
    ap = 0.0
    for t in np.linspace(0.0, 1.0, 11):
        mask = recall >= t - 1e-12
        ap += precision[mask].max() if mask.any() else 0.0
    return float(ap / 11.0)


def all_point_ap(recall: np.ndarray, precision: np.ndarray) -> float:
    """Area under the monotone precision envelope."""
    if len(recall) == 0:
        return 0.0
    mrec = np.concatenate(([0.0], recall, [1.0]))
    mpre = np.concatenate(([0.0], precision, [0.0]))
    mpre = np.maximum.accumulate(mpre[::-1])[::-1]
    i = np.flatnonzero(mrec[1:] != mrec[:-1])
    return float(np.sum((mrec[i + 1] - mrec[i]) * mpre[i + 1]))


def _match_class(dets: list[Detection], gts: list[GroundTruth], thresholds: Sequence[float],
                 ignore_difficult_hits: bool = False):
    """Greedy matching of one class; returns per-threshold TP/FP flags in score order."""
    order = score_order([d.score for d in dets])
    dets = [dets[i] for i in order]
    by_image: dict[str, list[int]] = defaultdict(list)
    for gi, g in enumerate(gts):
        by_image[g.image_id].append(gi)
    # IoU of each detection with the gts of its image
    det_ious: list[tuple[list[int], np.ndarray]] = []
    for d in dets:
        gidx = by_image.get(d.image_id, [])
        if gidx:
            ious = iou_matrix([d.box], [gts[g].box for g in gidx])[0]
        else:
            ious = np.zeros(0)
        det_ious.append((gidx, ious))
    flags = []
    for thr in thresholds:
        matched = set()
        tp = np.zeros(len(dets))
        fp = np.zeros(len(dets))
        for k, (gidx, ious) in enumerate(det_ious):
            best, best_iou, hit_difficult = None, -1.0, False
            for g, v in zip(gidx, ious):
                if v < thr:
                    continue
                if gts[g].difficult:
                    hit_difficult = True
                    continue
                # strict '>' keeps the lower gt index on ties
                if g not in matched and v > best_iou:
                    best, best_iou = g, v
            if best is not None:
                matched.add(best)
                tp[k] = 1
            elif not (hit_difficult and ignore_difficult_hits):
                fp[k] = 1
        flags.append((tp, fp))
    scores = np.asarray([d.score for d in dets], dtype=np.float64)
    return scores, flags


def evaluate_detections(dets: Sequence[Detection], gts: Sequence[GroundTruth],
                        style: MetricStyle | str = MetricStyle.VOC12,
                        iou_thresholds: Sequence[float] | None = None,
                        ignore_difficult_hits: bool = False) -> EvalReport:
    """Per-class PR curves and AP for rotated detections.

    Matching is greedy by descending score; each detection takes the
    highest-IoU unmatched non-difficult gt of its class and image, otherwise
    it is a false positive.  Difficult gts never count as misses and never
    consume a match.  With ``ignore_difficult_hits`` a detection whose only
    qualifying overlap is a difficult gt is dropped from the ranking instead,
    as the VOC devkit does.  mAP averages the classes that have at least one
    non-difficult gt.
    """
    style = MetricStyle(style)
    thresholds = tuple(style.default_thresholds if iou_thresholds is None else iou_thresholds)
    if not thresholds or any(not 0 < t < 1 for t in thresholds):
        raise ValueError(f"IoU thresholds must lie in (0, 1), got {thresholds}")
    det_by_cls: dict[str, list[Detection]] = defaultdict(list)
    gt_by_cls: dict[str, list[GroundTruth]] = defaultdict(list)
    for d in dets:
        det_by_cls[d.cls].append(d)
    for g in gts:
        gt_by_cls[g.cls].append(g)
    ap_fn = voc07_ap if style is MetricStyle.VOC07 else all_point_ap

    classes: dict[str, ClassResult] = {}
    for cls in sorted(set(det_by_cls) | set(gt_by_cls)):
        cdets, cgts = det_by_cls.get(cls, []), gt_by_cls.get(cls, [])
        npos = sum(1 for g in cgts if not g.difficult)
        scores, flags = _match_class(cdets, cgts, thresholds, ignore_difficult_hits)
        curves = []
        for thr, (tp, fp) in zip(thresholds, flags):
            counted = (tp + fp) > 0
            ctp = np.cumsum(tp[counted])
            cfp = np.cumsum(fp[counted])
            recall = ctp / npos if npos else np.zeros_like(ctp)
            precision = ctp / np.maximum(ctp + cfp, np.finfo(np.float64).eps)
            ap = ap_fn(recall, precision) if npos else 0.0
            curves.append(ClassCurve(thr, scores[counted], precision, recall, tp[counted], ap))
        classes[cls] = ClassResult(cls, npos, len(cdets), curves, float(np.mean([c.ap for c in curves])))

    scored = [r for r in classes.values() if r.num_gt > 0]
    mAP = float(np.mean([r.ap for r in scored])) if scored else 0.0
    extra = {}
    for name, thr in (("AP50", 0.5), ("AP75", 0.75)):
        vals = [r.ap_at(thr) for r in scored]
        if scored and all(v is not None for v in vals):
            extra[name] = float(np.mean(vals))
    return EvalReport(style, thresholds, classes, mAP, extra)
