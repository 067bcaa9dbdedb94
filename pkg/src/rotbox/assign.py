"""Anchor generation and label assignment.

Three strategies are provided:

* :func:`max_iou_assign` thresholds each anchor's best rotated IoU.
* :func:`atss_assign` picks the nearest anchors per pyramid level and keeps
  those whose IoU clears the candidates' mean + std and whose center falls
  inside the ground truth.
* :func:`ts4_assign` chains the two: ATSS on the preset horizontal anchors,
  a refinement step that turns them into rotated anchors, then a stricter
  Max-IoU on the refined anchors.

Labels are stored as integers: a ground-truth index for positives,
:data:`NEGATIVE` or :data:`IGNORE` otherwise.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, NamedTuple, Sequence

import numpy as np

from .coding import encode_array, refine_anchors
from .kernels import iou_matrix
from .obb import AngleMode, OrientedBox, array_to_boxes, boxes_to_array, canonicalize_array, contains_points

NEGATIVE = -1
IGNORE = -2

DEFAULT_LEVELS = ((8, 32), (16, 64), (32, 128), (64, 256), (128, 512))
BASELINE_ANGLES = (0.0, math.pi / 6, math.pi / 3)


@dataclass(frozen=True)
class AnchorGridSpec:
    """Pyramid levels as ``(stride, anchor_size)`` pairs plus preset angles."""

    levels: tuple[tuple[float, float], ...] = DEFAULT_LEVELS
    angles: tuple[float, ...] = (0.0,)

    def __post_init__(self):
        levels = tuple((float(s), float(z)) for s, z in self.levels)
        if not levels:
            raise ValueError("at least one pyramid level is required")
        sizes = [z for _, z in levels]
        if any(b <= a for a, b in zip(sizes, sizes[1:])):
            raise ValueError(f"anchor sizes must strictly increase with level, got {sizes}")
        if any(s <= 0 or z <= 0 for s, z in levels):
            raise ValueError("strides and sizes must be positive")
        if not self.angles:
            raise ValueError("angle set must not be empty")
        object.__setattr__(self, "levels", levels)
        object.__setattr__(self, "angles", tuple(float(a) for a in self.angles))


@dataclass(frozen=True)
class AssignerConfig:
    pos_iou: float = 0.5
    neg_iou: float = 0.4
    topk: int = 9
    # each gt claims its best anchor even below pos_iou
    force_best_match: bool = True

    def __post_init__(self):
        if not 0.0 <= self.neg_iou <= self.pos_iou <= 1.0:
            raise ValueError(f"need 0 <= neg_iou <= pos_iou <= 1, got ({self.pos_iou}, {self.neg_iou})")
        if self.topk < 1:
            raise ValueError("topk must be >= 1")


STAGE1_MAX_IOU = AssignerConfig(0.5, 0.4)
STAGE2_MAX_IOU = AssignerConfig(0.6, 0.5)


@dataclass
class AnchorSet:
    boxes: np.ndarray  # (N, 5)
    levels: np.ndarray  # (N,) pyramid level index

    def __len__(self):
        return len(self.boxes)

    def to_boxes(self) -> list[OrientedBox]:
        return array_to_boxes(self.boxes)


@dataclass
class AssignmentResult:
    labels: np.ndarray  # gt index, NEGATIVE or IGNORE
    max_iou: np.ndarray  # IoU with the assigned gt (best gt for non-positives)
    num_gts: int = 0

    def __post_init__(self):
        self.labels = np.asarray(self.labels, dtype=np.int64)
        self.max_iou = np.asarray(self.max_iou, dtype=np.float64)
        bad = (self.labels >= self.num_gts) | (self.labels < IGNORE)
        if bad.any():
            raise ValueError("labels reference a missing ground truth")

    def __len__(self):
        return len(self.labels)

    @property
    def positive(self) -> np.ndarray:
        return self.labels >= 0

    @property
    def negative(self) -> np.ndarray:
        return self.labels == NEGATIVE

    @property
    def ignored(self) -> np.ndarray:
        return self.labels == IGNORE

    @property
    def num_positive(self) -> int:
        return int(self.positive.sum())

    def mean_positive_iou(self) -> float:
        pos = self.positive
        return float(self.max_iou[pos].mean()) if pos.any() else 0.0


def generate_anchors(spec: AnchorGridSpec, image_w: int, image_h: int) -> AnchorSet:
    """One anchor per (level, cell, angle), level-major then row, column, angle."""
    if image_w <= 0 or image_h <= 0:
        raise ValueError("image dimensions must be positive")
    blocks, levels = [], []
    angles = np.asarray(spec.angles)
    for lvl, (stride, size) in enumerate(spec.levels):
        nx, ny = math.ceil(image_w / stride), math.ceil(image_h / stride)
        cy, cx, th = np.meshgrid((np.arange(ny) + 0.5) * stride, (np.arange(nx) + 0.5) * stride,
                                 angles, indexing="ij")
        block = np.column_stack([
            cx.ravel(), cy.ravel(), np.full(cx.size, size), np.full(cx.size, size), th.ravel(),
        ])
        blocks.append(canonicalize_array(block))
        levels.append(np.full(cx.size, lvl, dtype=np.int64))
    return AnchorSet(np.concatenate(blocks), np.concatenate(levels))


def _empty_result(n: int, num_gts: int = 0) -> AssignmentResult:
    return AssignmentResult(np.full(n, NEGATIVE), np.zeros(n), num_gts)


def max_iou_assign(anchors, gts, cfg: AssignerConfig = STAGE1_MAX_IOU) -> AssignmentResult:
    anchors = boxes_to_array(anchors.boxes if isinstance(anchors, AnchorSet) else anchors)
    gts = boxes_to_array(gts)
    if len(gts) == 0 or len(anchors) == 0:
        return _empty_result(len(anchors), len(gts))
    ious = iou_matrix(anchors, gts)
    best_gt = ious.argmax(axis=1)
    best = ious[np.arange(len(anchors)), best_gt]
    labels = np.full(len(anchors), IGNORE, dtype=np.int64)
    labels[best < cfg.neg_iou] = NEGATIVE
    pos = best >= cfg.pos_iou
    labels[pos] = best_gt[pos]
    matched = best.copy()
    if cfg.force_best_match:
        # argmax picks the lowest index among ties
        best_anchor = ious.argmax(axis=0)
        claim = {}
        for g, a in enumerate(best_anchor):
            v = ious[a, g]
            if v <= 0:
                continue
            if a not in claim or v > claim[a][1]:
                claim[a] = (g, v)
        for a, (g, v) in claim.items():
            if labels[a] < 0:
                labels[a] = g
                matched[a] = v
    return AssignmentResult(labels, matched, len(gts))


def _topk_nearest(dist: np.ndarray, k: int) -> np.ndarray:
    order = np.argsort(dist, kind="stable")
    return order[:k]


def atss_assign(anchors, level_of, gts, topk: int = 9) -> AssignmentResult:
    anchors = boxes_to_array(anchors.boxes if isinstance(anchors, AnchorSet) else anchors)
    level_of = np.asarray(level_of, dtype=np.int64)
    gts = boxes_to_array(gts)
    if len(level_of) != len(anchors):
        raise ValueError("level_of must give one level per anchor")
    if topk < 1:
        raise ValueError("topk must be >= 1")
    n = len(anchors)
    if len(gts) == 0 or n == 0:
        return _empty_result(n, len(gts))
    level_idx = [np.flatnonzero(level_of == lvl) for lvl in np.unique(level_of)]
    centers = anchors[:, :2]
    inside = contains_points(gts, centers)  # (G, N)
    pos_iou = np.full((len(gts), n), -1.0)
    for g, gt in enumerate(gts):
        cand = []
        for idx in level_idx:
            d = np.hypot(centers[idx, 0] - gt[0], centers[idx, 1] - gt[1])
            cand.append(idx[_topk_nearest(d, topk)])
        cand = np.concatenate(cand)
        ious = iou_matrix(anchors[cand], gt[None, :])[:, 0]
        thr = ious.mean() + ious.std()
        keep = (ious >= thr) & inside[g, cand]
        pos_iou[g, cand[keep]] = ious[keep]
    best_gt = pos_iou.argmax(axis=0)
    best = pos_iou[best_gt, np.arange(n)]
    labels = np.where(best >= 0, best_gt, NEGATIVE)
    matched = np.where(best >= 0, best, 0.0)
    if (labels == NEGATIVE).any():
        neg = labels == NEGATIVE
        matched[neg] = iou_matrix(anchors[neg], gts).max(axis=1)
    return AssignmentResult(labels, matched, len(gts))


Refiner = Callable[[np.ndarray, AssignmentResult, np.ndarray], np.ndarray]


class TS4Result(NamedTuple):
    stage1: AssignmentResult
    refined: np.ndarray
    stage2: AssignmentResult


def ts4_assign(anchors, level_of, gts, stage1_topk: int = 9,
               stage2_cfg: AssignerConfig = STAGE2_MAX_IOU, refiner: Refiner | None = None,
               mode: AngleMode = AngleMode.DETECTION) -> TS4Result:
    """ATSS on preset anchors, refinement, then strict Max-IoU on refined anchors.

    ``refiner(anchors, stage1, gts)`` returns per-anchor offsets; ``None``
    means zero offsets.
    """
    anchors = boxes_to_array(anchors.boxes if isinstance(anchors, AnchorSet) else anchors)
    gts = boxes_to_array(gts)
    stage1 = atss_assign(anchors, level_of, gts, stage1_topk)
    if refiner is None:
        offsets = np.zeros_like(anchors)
    else:
        offsets = np.asarray(refiner(anchors, stage1, gts), dtype=np.float64)
    refined = refine_anchors(anchors, offsets, mode)
    stage2 = max_iou_assign(refined, gts, stage2_cfg)
    return TS4Result(stage1, refined, stage2)


def exact_refiner(anchors, stage1: AssignmentResult, gts) -> np.ndarray:
    """Offsets that move every positive anchor exactly onto its ground truth."""
    return synthetic_refiner(anchors, stage1, gts, noise_scale=0.0)


def synthetic_refiner(anchors, stage1: AssignmentResult, gts, noise_scale: float = 0.1,
                      seed: int = 0, mode: AngleMode = AngleMode.DETECTION) -> np.ndarray:
    """Stand-in for a learned first-stage regressor.

    Positives get their exact regression targets plus Gaussian noise of
    ``noise_scale`` per component (pi/8 per unit on the angle); all other
    anchors get zero offsets.
    """
    if noise_scale < 0:
        raise ValueError("noise_scale must be >= 0")
    anchors = boxes_to_array(anchors)
    gts = boxes_to_array(gts)
    offsets = np.zeros_like(anchors)
    pos = np.flatnonzero(stage1.positive)
    if len(pos) == 0:
        return offsets
    offsets[pos] = encode_array(gts[stage1.labels[pos]], anchors[pos], mode)
    if noise_scale > 0:
        rng = np.random.default_rng(seed)
        noise = rng.normal(0.0, noise_scale, size=(len(pos), 5))
        noise[:, 4] *= math.pi / 8
        offsets[pos] += noise
    return offsets


def make_synthetic_refiner(noise_scale: float = 0.1, seed: int = 0,
                           mode: AngleMode = AngleMode.DETECTION) -> Refiner:
    def refiner(anchors, stage1, gts):
        return synthetic_refiner(anchors, stage1, gts, noise_scale, seed, mode)
    return refiner


IOU_BINS = np.linspace(0.0, 1.0, 11)


@dataclass
class AssignmentStats:
    num_anchors: int
    num_positive: int
    num_negative: int
    num_ignore: int
    per_gt_positives: list[int]
    iou_hist: list[int]
    mean_positive_iou: float
    bins: list[float] = field(default_factory=lambda: IOU_BINS.tolist())

    @property
    def num_gts(self) -> int:
        return len(self.per_gt_positives)

    @property
    def gts_without_positive(self) -> int:
        return sum(1 for c in self.per_gt_positives if c == 0)


def assignment_stats(result: AssignmentResult, gts: Sequence | np.ndarray | None = None,
                     bins: np.ndarray = IOU_BINS) -> AssignmentStats:
    n_gts = result.num_gts if gts is None else len(boxes_to_array(gts))
    pos = result.positive
    per_gt = np.bincount(result.labels[pos], minlength=n_gts)[:n_gts] if n_gts else np.zeros(0, int)
    hist, _ = np.histogram(result.max_iou[pos], bins=bins)
    return AssignmentStats(
        num_anchors=len(result),
        num_positive=int(pos.sum()),
        num_negative=int(result.negative.sum()),
        num_ignore=int(result.ignored.sum()),
        per_gt_positives=[int(c) for c in per_gt],
        iou_hist=[int(c) for c in hist],
        mean_positive_iou=result.mean_positive_iou(),
        bins=[float(b) for b in bins],
    )
