"""Two-stage detection loss: focal classification plus smooth-L1 regression.

Analytic derivatives of the two scalar losses are included so they can be
checked against central differences with :func:`finite_diff_check`.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

PROB_EPS = 1e-7


@dataclass(frozen=True)
class LossConfig:
    lam: float = 1.0
    focal_alpha: float = 0.25
    focal_gamma: float = 2.0
    smooth_l1_beta: float = 1.0

    def __post_init__(self):
        if self.lam <= 0:
            raise ValueError("lambda must be > 0")
        if self.focal_gamma < 0:
            raise ValueError("focal_gamma must be >= 0")
        if not 0 < self.focal_alpha <= 1:
            raise ValueError("focal_alpha must be in (0, 1]")
        if self.smooth_l1_beta <= 0:
            raise ValueError("smooth_l1_beta must be > 0")


@dataclass
class StageBatch:
    """Per-anchor predictions and targets for one refinement stage.

    ``pred_offsets``/``target_offsets`` are ``(N, 5)``; rows with label 0 are
    never read.  ``n_cls`` and ``n_reg`` default to the anchor count and the
    positive count.
    """

    probs: np.ndarray
    labels: np.ndarray
    pred_offsets: np.ndarray
    target_offsets: np.ndarray
    n_cls: int | None = None
    n_reg: int | None = None

    def __post_init__(self):
        self.probs = np.asarray(self.probs, dtype=np.float64).ravel()
        self.labels = np.asarray(self.labels, dtype=np.int64).ravel()
        n = len(self.probs)
        self.pred_offsets = np.asarray(self.pred_offsets, dtype=np.float64).reshape(n, 5)
        self.target_offsets = np.asarray(self.target_offsets, dtype=np.float64).reshape(n, 5)
        if len(self.labels) != n:
            raise ValueError("probs and labels differ in length")
        if not np.isin(self.labels, (0, 1)).all():
            raise ValueError("labels must be 0 or 1")
        if self.n_cls is None:
            self.n_cls = n
        if self.n_reg is None:
            self.n_reg = int(self.labels.sum())
        if not self.n_cls >= self.n_reg >= 0:
            raise ValueError(f"need n_cls >= n_reg >= 0, got {self.n_cls}, {self.n_reg}")


def focal_loss(p, label, alpha: float = 0.25, gamma: float = 2.0):
    """Binary focal loss; works elementwise on arrays."""
    p = np.clip(np.asarray(p, dtype=np.float64), PROB_EPS, 1 - PROB_EPS)
    label = np.asarray(label)
    pos = -alpha * (1 - p) ** gamma * np.log(p)
    neg = -(1 - alpha) * p**gamma * np.log1p(-p)
    out = np.where(label == 1, pos, neg)
    return float(out) if out.ndim == 0 else out


def focal_loss_grad(p, label, alpha: float = 0.25, gamma: float = 2.0):
    """d(focal_loss)/dp."""
    p = np.clip(np.asarray(p, dtype=np.float64), PROB_EPS, 1 - PROB_EPS)
    label = np.asarray(label)
    q = 1 - p
    # gamma * x**(gamma - 1) is taken as 0 at gamma == 0
    dq = gamma * q ** (gamma - 1) if gamma else 0.0
    dp = gamma * p ** (gamma - 1) if gamma else 0.0
    pos = alpha * (dq * np.log(p) - q**gamma / p)
    neg = -(1 - alpha) * (dp * np.log(q) - p**gamma / q)
    out = np.where(label == 1, pos, neg)
    return float(out) if out.ndim == 0 else out


def smooth_l1(pred, target, beta: float = 1.0):
    d = np.abs(np.asarray(pred, dtype=np.float64) - np.asarray(target, dtype=np.float64))
    out = np.where(d < beta, 0.5 * d * d / beta, d - 0.5 * beta)
    return float(out) if out.ndim == 0 else out


def smooth_l1_grad(pred, target, beta: float = 1.0):
    """d(smooth_l1)/d(pred)."""
    d = np.asarray(pred, dtype=np.float64) - np.asarray(target, dtype=np.float64)
    out = np.where(np.abs(d) < beta, d / beta, np.sign(d))
    return float(out) if out.ndim == 0 else out


def stage_terms(batch: StageBatch, cfg: LossConfig = LossConfig()) -> tuple[float, float]:
    """Normalized (classification, regression) terms of one stage, before lambda."""
    if batch.n_cls == 0:
        raise ValueError("stage has no classification samples")
    cls = float(np.sum(focal_loss(batch.probs, batch.labels, cfg.focal_alpha, cfg.focal_gamma))) / batch.n_cls
    if batch.n_reg == 0:
        return cls, 0.0
    per_anchor = smooth_l1(batch.pred_offsets, batch.target_offsets, cfg.smooth_l1_beta).sum(axis=1)
    reg = float(np.sum(batch.labels * per_anchor)) / batch.n_reg
    return cls, reg


def total_loss(stage1: StageBatch, stage2: StageBatch, cfg: LossConfig = LossConfig()) -> float:
    """Sum over both stages of classification + lambda * regression."""
    c1, r1 = stage_terms(stage1, cfg)
    c2, r2 = stage_terms(stage2, cfg)
    return c1 + cfg.lam * r1 + c2 + cfg.lam * r2


def central_difference(f: Callable[[float], float], x: float, eps: float = 1e-6) -> float:
    return (f(x + eps) - f(x - eps)) / (2 * eps)


def finite_diff_check(loss: Callable[[float], float], grad: Callable[[float], float], points,
                      epsilon: float = 1e-6) -> float:
    """Largest relative error between ``grad`` and central differences of ``loss``."""
    if epsilon <= 0:
        raise ValueError("epsilon must be > 0")
    worst = 0.0
    for x in np.atleast_1d(np.asarray(points, dtype=np.float64)):
        num = central_difference(loss, float(x), epsilon)
        ana = float(grad(float(x)))
        scale = max(abs(num), abs(ana), 1e-12)
        worst = max(worst, abs(num - ana) / scale)
    return worst
