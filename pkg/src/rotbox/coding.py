"""Offset coding between anchors and oriented boxes.

Centers are scaled by the anchor sides, sizes are log-ratios and the angle
residual is wrapped by a multiple of pi into [-pi/4, 3pi/4).  In
orientation mode the residual is wrapped to [-pi, pi) and divided by 2pi.
Decoding a prediction into a box is the same operation that turns stage-one
horizontal anchors into rotated anchors, so :func:`refine_anchors` is just a
batched :func:`decode`.
"""

from __future__ import annotations

import math
from typing import NamedTuple

import numpy as np

from .obb import AngleMode, OrientedBox, boxes_to_array, canonicalize_array, normalize_angle

# tw/th are clamped to this range before exponentiation
SIZE_CLAMP = 4.0


class BoxOffsets(NamedTuple):
    tx: float = 0.0
    ty: float = 0.0
    tw: float = 0.0
    th: float = 0.0
    ttheta: float = 0.0


def _wrap_half_turn(x):
    """Wrap into [-pi, pi)."""
    return np.mod(np.asarray(x) + np.pi, 2 * np.pi) - np.pi


def _detection_residual(x):
    lo = -np.pi / 4
    x = np.asarray(x, dtype=np.float64)
    out = x.copy()
    outside = (x < lo) | (x >= 3 * np.pi / 4)
    wrapped = np.mod(x[outside] - lo, np.pi) + lo
    wrapped[wrapped >= 3 * np.pi / 4] -= np.pi
    out[outside] = np.maximum(wrapped, lo)
    return out


def encode_array(targets, anchors, mode: AngleMode = AngleMode.DETECTION) -> np.ndarray:
    """Row-wise offsets ``(N, 5)`` taking each anchor onto its target."""
    t = boxes_to_array(targets)
    a = boxes_to_array(anchors)
    if t.shape != a.shape:
        raise ValueError(f"targets {t.shape} and anchors {a.shape} differ in shape")
    if (t[:, 2:4] <= 0).any() or (a[:, 2:4] <= 0).any():
        raise ValueError("box sides must be positive")
    out = np.empty_like(t)
    out[:, 0] = (t[:, 0] - a[:, 0]) / a[:, 2]
    out[:, 1] = (t[:, 1] - a[:, 1]) / a[:, 3]
    out[:, 2] = np.log(t[:, 2] / a[:, 2])
    out[:, 3] = np.log(t[:, 3] / a[:, 3])
    dtheta = t[:, 4] - a[:, 4]
    if mode is AngleMode.DETECTION:
        out[:, 4] = _detection_residual(dtheta)
    else:
        out[:, 4] = _wrap_half_turn(dtheta) / (2 * np.pi)
    return out


def decode_array(anchors, offsets, mode: AngleMode = AngleMode.DETECTION):
    """Apply offsets to anchors; returns ``(boxes (N, 5), clamped (N,) bool)``."""
    a = boxes_to_array(anchors)
    d = np.asarray(offsets, dtype=np.float64).reshape(-1, 5)
    if a.shape != d.shape:
        raise ValueError(f"anchors {a.shape} and offsets {d.shape} differ in shape")
    if not np.isfinite(d).all():
        raise ValueError("offsets must be finite")
    sizes = np.clip(d[:, 2:4], -SIZE_CLAMP, SIZE_CLAMP)
    clamped = (sizes != d[:, 2:4]).any(axis=1)
    out = np.empty_like(a)
    out[:, 0] = a[:, 0] + d[:, 0] * a[:, 2]
    out[:, 1] = a[:, 1] + d[:, 1] * a[:, 3]
    out[:, 2] = a[:, 2] * np.exp(sizes[:, 0])
    out[:, 3] = a[:, 3] * np.exp(sizes[:, 1])
    if mode is AngleMode.DETECTION:
        out[:, 4] = a[:, 4] + d[:, 4]
    else:
        out[:, 4] = a[:, 4] + d[:, 4] * (2 * np.pi)
    return canonicalize_array(out, mode), clamped


def encode(target: OrientedBox, anchor: OrientedBox, mode: AngleMode = AngleMode.DETECTION) -> BoxOffsets:
    if target.w <= 0 or target.h <= 0 or anchor.w <= 0 or anchor.h <= 0:
        raise ValueError("box sides must be positive")
    dtheta = target.theta - anchor.theta
    if mode is AngleMode.DETECTION:
        ttheta = normalize_angle(dtheta, AngleMode.DETECTION)
    else:
        ttheta = float(_wrap_half_turn(dtheta)) / (2 * math.pi)
    return BoxOffsets(
        (target.cx - anchor.cx) / anchor.w,
        (target.cy - anchor.cy) / anchor.h,
        math.log(target.w / anchor.w),
        math.log(target.h / anchor.h),
        ttheta,
    )


def decode(anchor: OrientedBox, offsets, mode: AngleMode = AngleMode.DETECTION, *,
           return_clamped: bool = False):
    """Box predicted by ``offsets`` relative to ``anchor``.

    Size offsets outside [-4, 4] are clamped; pass ``return_clamped=True`` to
    also get a flag telling whether that happened.
    """
    tx, ty, tw, th, ttheta = (float(v) for v in offsets)
    if not all(math.isfinite(v) for v in (tx, ty, tw, th, ttheta)):
        raise ValueError(f"offsets must be finite, got {offsets}")
    cw = min(max(tw, -SIZE_CLAMP), SIZE_CLAMP)
    ch = min(max(th, -SIZE_CLAMP), SIZE_CLAMP)
    if mode is AngleMode.DETECTION:
        theta = anchor.theta + ttheta
    else:
        theta = anchor.theta + ttheta * 2 * math.pi
    box = OrientedBox(
        anchor.cx + tx * anchor.w,
        anchor.cy + ty * anchor.h,
        anchor.w * math.exp(cw),
        anchor.h * math.exp(ch),
        theta,
        mode,
    )
    if return_clamped:
        return box, (cw != tw or ch != th)
    return box


def refine_anchors(anchors, offsets, mode: AngleMode = AngleMode.DETECTION):
    """Decode per-anchor offsets into refined (generally rotated) anchors.

    Lists of boxes give back a list of :class:`OrientedBox`; ``(N, 5)``
    arrays give back an array.
    """
    as_array = isinstance(anchors, np.ndarray)
    n_anchors = len(anchors)
    offs = np.asarray(offsets, dtype=np.float64).reshape(-1, 5)
    if n_anchors != len(offs):
        raise ValueError(f"got {n_anchors} anchors but {len(offs)} offsets")
    if n_anchors == 0:
        return np.empty((0, 5)) if as_array else []
    if as_array:
        return decode_array(anchors, offs, mode)[0]
    return [decode(a, o, mode) for a, o in zip(anchors, offs)]
