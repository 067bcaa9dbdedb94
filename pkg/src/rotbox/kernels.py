"""Rotated IoU, IoU matrices and rotated NMS.

The hot loops are compiled with numba and release the GIL, so
:func:`iou_matrix` can split rows across a thread pool.  Every entry is an
independent computation, which keeps results bit-identical for any thread
count.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor

import numpy as np
from numba import njit

from .obb import OrientedBox, boxes_to_array, contains_points, polygon_signed_area

_MAX_VERTS = 16


@njit(cache=True, nogil=True)
def _corners(b, out):
    c = math.cos(b[4])
    s = math.sin(b[4])
    hw = b[2] * 0.5
    hh = b[3] * 0.5
    us = (-hw, hw, hw, -hw)
    vs = (-hh, -hh, hh, hh)
    for k in range(4):
        out[k, 0] = b[0] + us[k] * c - vs[k] * s
        out[k, 1] = b[1] + us[k] * s + vs[k] * c


@njit(cache=True, nogil=True)
def _separated(p, q):
    # separating-axis test over the edge normals of both rectangles;
    # touching boxes count as separated
    for poly_i in range(2):
        a = p if poly_i == 0 else q
        for k in range(2):
            ex = a[k + 1, 0] - a[k, 0]
            ey = a[k + 1, 1] - a[k, 1]
            nx = -ey
            ny = ex
            pmin = 1e300
            pmax = -1e300
            qmin = 1e300
            qmax = -1e300
            for j in range(4):
                dp = p[j, 0] * nx + p[j, 1] * ny
                dq = q[j, 0] * nx + q[j, 1] * ny
                pmin = min(pmin, dp)
                pmax = max(pmax, dp)
                qmin = min(qmin, dq)
                qmax = max(qmax, dq)
            if pmax <= qmin or qmax <= pmin:
                return True
    return False


@njit(cache=True, nogil=True)
def _clip_polygon(subj, n, clip, m, buf_a, buf_b):
    """Sutherland-Hodgman: clip ``subj[:n]`` by convex ``clip[:m]`` (positive
    orientation).  Returns (vertex array, count)."""
    cur = buf_a
    nxt = buf_b
    for i in range(n):
        cur[i, 0] = subj[i, 0]
        cur[i, 1] = subj[i, 1]
    count = n
    for e in range(m):
        if count == 0:
            break
        ax = clip[e, 0]
        ay = clip[e, 1]
        bx = clip[(e + 1) % m, 0]
        by = clip[(e + 1) % m, 1]
        ex = bx - ax
        ey = by - ay
        out = 0
        for i in range(count):
            sx = cur[i, 0]
            sy = cur[i, 1]
            tx = cur[(i + 1) % count, 0]
            ty = cur[(i + 1) % count, 1]
            ds = ex * (sy - ay) - ey * (sx - ax)
            dt = ex * (ty - ay) - ey * (tx - ax)
            if ds >= 0.0:
                if out < _MAX_VERTS:
                    nxt[out, 0] = sx
                    nxt[out, 1] = sy
                    out += 1
                if dt < 0.0:
                    r = ds / (ds - dt)
                    if out < _MAX_VERTS:
                        nxt[out, 0] = sx + r * (tx - sx)
                        nxt[out, 1] = sy + r * (ty - sy)
                        out += 1
            elif dt >= 0.0:
                r = ds / (ds - dt)
                if out < _MAX_VERTS:
                    nxt[out, 0] = sx + r * (tx - sx)
                    nxt[out, 1] = sy + r * (ty - sy)
                    out += 1
        tmp = cur
        cur = nxt
        nxt = tmp
        count = out
    return cur, count


@njit(cache=True, nogil=True)
def _shoelace(poly, n):
    acc = 0.0
    for i in range(n):
        j = (i + 1) % n
        acc += poly[i, 0] * poly[j, 1] - poly[j, 0] * poly[i, 1]
    return 0.5 * acc


@njit(cache=True, nogil=True)
def _ordered_first(a, b):
    # lexicographic order on the 5 fields fixes which box is the subject,
    # making the result exactly symmetric
    for k in range(5):
        if a[k] < b[k]:
            return True
        if a[k] > b[k]:
            return False
    return True


@njit(cache=True, nogil=True)
def _iou_pair(a, b, p, q, buf_a, buf_b):
    if a[0] == b[0] and a[1] == b[1] and a[2] == b[2] and a[3] == b[3] and a[4] == b[4]:
        return 1.0
    if not _ordered_first(a, b):
        t = a
        a = b
        b = t
    _corners(a, p)
    _corners(b, q)
    if _separated(p, q):
        return 0.0
    poly, n = _clip_polygon(p, 4, q, 4, buf_a, buf_b)
    if n < 3:
        return 0.0
    inter = _shoelace(poly, n)
    if inter <= 0.0:
        return 0.0
    union = a[2] * a[3] + b[2] * b[3] - inter
    iou = inter / union
    if iou > 1.0:
        return 1.0
    return iou


@njit(cache=True, nogil=True)
def _aabb(boxes):
    n = boxes.shape[0]
    out = np.empty((n, 4))
    for i in range(n):
        c = abs(math.cos(boxes[i, 4]))
        s = abs(math.sin(boxes[i, 4]))
        ex = 0.5 * (boxes[i, 2] * c + boxes[i, 3] * s)
        ey = 0.5 * (boxes[i, 2] * s + boxes[i, 3] * c)
        out[i, 0] = boxes[i, 0] - ex
        out[i, 1] = boxes[i, 1] - ey
        out[i, 2] = boxes[i, 0] + ex
        out[i, 3] = boxes[i, 1] + ey
    return out


@njit(cache=True, nogil=True)
def _iou_rows(a, b, hull_a, hull_b, use_filter, row0, row1, out):
    p = np.empty((4, 2))
    q = np.empty((4, 2))
    buf_a = np.empty((_MAX_VERTS, 2))
    buf_b = np.empty((_MAX_VERTS, 2))
    for i in range(row0, row1):
        for j in range(b.shape[0]):
            if use_filter and (
                hull_a[i, 2] < hull_b[j, 0]
                or hull_b[j, 2] < hull_a[i, 0]
                or hull_a[i, 3] < hull_b[j, 1]
                or hull_b[j, 3] < hull_a[i, 1]
            ):
                out[i, j] = 0.0
            else:
                out[i, j] = _iou_pair(a[i], b[j], p, q, buf_a, buf_b)


@njit(cache=True, nogil=True)
def _nms_sorted(boxes, order, hulls, thr):
    n = order.shape[0]
    suppressed = np.zeros(n, dtype=np.bool_)
    keep = np.empty(n, dtype=np.int64)
    nkeep = 0
    p = np.empty((4, 2))
    q = np.empty((4, 2))
    buf_a = np.empty((_MAX_VERTS, 2))
    buf_b = np.empty((_MAX_VERTS, 2))
    for ii in range(n):
        if suppressed[ii]:
            continue
        i = order[ii]
        keep[nkeep] = i
        nkeep += 1
        for jj in range(ii + 1, n):
            if suppressed[jj]:
                continue
            j = order[jj]
            if (
                hulls[i, 2] < hulls[j, 0]
                or hulls[j, 2] < hulls[i, 0]
                or hulls[i, 3] < hulls[j, 1]
                or hulls[j, 3] < hulls[i, 1]
            ):
                continue
            if _iou_pair(boxes[i], boxes[j], p, q, buf_a, buf_b) > thr:
                suppressed[jj] = True
    return keep[:nkeep]


def clip_convex(subject, clip) -> np.ndarray:
    """Intersection of two convex polygons given as ``(N, 2)`` vertex arrays.

    Both polygons are reoriented to positive signed area first.  An empty
    intersection comes back as a ``(0, 2)`` array.
    """
    subj = np.asarray(subject, dtype=np.float64).reshape(-1, 2)
    clp = np.asarray(clip, dtype=np.float64).reshape(-1, 2)
    if len(subj) < 3 or len(clp) < 3:
        return np.empty((0, 2))
    if polygon_signed_area(subj) < 0:
        subj = subj[::-1]
    if polygon_signed_area(clp) < 0:
        clp = clp[::-1]
    cap = len(subj) + len(clp)
    if cap > _MAX_VERTS:
        return _clip_python(subj, clp)
    poly, n = _clip_polygon(
        np.ascontiguousarray(subj), len(subj), np.ascontiguousarray(clp), len(clp),
        np.empty((_MAX_VERTS, 2)), np.empty((_MAX_VERTS, 2)),
    )
    if n < 3:
        return np.empty((0, 2))
    return poly[:n].copy()


def _clip_python(subj: np.ndarray, clp: np.ndarray) -> np.ndarray:
    out = [tuple(v) for v in subj]
    m = len(clp)
    for e in range(m):
        if not out:
            break
        (ax, ay), (bx, by) = clp[e], clp[(e + 1) % m]
        ex, ey = bx - ax, by - ay
        src, out = out, []
        for i, (sx, sy) in enumerate(src):
            tx, ty = src[(i + 1) % len(src)]
            ds = ex * (sy - ay) - ey * (sx - ax)
            dt = ex * (ty - ay) - ey * (tx - ax)
            if ds >= 0:
                out.append((sx, sy))
            if (ds >= 0) != (dt >= 0):
                r = ds / (ds - dt)
                out.append((sx + r * (tx - sx), sy + r * (ty - sy)))
    if len(out) < 3:
        return np.empty((0, 2))
    return np.asarray(out)


def rotated_iou(a: OrientedBox, b: OrientedBox) -> float:
    """Exact IoU of two rotated rectangles (polygon clipping + shoelace)."""
    aa = boxes_to_array(a)[0]
    bb = boxes_to_array(b)[0]
    return float(_iou_pair(aa, bb, np.empty((4, 2)), np.empty((4, 2)),
                           np.empty((_MAX_VERTS, 2)), np.empty((_MAX_VERTS, 2))))


def default_threads() -> int:
    return max(1, min(8, os.cpu_count() or 1))


def iou_matrix(a, b, *, prefilter: bool = True, threads: int | None = None) -> np.ndarray:
    """Dense ``len(a) x len(b)`` rotated IoU matrix.

    ``a`` and ``b`` may be lists of :class:`OrientedBox` or ``(N, 5)``
    arrays.  With ``prefilter`` pairs whose axis-aligned hulls are disjoint
    are set to 0 without clipping, which is the value the exact path gives
    them anyway.
    """
    a = np.ascontiguousarray(boxes_to_array(a))
    b = np.ascontiguousarray(boxes_to_array(b))
    if len(a) == 0 or len(b) == 0:
        raise ValueError("iou_matrix needs non-empty box lists")
    out = np.empty((len(a), len(b)))
    hull_a, hull_b = _aabb(a), _aabb(b)
    threads = default_threads() if threads is None else max(1, int(threads))
    if threads == 1 or len(a) < 2 * threads:
        _iou_rows(a, b, hull_a, hull_b, prefilter, 0, len(a), out)
        return out
    bounds = np.linspace(0, len(a), threads + 1).astype(int)
    with ThreadPoolExecutor(max_workers=threads) as pool:
        jobs = [
            pool.submit(_iou_rows, a, b, hull_a, hull_b, prefilter, int(r0), int(r1), out)
            for r0, r1 in zip(bounds[:-1], bounds[1:])
        ]
        for job in jobs:
            job.result()
    return out


def score_order(scores) -> np.ndarray:
    """Indices by descending score, ties broken by lower index."""
    scores = np.asarray(scores, dtype=np.float64)
    return np.lexsort((np.arange(len(scores)), -scores))


def rotated_nms(boxes, scores, iou_threshold: float) -> list[int]:
    """Greedy rotated NMS.

    A box survives when its IoU with every higher-scoring survivor is at most
    ``iou_threshold``.  Returns kept indices by descending score.
    """
    arr = np.ascontiguousarray(boxes_to_array(boxes))
    scores = np.asarray(scores, dtype=np.float64).ravel()
    if len(arr) != len(scores):
        raise ValueError(f"got {len(arr)} boxes but {len(scores)} scores")
    if not 0.0 <= iou_threshold <= 1.0:
        raise ValueError(f"iou_threshold must be in [0, 1], got {iou_threshold}")
    if len(arr) == 0:
        return []
    keep = _nms_sorted(arr, score_order(scores).astype(np.int64), _aabb(arr), float(iou_threshold))
    return [int(i) for i in keep]


def monte_carlo_iou(a: OrientedBox, b: OrientedBox, samples: int = 200_000, seed: int = 0,
                    chunk: int = 1 << 17) -> float:
    """IoU estimate from uniform samples over the union's axis-aligned hull.

    Independent of the clipping path: only point-in-box tests are used.
    """
    if samples < 1:
        raise ValueError("samples must be >= 1")
    boxes = boxes_to_array([a, b])
    hull = _aabb(boxes)
    x0, y0 = hull[:, 0].min(), hull[:, 1].min()
    x1, y1 = hull[:, 2].max(), hull[:, 3].max()
    rng = np.random.default_rng(seed)
    inter = union = 0
    left = samples
    while left > 0:
        n = min(chunk, left)
        left -= n
        pts = np.column_stack((rng.uniform(x0, x1, n), rng.uniform(y0, y1, n)))
        inside = contains_points(boxes, pts)
        inter += int(np.count_nonzero(inside[0] & inside[1]))
        union += int(np.count_nonzero(inside[0] | inside[1]))
    return inter / union if union else 0.0
