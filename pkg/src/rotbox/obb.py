"""Oriented box types, angle conventions and elementary rectangle geometry.

Coordinates follow raster conventions: x grows to the right, y grows
downward and ``theta`` is measured from the +x axis toward +y.  A positive
angle therefore looks clockwise on screen.  Mirrored (y-up) data only needs
its angles negated.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

MIN_SIDE = 1e-6
# absolute slack for point-in-box tests, in pixels
CONTAINS_EPS = 1e-9


class DegenerateBoxError(ValueError):
    """A box or polygon has (near) zero extent."""


class AngleMode(enum.Enum):
    DETECTION = "detection"
    ORIENTATION = "orientation"

    @property
    def bounds(self) -> tuple[float, float]:
        if self is AngleMode.DETECTION:
            return -math.pi / 4, 3 * math.pi / 4
        return 0.0, 2 * math.pi

    @property
    def period(self) -> float:
        return math.pi if self is AngleMode.DETECTION else 2 * math.pi


def normalize_angle(theta: float, mode: AngleMode = AngleMode.DETECTION) -> float:
    """Wrap ``theta`` into the half-open range of ``mode``.

    Detection angles are taken modulo pi into [-pi/4, 3pi/4); orientation
    angles modulo 2pi into [0, 2pi).  Values already in range are returned
    untouched, which makes the function exactly idempotent.
    """
    theta = float(theta)
    if not math.isfinite(theta):
        raise ValueError(f"angle must be finite, got {theta!r}")
    lo, hi = mode.bounds
    if lo <= theta < hi:
        return theta
    period = mode.period
    out = (theta - lo) % period + lo
    # float rounding can land exactly on the open end
    if out >= hi:
        out -= period
    if out < lo:
        out = lo
    return out


@dataclass(frozen=True)
class OrientedBox:
    """Rotated rectangle ``(cx, cy, w, h, theta)`` with ``w`` the long side.

    Construction canonicalizes: when ``w < h`` the sides are swapped and the
    angle advanced by pi/2, then the angle is wrapped into the range of
    ``mode``.  ``theta`` is the direction of the ``w`` side.
    """

    cx: float
    cy: float
    w: float
    h: float
    theta: float = 0.0
    mode: AngleMode = field(default=AngleMode.DETECTION, repr=False)

    def __post_init__(self):
        vals = (self.cx, self.cy, self.w, self.h, self.theta)
        if not all(math.isfinite(float(v)) for v in vals):
            raise ValueError(f"box fields must be finite, got {vals}")
        cx, cy, w, h, theta = (float(v) for v in vals)
        if w < MIN_SIDE or h < MIN_SIDE:
            raise DegenerateBoxError(f"box sides must be >= {MIN_SIDE}, got w={w}, h={h}")
        if w < h:
            w, h = h, w
            theta += math.pi / 2
        theta = normalize_angle(theta, self.mode)
        for name, v in zip(("cx", "cy", "w", "h", "theta"), (cx, cy, w, h, theta)):
            object.__setattr__(self, name, v)

    @property
    def area(self) -> float:
        return self.w * self.h

    @property
    def center(self) -> tuple[float, float]:
        return self.cx, self.cy

    def as_tuple(self) -> tuple[float, float, float, float, float]:
        return self.cx, self.cy, self.w, self.h, self.theta

    def translate(self, dx: float, dy: float) -> "OrientedBox":
        return OrientedBox(self.cx + dx, self.cy + dy, self.w, self.h, self.theta, self.mode)

    def with_mode(self, mode: AngleMode) -> "OrientedBox":
        return OrientedBox(self.cx, self.cy, self.w, self.h, self.theta, mode)


@dataclass(frozen=True)
class QuadBox:
    """Four ``(x, y)`` vertices in annotation order."""

    vertices: tuple[tuple[float, float], ...]

    def __post_init__(self):
        verts = tuple((float(x), float(y)) for x, y in self.vertices)
        if len(verts) != 4:
            raise ValueError(f"a quad needs 4 vertices, got {len(verts)}")
        object.__setattr__(self, "vertices", verts)

    @classmethod
    def from_flat(cls, coords: Sequence[float]) -> "QuadBox":
        if len(coords) != 8:
            raise ValueError(f"expected 8 coordinates, got {len(coords)}")
        return cls(tuple((coords[i], coords[i + 1]) for i in range(0, 8, 2)))

    @property
    def signed_area(self) -> float:
        return polygon_signed_area(self.vertices)

    @property
    def area(self) -> float:
        return abs(self.signed_area)

    def canonical(self) -> "QuadBox":
        """Same quad with positive signed area (counterclockwise in x/y)."""
        if self.signed_area < 0:
            return QuadBox(self.vertices[::-1])
        return self

    def flat(self) -> list[float]:
        return [c for v in self.vertices for c in v]


def polygon_signed_area(points: Iterable[Sequence[float]]) -> float:
    pts = np.asarray(list(points), dtype=float)
    if len(pts) < 3:
        return 0.0
    x, y = pts[:, 0], pts[:, 1]
    return 0.5 * float(np.dot(x, np.roll(y, -1)) - np.dot(np.roll(x, -1), y))


def to_corners(box: OrientedBox) -> QuadBox:
    """Corners of ``box``; the first edge runs along ``w`` in direction theta."""
    c, s = math.cos(box.theta), math.sin(box.theta)
    hw, hh = box.w / 2, box.h / 2
    verts = []
    for u, v in ((-hw, -hh), (hw, -hh), (hw, hh), (-hw, hh)):
        verts.append((box.cx + u * c - v * s, box.cy + u * s + v * c))
    return QuadBox(tuple(verts))


def convex_hull(points: Iterable[Sequence[float]]) -> np.ndarray:
    """Andrew's monotone chain; returns hull vertices with positive orientation."""
    pts = sorted({(float(x), float(y)) for x, y in points})
    if len(pts) <= 2:
        return np.asarray(pts, dtype=float).reshape(-1, 2)

    def cross(o, a, b):
        return (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])

    lower: list = []
    for p in pts:
        while len(lower) >= 2 and cross(lower[-2], lower[-1], p) <= 0:
            lower.pop()
        lower.append(p)
    upper: list = []
    for p in reversed(pts):
        while len(upper) >= 2 and cross(upper[-2], upper[-1], p) <= 0:
            upper.pop()
        upper.append(p)
    return np.asarray(lower[:-1] + upper[:-1], dtype=float)


def min_area_rect(points: Iterable[Sequence[float]], mode: AngleMode = AngleMode.DETECTION) -> OrientedBox:
    """Minimum-area enclosing rectangle by rotating calipers over the hull.

    Only hull-edge directions need checking: an optimal rectangle always has
    one side flush with a hull edge.
    """
    hull = convex_hull(points)
    if len(hull) < 3 or abs(polygon_signed_area(hull)) < MIN_SIDE**2:
        raise DegenerateBoxError("point set has zero area")
    edges = np.roll(hull, -1, axis=0) - hull
    angles = np.arctan2(edges[:, 1], edges[:, 0])
    best = None
    for ang in angles:
        c, s = math.cos(ang), math.sin(ang)
        u = hull[:, 0] * c + hull[:, 1] * s
        v = -hull[:, 0] * s + hull[:, 1] * c
        du, dv = u.max() - u.min(), v.max() - v.min()
        area = du * dv
        if best is None or area < best[0]:
            best = (area, ang, u.min(), u.max(), v.min(), v.max())
    _, ang, u0, u1, v0, v1 = best
    c, s = math.cos(ang), math.sin(ang)
    mu, mv = (u0 + u1) / 2, (v0 + v1) / 2
    cx, cy = mu * c - mv * s, mu * s + mv * c
    return OrientedBox(cx, cy, u1 - u0, v1 - v0, ang, mode)


def _rectangle_fit(verts: np.ndarray, rel_tol: float = 1e-9):
    """Exact fit when ``verts`` (4x2) already form a rectangle, else None."""
    e = np.roll(verts, -1, axis=0) - verts
    lens = np.hypot(e[:, 0], e[:, 1])
    scale = lens.max()
    if lens.min() < MIN_SIDE:
        return None
    # opposite edges antiparallel and equal, adjacent edges orthogonal
    if np.abs(e[0] + e[2]).max() > rel_tol * scale or np.abs(e[1] + e[3]).max() > rel_tol * scale:
        return None
    if abs(float(np.dot(e[0], e[1]))) > rel_tol * scale * scale:
        return None
    cx, cy = verts.mean(axis=0)
    w = (lens[0] + lens[2]) / 2
    h = (lens[1] + lens[3]) / 2
    theta = math.atan2(e[0, 1], e[0, 0])
    if abs(w - h) <= rel_tol * scale:
        # squares: keep the first edge direction instead of flipping on rounding noise
        h = w
    return cx, cy, w, h, theta


def from_quad(quad: QuadBox | Sequence[Sequence[float]], mode: AngleMode = AngleMode.DETECTION) -> OrientedBox:
    """Oriented box for a four-point annotation.

    Exact rectangles are converted directly; anything else (hand-drawn
    quads) is replaced by its minimum-area enclosing rectangle.
    """
    if not isinstance(quad, QuadBox):
        quad = QuadBox(tuple(tuple(v) for v in quad))
    if quad.area < MIN_SIDE**2:
        raise DegenerateBoxError(f"quad has zero area: {quad.vertices}")
    quad = quad.canonical()
    verts = np.asarray(quad.vertices, dtype=float)
    fit = _rectangle_fit(verts)
    if fit is not None:
        return OrientedBox(*fit, mode=mode)
    return min_area_rect(verts, mode)


def contains_point(box: OrientedBox, p: Sequence[float]) -> bool:
    """True when ``p`` is inside ``box`` or on its boundary."""
    dx, dy = p[0] - box.cx, p[1] - box.cy
    c, s = math.cos(box.theta), math.sin(box.theta)
    u = dx * c + dy * s
    v = -dx * s + dy * c
    return abs(u) <= box.w / 2 + CONTAINS_EPS and abs(v) <= box.h / 2 + CONTAINS_EPS


def contains_points(boxes: np.ndarray, points: np.ndarray) -> np.ndarray:
    """Vectorized containment: ``boxes`` (M, 5), ``points`` (N, 2) -> bool (M, N)."""
    boxes = np.atleast_2d(np.asarray(boxes, dtype=float))
    points = np.atleast_2d(np.asarray(points, dtype=float))
    dx = points[None, :, 0] - boxes[:, None, 0]
    dy = points[None, :, 1] - boxes[:, None, 1]
    c = np.cos(boxes[:, 4])[:, None]
    s = np.sin(boxes[:, 4])[:, None]
    u = dx * c + dy * s
    v = -dx * s + dy * c
    return (np.abs(u) <= boxes[:, None, 2] / 2 + CONTAINS_EPS) & (np.abs(v) <= boxes[:, None, 3] / 2 + CONTAINS_EPS)


def boxes_to_array(boxes) -> np.ndarray:
    """Stack boxes into an ``(N, 5)`` float array; arrays pass through."""
    if isinstance(boxes, np.ndarray):
        arr = np.asarray(boxes, dtype=np.float64)
        return arr.reshape(-1, 5)
    if isinstance(boxes, OrientedBox):
        boxes = [boxes]
    rows = [b.as_tuple() if isinstance(b, OrientedBox) else tuple(b) for b in boxes]
    return np.asarray(rows, dtype=np.float64).reshape(-1, 5)


def array_to_boxes(arr: np.ndarray, mode: AngleMode = AngleMode.DETECTION) -> list[OrientedBox]:
    return [OrientedBox(*map(float, row), mode=mode) for row in np.asarray(arr).reshape(-1, 5)]


def canonicalize_array(arr: np.ndarray, mode: AngleMode = AngleMode.DETECTION) -> np.ndarray:
    """Vectorized version of the constructor's long-side and angle repair."""
    out = np.array(arr, dtype=np.float64).reshape(-1, 5)
    swap = out[:, 2] < out[:, 3]
    out[swap, 2], out[swap, 3] = out[swap, 3].copy(), out[swap, 2].copy()
    out[swap, 4] += np.pi / 2
    lo, hi = mode.bounds
    th = out[:, 4]
    outside = (th < lo) | (th >= hi)
    wrapped = np.mod(th[outside] - lo, mode.period) + lo
    wrapped[wrapped >= hi] -= mode.period
    th[outside] = np.maximum(wrapped, lo)
    return out
