import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rotbox.obb import (AngleMode, DegenerateBoxError, OrientedBox, QuadBox, canonicalize_array, contains_point,
                        contains_points, from_quad, min_area_rect, normalize_angle, polygon_signed_area, to_corners)

from conftest import angle_diff, random_box

DET, ORI = AngleMode.DETECTION, AngleMode.ORIENTATION
finite_angles = st.floats(-1e4, 1e4, allow_nan=False)


@pytest.mark.parametrize("theta, mode, expected", [
    (3 * math.pi / 4, DET, -math.pi / 4),
    (0.0, DET, 0.0),
    (-math.pi / 2, ORI, 3 * math.pi / 2),
    (math.pi, DET, 0.0),
    (-math.pi / 4, DET, -math.pi / 4),
    (2 * math.pi, ORI, 0.0),
])
def test_normalize_angle_examples(theta, mode, expected):
    assert normalize_angle(theta, mode) == pytest.approx(expected, abs=1e-12)


@pytest.mark.parametrize("bad", [math.inf, -math.inf, math.nan])
def test_normalize_angle_rejects_non_finite(bad):
    with pytest.raises(ValueError):
        normalize_angle(bad)


@given(finite_angles, st.sampled_from([DET, ORI]))
def test_normalize_angle_range_congruence_idempotence(theta, mode):
    lo, hi = mode.bounds
    out = normalize_angle(theta, mode)
    assert lo <= out < hi
    k = (theta - out) / mode.period
    assert abs(k - round(k)) < 1e-9 * max(1.0, abs(theta))
    assert normalize_angle(out, mode) == out


def test_constructor_repairs_short_long_sides():
    b = OrientedBox(1, 2, 1, 3, 0.2)
    assert (b.w, b.h) == (3, 1)
    assert b.theta == pytest.approx(0.2 + math.pi / 2)
    assert b.area == 3


def test_constructor_rejects_degenerate_and_non_finite():
    with pytest.raises(DegenerateBoxError):
        OrientedBox(0, 0, 1, 1e-9)
    with pytest.raises(ValueError):
        OrientedBox(0, 0, math.nan, 1)


def test_rotating_by_pi_gives_identical_canonical_box(rng):
    for _ in range(200):
        b = random_box(rng)
        flipped = OrientedBox(b.cx, b.cy, b.w, b.h, b.theta + math.pi)
        assert flipped.w == b.w and flipped.h == b.h
        assert angle_diff(flipped.theta, b.theta) < 1e-12


def _as_set(quad):
    return sorted((round(x, 9) + 0.0, round(y, 9) + 0.0) for x, y in quad.vertices)


def test_to_corners_axis_aligned():
    q = to_corners(OrientedBox(0, 0, 2, 1, 0))
    assert q.vertices == ((-1, -0.5), (1, -0.5), (1, 0.5), (-1, 0.5))


def test_to_corners_quarter_turn():
    q = to_corners(OrientedBox(0, 0, 2, 1, math.pi / 2))
    assert _as_set(q) == sorted([(0.5, -1), (0.5, 1), (-0.5, 1), (-0.5, -1)])


def test_to_corners_first_edge_and_centroid(rng):
    for _ in range(100):
        b = random_box(rng)
        v = np.asarray(to_corners(b).vertices)
        assert np.allclose(v.mean(axis=0), b.center, atol=1e-9)
        e = v[1] - v[0]
        assert math.hypot(*e) == pytest.approx(b.w, rel=1e-12)
        assert angle_diff(math.atan2(e[1], e[0]), b.theta, 2 * math.pi) < 1e-9
        assert polygon_signed_area(v) == pytest.approx(b.area, rel=1e-9)
    v = np.asarray(to_corners(OrientedBox(5, 5, 4, 2, math.pi / 4)).vertices)
    assert np.allclose(v.mean(axis=0), (5, 5), atol=1e-12)


def test_from_quad_axis_aligned():
    b = from_quad(QuadBox.from_flat([0, 0, 4, 0, 4, 2, 0, 2]))
    assert b.as_tuple() == pytest.approx((2, 1, 4, 2, 0), abs=1e-12)


def test_from_quad_accepts_either_winding():
    cw = [(0, 0), (0, 2), (4, 2), (4, 0)]
    assert from_quad(cw).as_tuple() == pytest.approx((2, 1, 4, 2, 0), abs=1e-12)


@pytest.mark.parametrize("mode", [DET, ORI])
def test_corner_round_trip(rng, mode):
    for _ in range(500):
        b = random_box(rng).with_mode(mode)
        r = from_quad(to_corners(b), mode)
        assert (r.cx, r.cy, r.w, r.h) == pytest.approx((b.cx, b.cy, b.w, b.h), abs=1e-6)
        assert angle_diff(r.theta, b.theta, mode.period) < 1e-6


def test_from_quad_rejects_zero_area():
    with pytest.raises(DegenerateBoxError):
        from_quad([(0, 0), (1, 1), (2, 2), (3, 3)])


def _sweep_min_area(points, steps=20_000):
    """Independent oracle: dense sweep of rectangle orientations over [0, pi/2),
    then a second sweep around the best coarse angle."""
    pts = np.asarray(points)

    def areas(ang):
        c, s = np.cos(ang)[:, None], np.sin(ang)[:, None]
        u = pts[None, :, 0] * c + pts[None, :, 1] * s
        v = -pts[None, :, 0] * s + pts[None, :, 1] * c
        return (u.max(1) - u.min(1)) * (v.max(1) - v.min(1))

    step = (math.pi / 2) / steps
    coarse = np.arange(steps) * step
    best = coarse[np.argmin(areas(coarse))]
    fine = np.linspace(best - 2 * step, best + 2 * step, steps)
    return min(areas(coarse).min(), areas(fine).min())


def test_perturbed_rectangle_uses_min_area_rect(rng):
    for _ in range(20):
        b = random_box(rng, min_side=5)
        v = np.asarray(to_corners(b).vertices) + rng.uniform(-1e-3, 1e-3, (4, 2))
        fit = from_quad(v)
        assert fit.area >= abs(polygon_signed_area(v)) - 1e-9
        oracle = _sweep_min_area(v)
        # calipers are exact; the sweep can only overestimate
        assert fit.area <= oracle + 1e-9
        assert fit.area == pytest.approx(oracle, rel=1e-6)
        assert np.all(contains_points(np.asarray([fit.as_tuple()]), v))


def test_min_area_rect_of_polygon_matches_sweep(rng):
    for _ in range(10):
        pts = rng.normal(size=(12, 2)) * [30, 5]
        fit = min_area_rect(pts)
        assert fit.area == pytest.approx(_sweep_min_area(pts), rel=1e-5)
        assert contains_points(np.asarray([fit.as_tuple()]), pts).all()


def _half_plane_inside(box, p):
    """Oracle: p is inside iff it is on the non-negative side of all four edges."""
    v = to_corners(box).vertices
    for i in range(4):
        (ax, ay), (bx, by) = v[i], v[(i + 1) % 4]
        if (bx - ax) * (p[1] - ay) - (by - ay) * (p[0] - ax) < 0:
            return False
    return True


def test_contains_point_examples():
    b = OrientedBox(3, 4, 10, 2, 0.7)
    assert contains_point(b, b.center)
    far = (b.cx + b.w * math.cos(b.theta), b.cy + b.w * math.sin(b.theta))
    assert not contains_point(b, far)


def test_contains_point_matches_half_plane_oracle(rng):
    boxes = [random_box(rng, extent=10, max_side=20) for _ in range(10)]
    for b in boxes:
        pts = rng.uniform(-30, 30, size=(1000, 2))
        got = [contains_point(b, p) for p in pts]
        expected = [_half_plane_inside(b, p) for p in pts]
        assert got == expected
        assert contains_points(np.asarray([b.as_tuple()]), pts)[0].tolist() == expected


@settings(max_examples=200)
@given(st.floats(-1e3, 1e3), st.floats(-1e3, 1e3), st.floats(0.01, 100), st.floats(0.01, 100),
       st.floats(-10, 10), st.sampled_from([DET, ORI]))
def test_box_invariants(cx, cy, w, h, theta, mode):
    b = OrientedBox(cx, cy, w, h, theta, mode)
    lo, hi = mode.bounds
    assert b.w >= b.h > 0
    assert lo <= b.theta < hi
    assert b.area == b.w * b.h
    assert contains_point(b, b.center)


def test_canonicalize_array_matches_constructor(rng):
    raw = np.column_stack([rng.normal(size=(300, 2)), rng.uniform(0.1, 5, (300, 2)), rng.uniform(-20, 20, 300)])
    for mode in (DET, ORI):
        arr = canonicalize_array(raw, mode)
        ref = np.asarray([OrientedBox(*row, mode=mode).as_tuple() for row in raw])
        assert np.array_equal(arr, ref)
