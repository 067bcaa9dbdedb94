import math

import numpy as np
import pytest

from rotbox.obb import OrientedBox


def angle_diff(a, b, period=math.pi):
    """Distance between two angles on a circle of the given period."""
    d = (a - b) % period
    return min(d, period - d)


def random_box(rng, extent=100.0, min_side=1.0, max_side=50.0, square_margin=1e-3):
    while True:
        w, h = rng.uniform(min_side, max_side, 2)
        if abs(w - h) > square_margin * max(w, h):
            break
    return OrientedBox(rng.uniform(-extent, extent), rng.uniform(-extent, extent), w, h,
                       rng.uniform(-math.pi, math.pi))


def aabb_iou(a, b):
    """Closed-form IoU of two axis-aligned boxes given as (cx, cy, w, h)."""
    ax0, ax1 = a[0] - a[2] / 2, a[0] + a[2] / 2
    ay0, ay1 = a[1] - a[3] / 2, a[1] + a[3] / 2
    bx0, bx1 = b[0] - b[2] / 2, b[0] + b[2] / 2
    by0, by1 = b[1] - b[3] / 2, b[1] + b[3] / 2
    iw = max(0.0, min(ax1, bx1) - max(ax0, bx0))
    ih = max(0.0, min(ay1, by1) - max(ay0, by0))
    inter = iw * ih
    return inter / (a[2] * a[3] + b[2] * b[3] - inter)


def brute_force_nms(iou, order, thr):
    """Quadratic reference: walk boxes by score, keep if no kept box overlaps above thr."""
    kept = []
    for i in order:
        if all(iou[i, k] <= thr for k in kept):
            kept.append(int(i))
    return kept


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# -- acceptance summary: one line per criterion at the end of the run ----------

_acceptance: dict[int, tuple[str, str]] = {}


def pytest_runtest_logreport(report):
    if "test_acceptance.py::test_criterion_" not in report.nodeid:
        return
    name = report.nodeid.split("::test_criterion_")[1]
    num, _, title = name.partition("_")
    if report.when == "call" or report.outcome != "passed":
        prev = _acceptance.get(int(num), ("PASS", title))[0]
        outcome = "PASS" if report.outcome == "passed" and prev == "PASS" else "FAIL"
        _acceptance[int(num)] = (outcome, title)


def pytest_terminal_summary(terminalreporter):
    if not _acceptance:
        return
    terminalreporter.section("acceptance criteria")
    for num in sorted(_acceptance):
        outcome, title = _acceptance[num]
        terminalreporter.write_line(f"ACCEPTANCE {num:2d}: {outcome}  {title.replace('_', ' ')}")
