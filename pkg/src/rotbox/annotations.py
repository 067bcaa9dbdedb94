"""Annotation files: four-point and theta formats, tiling, dataset statistics.

Theta format (version 1), one instance per line::

    # rotbox-theta v1 image_id=<id> mode=<detection|orientation>
    cx cy w h theta class difficult [heading]

Angles are radians written with 6 decimals.  ``heading`` is only present in
orientation-mode files whose box had to be long-side canonicalized away
from the annotated head direction.

Four-point format, one instance per line::

    x1 y1 x2 y2 x3 y3 x4 y4 class [difficult]

DOTA ``imagesource:`` / ``gsd:`` preamble lines and ``#`` comments are
skipped by both parsers.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field, replace
from typing import Iterable, Sequence

import numpy as np

from .kernels import clip_convex
from .obb import (AngleMode, DegenerateBoxError, OrientedBox, QuadBox, from_quad, min_area_rect,
                  polygon_signed_area, to_corners)

FORMAT_TAG = "rotbox-theta v1"
_PREAMBLE = ("imagesource:", "gsd:")


class AnnotationParseError(ValueError):
    """One or more malformed annotation lines; ``errors`` holds (line, message)."""

    def __init__(self, errors: list[tuple[int, str]], source: str = ""):
        self.errors = errors
        self.source = source
        where = f"{source}: " if source else ""
        lines = "; ".join(f"line {n}: {msg}" for n, msg in errors[:5])
        more = f" (+{len(errors) - 5} more)" if len(errors) > 5 else ""
        super().__init__(f"{where}{lines}{more}")


@dataclass(frozen=True)
class Instance:
    box: OrientedBox
    cls: str
    difficult: bool = False
    quad: QuadBox | None = None
    # annotated head direction in [0, 2pi); orientation-mode side channel
    heading: float | None = None


@dataclass
class AnnotationRecord:
    image_id: str
    instances: list[Instance] = field(default_factory=list)
    mode: AngleMode = AngleMode.DETECTION

    def __len__(self):
        return len(self.instances)

    def boxes(self) -> np.ndarray:
        return np.asarray([i.box.as_tuple() for i in self.instances], dtype=np.float64).reshape(-1, 5)


def _data_lines(text: str):
    for n, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#") or line.startswith(_PREAMBLE):
            continue
        yield n, line.split()


def _parse_difficult(tok: str) -> bool:
    if tok not in ("0", "1"):
        raise ValueError(f"difficult flag must be 0 or 1, got {tok!r}")
    return tok == "1"


def _header_fields(text: str) -> dict[str, str]:
    for raw in text.splitlines():
        line = raw.strip()
        if line.startswith("#") and FORMAT_TAG in line:
            return dict(tok.split("=", 1) for tok in line.split() if "=" in tok)
    return {}


def parse_quad_file(text: str, image_id: str = "image", mode: AngleMode = AngleMode.DETECTION,
                    source: str = "") -> AnnotationRecord:
    instances, errors = [], []
    for n, toks in _data_lines(text):
        try:
            if len(toks) < 9:
                raise ValueError(f"expected 8 coordinates and a class, got {len(toks)} fields")
            coords = [float(t) for t in toks[:8]]
            if not all(math.isfinite(c) for c in coords):
                raise ValueError("coordinates must be finite")
            cls = toks[8]
            difficult = _parse_difficult(toks[9]) if len(toks) > 9 else False
            if len(toks) > 10:
                raise ValueError(f"unexpected trailing fields {toks[10:]}")
            quad = QuadBox.from_flat(coords)
            box = from_quad(quad, mode)
        except (ValueError, DegenerateBoxError) as exc:
            errors.append((n, str(exc)))
            continue
        instances.append(Instance(box, cls, difficult, quad=quad))
    if errors:
        raise AnnotationParseError(errors, source)
    return AnnotationRecord(image_id, instances, mode)


def parse_theta_file(text: str, mode: AngleMode | None = None, image_id: str | None = None,
                     degrees: bool = False, source: str = "") -> AnnotationRecord:
    """Parse a theta-format file.

    ``mode`` and ``image_id`` default to the values in the header line, then
    to detection mode and ``"image"``.
    """
    header = _header_fields(text)
    if mode is None:
        mode = AngleMode(header.get("mode", AngleMode.DETECTION.value))
    if image_id is None:
        image_id = header.get("image_id", "image")
    full_turn = 2 * math.pi
    instances, errors = [], []
    for n, toks in _data_lines(text):
        try:
            if len(toks) < 6:
                raise ValueError(f"expected 'cx cy w h theta class [difficult]', got {len(toks)} fields")
            cx, cy, w, h, theta = (float(t) for t in toks[:5])
            if not all(math.isfinite(v) for v in (cx, cy, w, h, theta)):
                raise ValueError("box fields must be finite")
            if w <= 0 or h <= 0:
                raise ValueError(f"box sides must be positive, got w={w}, h={h}")
            if degrees:
                theta = math.radians(theta)
            cls = toks[5]
            difficult = _parse_difficult(toks[6]) if len(toks) > 6 else False
            heading = float(toks[7]) if len(toks) > 7 else None
            if len(toks) > 8:
                raise ValueError(f"unexpected trailing fields {toks[8:]}")
            if abs(theta) > full_turn + 1e-6:
                warnings.warn(f"{source or 'annotation'} line {n}: theta {theta} is beyond a full turn; wrapped",
                              stacklevel=2)
            box = OrientedBox(cx, cy, w, h, theta, mode)
        except (ValueError, DegenerateBoxError) as exc:
            errors.append((n, str(exc)))
            continue
        if mode is AngleMode.ORIENTATION:
            raw = heading if heading is not None else theta
            heading = raw % full_turn
            if abs(heading - box.theta) < 1e-12:
                heading = box.theta
        else:
            heading = None
        instances.append(Instance(box, cls, difficult, heading=heading))
    if errors:
        raise AnnotationParseError(errors, source)
    return AnnotationRecord(image_id, instances, mode)


def _fmt(v: float) -> str:
    s = f"{v:.6f}"
    return "0.000000" if s == "-0.000000" else s


def write_canonical(record: AnnotationRecord) -> str:
    """Deterministic theta-format text for ``record``."""
    lines = [f"# {FORMAT_TAG} image_id={record.image_id} mode={record.mode.value}"]
    for inst in record.instances:
        b = inst.box
        fields = [_fmt(b.cx), _fmt(b.cy), _fmt(b.w), _fmt(b.h), _fmt(b.theta), inst.cls, "1" if inst.difficult else "0"]
        if inst.heading is not None and abs(inst.heading - b.theta) > 1e-12:
            fields.append(_fmt(inst.heading))
        lines.append(" ".join(fields))
    return "\n".join(lines) + "\n"


write_theta_file = write_canonical


def write_quad_file(record: AnnotationRecord) -> str:
    lines = []
    for inst in record.instances:
        quad = inst.quad if inst.quad is not None else to_corners(inst.box)
        coords = " ".join(_fmt(c) for c in quad.flat())
        lines.append(f"{coords} {inst.cls} {1 if inst.difficult else 0}")
    return "\n".join(lines) + ("\n" if lines else "")


def sniff_format(text: str) -> str:
    """'quad' or 'theta', judged by the number of leading numeric fields."""
    if FORMAT_TAG in text:
        return "theta"
    for _, toks in _data_lines(text):
        numeric = 0
        for t in toks:
            try:
                float(t)
            except ValueError:
                break
            numeric += 1
        return "quad" if numeric >= 8 else "theta"
    return "theta"


def parse_annotation(text: str, fmt: str = "auto", image_id: str | None = None,
                     mode: AngleMode | None = None, degrees: bool = False, source: str = "") -> AnnotationRecord:
    if fmt == "auto":
        fmt = sniff_format(text)
    if fmt == "quad":
        return parse_quad_file(text, image_id or "image", mode or AngleMode.DETECTION, source)
    if fmt == "theta":
        return parse_theta_file(text, mode, image_id, degrees, source)
    raise ValueError(f"unknown annotation format {fmt!r}")


# -- tiling -----------------------------------------------------------------


@dataclass(frozen=True)
class TilingSpec:
    patch_w: int = 1024
    patch_h: int = 1024
    stride: int = 824
    min_area_kept: float = 0.5

    def __post_init__(self):
        if self.patch_w <= 0 or self.patch_h <= 0:
            raise ValueError("patch dimensions must be positive")
        if not 0 < self.stride <= min(self.patch_w, self.patch_h):
            raise ValueError(f"stride must be in (0, patch size], got {self.stride}")
        if not 0.0 <= self.min_area_kept <= 1.0:
            raise ValueError("min_area_kept must be in [0, 1]")


def patch_origins(length: int, patch: int, stride: int) -> list[int]:
    """Grid positions along one axis; the last patch is pulled back inside."""
    if length <= patch:
        return [0]
    n = math.ceil((length - patch) / stride) + 1
    return sorted({min(i * stride, length - patch) for i in range(n)})


def tile_annotations(record: AnnotationRecord, image_w: int, image_h: int,
                     spec: TilingSpec = TilingSpec()) -> list[tuple[tuple[int, int], AnnotationRecord]]:
    """Split a large-scene record into patch records in patch coordinates.

    An instance goes into a patch when at least ``min_area_kept`` of its area
    lies inside; partially covered instances are refit to the minimum-area
    rectangle of the clipped polygon.
    """
    pw, ph = min(spec.patch_w, image_w), min(spec.patch_h, image_h)
    corners = [np.asarray(to_corners(inst.box).vertices) for inst in record.instances]
    out = []
    for y0 in patch_origins(image_h, spec.patch_h, spec.stride):
        for x0 in patch_origins(image_w, spec.patch_w, spec.stride):
            window = np.array([[x0, y0], [x0 + pw, y0], [x0 + pw, y0 + ph], [x0, y0 + ph]], dtype=float)
            kept = []
            for inst, poly in zip(record.instances, corners):
                inside = ((poly[:, 0] >= x0) & (poly[:, 0] <= x0 + pw)
                          & (poly[:, 1] >= y0) & (poly[:, 1] <= y0 + ph)).all()
                if inside:
                    box = inst.box.translate(-x0, -y0)
                else:
                    clipped = clip_convex(poly, window)
                    if len(clipped) < 3:
                        continue
                    area = abs(polygon_signed_area(clipped))
                    if area <= 0 or area < spec.min_area_kept * inst.box.area:
                        continue
                    try:
                        box = min_area_rect(clipped - [x0, y0], record.mode)
                    except DegenerateBoxError:
                        continue
                quad = None
                if inside and inst.quad is not None:
                    quad = QuadBox(tuple((x - x0, y - y0) for x, y in inst.quad.vertices))
                kept.append(replace(inst, box=box, quad=quad))
            pid = f"{record.image_id}__{x0}_{y0}"
            out.append(((x0, y0), AnnotationRecord(pid, kept, record.mode)))
    return out


# -- dataset statistics -------------------------------------------------------


@dataclass
class DatasetStats:
    num_images: int
    num_instances: int
    per_image_counts: list[int]
    mean_per_image: float
    class_counts: dict[str, int]
    width_hist: tuple[list[int], list[float]]
    height_hist: tuple[list[int], list[float]]
    angle_hist: tuple[list[int], list[float]]
    aspect_hist: tuple[list[int], list[float]]


def _hist(values: np.ndarray, edges: np.ndarray) -> tuple[list[int], list[float]]:
    counts, _ = np.histogram(values, bins=edges)
    return [int(c) for c in counts], [float(e) for e in edges]


def dataset_stats(records: Iterable[AnnotationRecord], size_bins: int = 20, angle_bins: int = 18) -> DatasetStats:
    records = list(records)
    counts = [len(r) for r in records]
    boxes = np.concatenate([r.boxes() for r in records]) if records else np.zeros((0, 5))
    classes: dict[str, int] = {}
    for r in records:
        for inst in r.instances:
            classes[inst.cls] = classes.get(inst.cls, 0) + 1
    mode = records[0].mode if records else AngleMode.DETECTION
    lo, hi = mode.bounds
    top = float(max(boxes[:, 2].max(), 1.0)) if len(boxes) else 1.0
    size_edges = np.linspace(0.0, top, size_bins + 1)
    aspect = boxes[:, 2] / boxes[:, 3] if len(boxes) else np.zeros(0)
    aspect_edges = np.linspace(1.0, float(max(aspect.max(), 2.0)) if len(aspect) else 2.0, size_bins + 1)
    return DatasetStats(
        num_images=len(records),
        num_instances=int(sum(counts)),
        per_image_counts=counts,
        mean_per_image=float(np.mean(counts)) if counts else 0.0,
        class_counts=dict(sorted(classes.items())),
        width_hist=_hist(boxes[:, 2], size_edges),
        height_hist=_hist(boxes[:, 3], size_edges),
        angle_hist=_hist(boxes[:, 4], np.linspace(lo, hi, angle_bins + 1)),
        aspect_hist=_hist(aspect, aspect_edges),
    )
