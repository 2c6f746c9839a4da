"""Berry localization with a sparse 17-sensor sliding template.

Instead of classifying every pixel, the detector slides a patch whose 17
sensor pixels (patch center, an inner ring at a quarter of the patch size,
and a boundary ring just inside the patch edge) are classified one berry /
background each. A placement counts as a hit when the center and the whole
inner ring vote berry; the boundary ring is recorded but carries no veto,
so a berry larger than the patch still registers. Search runs coarse to
fine over patch sizes and stops at the first size that produces a hit, then
four directional scans of the same template estimate a circular area of
interest around the berry.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence, Tuple

import numpy as np

from waxsep.classes import DET_BERRY, SCENE_NOWAX, SCENE_WAX
from waxsep.cnn import CnnModel, predict_batch
from waxsep.imaging import ChannelStack
from waxsep.pixels import normalize_coords
from waxsep._kernels import extract_crops

SEARCH_SCALES = (128, 64, 32, 16, 8, 4)
SENSOR_COUNT = 17
# center + inner ring; the sensors whose unanimous berry vote defines a hit
INTERIOR_SENSORS = 9


def _ring(radius: int) -> list:
    return [
        (int(round(radius * math.cos(k * math.pi / 4.0))), int(round(radius * math.sin(k * math.pi / 4.0))))
        for k in range(8)
    ]


@dataclass(frozen=True, eq=False)
class SensorTemplate:
    """Sensor-pixel offsets for one patch size, (dx, dy) relative to center."""

    patch_size: int
    offsets: np.ndarray

    @property
    def interior_offsets(self) -> np.ndarray:
        return self.offsets[:INTERIOR_SENSORS]

    @property
    def boundary_offsets(self) -> np.ndarray:
        return self.offsets[INTERIOR_SENSORS:]

    @property
    def inner_radius(self) -> int:
        return self.patch_size // 4

    @property
    def boundary_radius(self) -> int:
        return max(1, self.patch_size // 2 - 1)


def build_template(patch_size: int) -> SensorTemplate:
    """Center sensor plus two 8-sensor rings at 45 degree spacing.

    The inner ring sits at a quarter of the patch size, the boundary ring
    one pixel inside the patch edge. Offsets are rounded to integers; for
    the 4 px patch the rings collapse onto each other but all 17 slots are
    kept so vote bookkeeping never changes shape.
    """
    if patch_size < 4:
        raise ValueError(f"patch size {patch_size} below minimum 4")
    offsets = [(0, 0)]
    offsets += _ring(patch_size // 4)
    offsets += _ring(max(1, patch_size // 2 - 1))
    return SensorTemplate(patch_size=patch_size, offsets=np.array(offsets, dtype=np.int64))


@dataclass(frozen=True)
class TemplateHit:
    """One template placement with its 17 sensor votes (True = berry)."""

    x: int
    y: int
    scale: int
    votes: Tuple[bool, ...]

    def __post_init__(self):
        if len(self.votes) != SENSOR_COUNT:
            raise ValueError(f"expected {SENSOR_COUNT} votes, got {len(self.votes)}")

    @property
    def is_hit(self) -> bool:
        return all(self.votes[:INTERIOR_SENSORS])


@dataclass(frozen=True)
class AreaOfInterest:
    """Circular region around a detected berry, in pixel coordinates."""

    x: float
    y: float
    radius: float

    def __post_init__(self):
        if self.radius <= 0:
            raise ValueError("radius must be positive")

    def mask(self, width: int, height: int) -> np.ndarray:
        """Boolean (height, width) raster of the circle clipped to bounds."""
        yy, xx = np.ogrid[0:height, 0:width]
        return (xx - self.x) ** 2 + (yy - self.y) ** 2 <= self.radius**2

    def to_json_dict(self) -> dict:
        return {"x": self.x, "y": self.y, "radius": self.radius}


@dataclass
class SearchStats:
    """Instrumentation for one search: how much work the template did."""

    placements: int = 0
    scales_scanned: int = 0


class OracleClassifier:
    """Ground-truth berry votes, used to test the geometry in isolation."""

    def __init__(self, scene_labels: np.ndarray):
        labels = np.asarray(scene_labels)
        if labels.ndim != 2:
            raise ValueError("scene labels must be a 2-d class map")
        self._berry = (labels == SCENE_NOWAX) | (labels == SCENE_WAX)
        self.height, self.width = labels.shape
        self.evaluations = 0

    def is_berry(self, xs: np.ndarray, ys: np.ndarray) -> np.ndarray:
        self.evaluations += len(xs)
        return self._berry[ys, xs]


class CnnClassifier:
    """Berry votes from a trained detection model over a channel stack."""

    def __init__(self, model: CnnModel, stack: ChannelStack):
        if model.kind != "detection":
            raise ValueError(f"detector needs a detection model, got {model.kind!r}")
        self._tensor = stack.tensor()
        if model.input_channels != self._tensor.shape[2]:
            raise ValueError(
                f"model expects {model.input_channels} channels, stack has {self._tensor.shape[2]}"
            )
        self._model = model
        self.height, self.width = self._tensor.shape[:2]
        self.evaluations = 0

    def is_berry(self, xs: np.ndarray, ys: np.ndarray) -> np.ndarray:
        self.evaluations += len(xs)
        crops = extract_crops(self._tensor, np.asarray(xs, dtype=np.int64), np.asarray(ys, dtype=np.int64))
        coords = normalize_coords(xs, ys, self.width, self.height)
        labels, _ = predict_batch(self._model, crops, coords)
        return labels == DET_BERRY


def _votes_at(classifier, offsets: np.ndarray, x: int, y: int) -> np.ndarray:
    return classifier.is_berry(x + offsets[:, 0], y + offsets[:, 1])


def _sensors_in_bounds(classifier, offsets: np.ndarray, x: int, y: int) -> bool:
    xs = x + offsets[:, 0]
    ys = y + offsets[:, 1]
    return bool(
        (xs >= 0).all() and (ys >= 0).all() and (xs < classifier.width).all() and (ys < classifier.height).all()
    )


def template_vote(classifier, template: SensorTemplate, x: int, y: int) -> TemplateHit:
    """Classify all 17 sensors of one placement."""
    if not _sensors_in_bounds(classifier, template.offsets, x, y):
        raise ValueError(f"placement ({x}, {y}) puts sensors outside the image")
    votes = _votes_at(classifier, template.offsets, x, y)
    return TemplateHit(x=x, y=y, scale=template.patch_size, votes=tuple(bool(v) for v in votes))


def _placement_grid(template: SensorTemplate, width: int, height: int, stride: int):
    """Raster placements (top-left first) keeping every sensor in bounds."""
    dx = template.offsets[:, 0]
    dy = template.offsets[:, 1]
    x_lo, x_hi = int(-dx.min()), int(width - 1 - dx.max())
    y_lo, y_hi = int(-dy.min()), int(height - 1 - dy.max())
    if x_lo > x_hi or y_lo > y_hi:
        return np.empty(0, dtype=np.int64), np.empty(0, dtype=np.int64)
    xs = np.arange(x_lo, x_hi + 1, stride, dtype=np.int64)
    ys = np.arange(y_lo, y_hi + 1, stride, dtype=np.int64)
    gy, gx = np.meshgrid(ys, xs, indexing="ij")
    return gx.ravel(), gy.ravel()


def multiscale_search(
    classifier,
    scales: Sequence[int] = SEARCH_SCALES,
    stats: Optional[SearchStats] = None,
) -> Optional[TemplateHit]:
    """Coarse-to-fine template scan; first hit of the first hitting scale.

    Each scale rasters its template at a quarter-patch stride. Interior
    sensors are classified for every placement; the boundary ring is only
    evaluated for the winning placement, which keeps the per-image work
    below 17 classifications per placement.
    """
    for scale in scales:
        template = build_template(scale)
        stride = max(1, scale // 4)
        xs, ys = _placement_grid(template, classifier.width, classifier.height, stride)
        if len(xs) == 0:
            continue
        if stats is not None:
            stats.placements += len(xs)
            stats.scales_scanned += 1
        interior = template.interior_offsets
        sensor_x = xs[:, None] + interior[:, 0][None, :]
        sensor_y = ys[:, None] + interior[:, 1][None, :]
        votes = classifier.is_berry(sensor_x.ravel(), sensor_y.ravel()).reshape(len(xs), INTERIOR_SENSORS)
        hits = votes.all(axis=1)
        if not hits.any() and scale == 4:
            # at the smallest patch the rounded diagonal ring sensors sit at
            # sqrt(2), outside the nominal ring radius 1, so a berry of radius
            # barely 2 px can fail them while filling the nominal ring; accept
            # the sensors at the exact radius (center plus axis ring) instead
            hits = votes[:, [0, 1, 3, 5, 7]].all(axis=1)
        if not hits.any():
            continue
        first = int(np.argmax(hits))
        x, y = int(xs[first]), int(ys[first])
        boundary_votes = _votes_at(classifier, template.boundary_offsets, x, y)
        all_votes = tuple(bool(v) for v in votes[first]) + tuple(bool(v) for v in boundary_votes)
        return TemplateHit(x=x, y=y, scale=scale, votes=all_votes)
    return None


def _interior_passes(classifier, template: SensorTemplate, x: int, y: int) -> bool:
    if not _sensors_in_bounds(classifier, template.interior_offsets, x, y):
        return False
    return bool(_votes_at(classifier, template.interior_offsets, x, y).all())


def _directional_scan(classifier, template: SensorTemplate, x: int, y: int, dx: int, dy: int) -> Tuple[int, int]:
    """Last placement in direction (dx, dy) whose interior vote still passes.

    Walks at an eighth-patch stride first, then refines pixel by pixel, so
    the returned extent is exact for convex berry responses. The start
    placement is assumed to pass.
    """
    stride = max(1, template.patch_size // 8)
    while _interior_passes(classifier, template, x + dx * stride, y + dy * stride):
        x += dx * stride
        y += dy * stride
    while _interior_passes(classifier, template, x + dx, y + dy):
        x += dx
        y += dy
    return x, y


def _flood_aoi(classifier, x: int, y: int, scale: int) -> Optional[AreaOfInterest]:
    """Pixel-level fallback: measure the berry blob around a hit directly.

    Classifies every pixel in a window of two patch sizes around the hit
    and fits the circle to the connected berry component under the hit.
    Only used where the template stride cannot resolve the berry: the
    smallest patch, or a berry barely larger than the inner ring.
    """
    from waxsep._kernels import label_components

    half = 2 * scale
    x0, x1 = max(0, x - half), min(classifier.width - 1, x + half)
    y0, y1 = max(0, y - half), min(classifier.height - 1, y + half)
    gy, gx = np.meshgrid(np.arange(y0, y1 + 1), np.arange(x0, x1 + 1), indexing="ij")
    berry = classifier.is_berry(gx.ravel().astype(np.int64), gy.ravel().astype(np.int64))
    mask = np.ascontiguousarray(berry.reshape(gy.shape).astype(np.uint8))
    labels, _ = label_components(mask)
    component = labels[y - y0, x - x0]
    if component == 0:
        return None
    py, px = np.nonzero(labels == component)
    cx = float(px.mean() + x0)
    cy = float(py.mean() + y0)
    distance = np.sqrt((px + x0 - cx) ** 2 + (py + y0 - cy) ** 2).max()
    return AreaOfInterest(x=cx, y=cy, radius=float(distance) + 0.5)


def estimate_aoi(classifier, hit: TemplateHit) -> AreaOfInterest:
    """Circular area of interest from four directional template scans.

    Two scan rounds: the first, from the hit placement, locates the berry
    center from chord midpoints; the second re-scans through that center so
    the measured chords are diameters. The radius adds a quarter patch for
    the sensor footprint plus one pixel for integer rounding. Berries the
    stride cannot resolve (smallest patch, or no scan able to move) are
    measured pixel by pixel instead.
    """
    template = build_template(hit.scale)
    x0, y0 = hit.x, hit.y
    if hit.scale <= 4:
        flood = _flood_aoi(classifier, x0, y0, hit.scale)
        if flood is not None:
            return flood

    xp = _directional_scan(classifier, template, x0, y0, 1, 0)
    xm = _directional_scan(classifier, template, x0, y0, -1, 0)
    yp = _directional_scan(classifier, template, x0, y0, 0, 1)
    ym = _directional_scan(classifier, template, x0, y0, 0, -1)
    cx = (xp[0] + xm[0]) // 2
    cy = (yp[1] + ym[1]) // 2
    if not _interior_passes(classifier, template, cx, cy):
        cx, cy = x0, y0

    xp = _directional_scan(classifier, template, cx, cy, 1, 0)
    xm = _directional_scan(classifier, template, cx, cy, -1, 0)
    yp = _directional_scan(classifier, template, cx, cy, 0, 1)
    ym = _directional_scan(classifier, template, cx, cy, 0, -1)
    fx = (xp[0] + xm[0]) / 2.0
    fy = (yp[1] + ym[1]) / 2.0
    spread = max(xp[0] - fx, fx - xm[0], yp[1] - fy, fy - ym[1])
    if spread <= 0:
        flood = _flood_aoi(classifier, cx, cy, hit.scale)
        if flood is not None:
            return flood
        reach = float(np.hypot(template.interior_offsets[:, 0], template.interior_offsets[:, 1]).max())
        return AreaOfInterest(x=float(cx), y=float(cy), radius=math.ceil(reach) + 1.0)
    return AreaOfInterest(x=fx, y=fy, radius=spread + hit.scale // 4 + 1.0)
