"""Wax segmentation inside a detected area of interest.

Every pixel inside the circle is classified wax / wax-free / other with the
3-class model; pixels outside the circle keep a sentinel label and never
enter any count. The wax proportion divides wax by wax plus wax-free, so
pixels depicting background, stalk or lignified spots influence nothing.
Coherent regions are 4-connected components per class, largest first.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np

from waxsep.classes import (
    SEG_NOWAX,
    SEG_OTHER,
    SEG_OUTSIDE,
    SEG_WAX,
    SEGMENTATION_CLASS_NAMES,
)
from waxsep.cnn import CnnModel, predict_batch
from waxsep.detect import AreaOfInterest
from waxsep.imaging import ChannelStack, RasterImage
from waxsep._kernels import extract_crops, label_components

# Overlay legend: wax, wax-free, other as pure green / red / blue.
OVERLAY_COLORS = {
    SEG_WAX: (0.0, 1.0, 0.0),
    SEG_NOWAX: (1.0, 0.0, 0.0),
    SEG_OTHER: (0.0, 0.0, 1.0),
}


@dataclass(frozen=True, eq=False)
class LabelMap:
    """Per-pixel class labels for one capture, sentinel outside the circle."""

    labels: np.ndarray
    aoi: Optional[AreaOfInterest] = None

    def __post_init__(self):
        labels = np.asarray(self.labels, dtype=np.uint8)
        if labels.ndim != 2:
            raise ValueError("label map must be 2-d")
        if labels.max(initial=0) > SEG_OUTSIDE:
            raise ValueError("label map contains unknown class ids")
        object.__setattr__(self, "labels", labels)

    @property
    def width(self) -> int:
        return self.labels.shape[1]

    @property
    def height(self) -> int:
        return self.labels.shape[0]

    def class_count(self, class_id: int) -> int:
        return int((self.labels == class_id).sum())


@dataclass(frozen=True)
class Region:
    """One 4-connected component of a single class."""

    class_id: int
    size: int
    centroid: Tuple[float, float]
    bbox: Tuple[int, int, int, int]  # x0, y0, x1, y1 inclusive

    @property
    def class_name(self) -> str:
        return SEGMENTATION_CLASS_NAMES[self.class_id]

    def to_json_dict(self) -> dict:
        return {
            "class": self.class_name,
            "size": self.size,
            "centroid": [self.centroid[0], self.centroid[1]],
            "bbox": list(self.bbox),
        }


@dataclass(frozen=True)
class WaxReport:
    """Wax quantification for one berry."""

    berry_id: str
    wax_pixels: int
    nowax_pixels: int
    other_pixels: int
    wax_proportion: float
    regions: Tuple[Region, ...]

    def to_json_dict(self) -> dict:
        return {
            "berry_id": self.berry_id,
            "wax_pixels": self.wax_pixels,
            "nowax_pixels": self.nowax_pixels,
            "other_pixels": self.other_pixels,
            "wax_proportion": self.wax_proportion,
            "regions": [r.to_json_dict() for r in self.regions],
        }


def classify_aoi(model: CnnModel, stack: ChannelStack, aoi: AreaOfInterest) -> LabelMap:
    """Classify every pixel inside the circle; everything else is outside."""
    if model.kind != "segmentation" or model.num_classes != 3:
        raise ValueError("wax segmentation needs a 3-class segmentation model")
    tensor = stack.tensor()
    if model.input_channels != tensor.shape[2]:
        raise ValueError(
            f"model expects {model.input_channels} channels, stack has {tensor.shape[2]}"
        )
    height, width = tensor.shape[:2]
    inside = aoi.mask(width, height)
    labels = np.full((height, width), SEG_OUTSIDE, dtype=np.uint8)
    ys, xs = np.nonzero(inside)
    if len(xs):
        crops = extract_crops(tensor, xs.astype(np.int64), ys.astype(np.int64))
        predicted, _ = predict_batch(model, crops, None)
        labels[ys, xs] = predicted.astype(np.uint8)
    return LabelMap(labels=labels, aoi=aoi)


def extract_regions(label_map: LabelMap) -> Tuple[Region, ...]:
    """4-connected components of the wax and wax-free classes.

    Largest region first; equal sizes keep the scanline order of their
    first pixel, wax before wax-free on exact ties.
    """
    found = []
    width = label_map.width
    for class_id in (SEG_WAX, SEG_NOWAX):
        mask = np.ascontiguousarray((label_map.labels == class_id).astype(np.uint8))
        components, count = label_components(mask)
        for comp in range(1, count + 1):
            ys, xs = np.nonzero(components == comp)
            first = int(ys[0]) * width + int(xs[0])
            found.append(
                (
                    -len(xs),
                    first,
                    class_id,
                    Region(
                        class_id=class_id,
                        size=int(len(xs)),
                        centroid=(float(xs.mean()), float(ys.mean())),
                        bbox=(int(xs.min()), int(ys.min()), int(xs.max()), int(ys.max())),
                    ),
                )
            )
    found.sort(key=lambda item: (item[0], item[1], item[2]))
    return tuple(item[3] for item in found)


def quantify_wax(label_map: LabelMap, berry_id: str = "") -> WaxReport:
    """Wax proportion and coherent regions for one classified berry."""
    wax = label_map.class_count(SEG_WAX)
    nowax = label_map.class_count(SEG_NOWAX)
    other = label_map.class_count(SEG_OTHER)
    if wax + nowax == 0:
        raise ValueError("no berry-surface pixels in the label map; detection likely failed")
    return WaxReport(
        berry_id=berry_id,
        wax_pixels=wax,
        nowax_pixels=nowax,
        other_pixels=other,
        wax_proportion=wax / (wax + nowax),
        regions=extract_regions(label_map),
    )


def render_overlay(stack: ChannelStack, label_map: LabelMap) -> RasterImage:
    """Color-coded class overlay; pixels outside the circle show the image.

    The source for outside pixels is the first plane of the stack (the
    standard photograph for modes that carry one).
    """
    source = stack.planes[0]
    if (source.height, source.width) != (label_map.height, label_map.width):
        raise ValueError("overlay dimensions do not match the label map")
    out = source.pixels.copy()
    for class_id, color in OVERLAY_COLORS.items():
        out[label_map.labels == class_id] = color
    return RasterImage(pixels=out)
