"""Wax segmentation: label maps, regions, quantification, overlay."""

import numpy as np
import pytest

from waxsep.classes import SEG_NOWAX, SEG_OTHER, SEG_OUTSIDE, SEG_WAX
from waxsep.detect import AreaOfInterest
from waxsep.imaging import ChannelStack, InputMode, RasterImage
from waxsep.segment import (
    OVERLAY_COLORS,
    LabelMap,
    classify_aoi,
    extract_regions,
    quantify_wax,
    render_overlay,
)


def _label_map(array, aoi=None):
    return LabelMap(labels=np.asarray(array, dtype=np.uint8), aoi=aoi)


def test_label_map_validation():
    with pytest.raises(ValueError):
        _label_map(np.zeros((2, 2, 2)))
    with pytest.raises(ValueError):
        _label_map(np.full((2, 2), SEG_OUTSIDE + 1))
    lm = _label_map([[SEG_WAX, SEG_NOWAX], [SEG_OTHER, SEG_OUTSIDE]])
    assert lm.width == 2 and lm.height == 2
    assert lm.class_count(SEG_WAX) == 1


def test_quantify_proportion():
    grid = np.full((10, 10), SEG_OUTSIDE, dtype=np.uint8)
    grid[:6, :10] = SEG_WAX  # 60 pixels
    grid[6:, :10] = SEG_NOWAX  # 40 pixels
    report = quantify_wax(_label_map(grid), berry_id="b1")
    assert report.wax_pixels == 60 and report.nowax_pixels == 40
    assert report.wax_proportion == pytest.approx(0.6)
    assert report.berry_id == "b1"


def test_quantify_requires_surface_pixels():
    grid = np.full((5, 5), SEG_OTHER, dtype=np.uint8)
    with pytest.raises(ValueError):
        quantify_wax(_label_map(grid))


def test_regions_ordering_and_geometry():
    grid = np.full((8, 12), SEG_OUTSIDE, dtype=np.uint8)
    grid[0:2, 0:5] = SEG_WAX        # size 10
    grid[4:8, 0:6] = SEG_NOWAX      # size 24
    grid[0:2, 8:12] = SEG_WAX       # size 8, disjoint from the first patch
    regions = extract_regions(_label_map(grid))
    assert [r.size for r in regions] == [24, 10, 8]
    assert regions[0].class_id == SEG_NOWAX
    assert regions[1].bbox == (0, 0, 4, 1)
    assert regions[2].bbox == (8, 0, 11, 1)
    cx, cy = regions[1].centroid
    assert cx == pytest.approx(2.0) and cy == pytest.approx(0.5)


def test_regions_four_connectivity():
    # two wax pixels touching only diagonally stay separate regions
    grid = np.full((4, 4), SEG_OTHER, dtype=np.uint8)
    grid[0, 0] = SEG_WAX
    grid[1, 1] = SEG_WAX
    regions = extract_regions(_label_map(grid))
    assert len(regions) == 2
    assert all(r.size == 1 for r in regions)


def test_regions_size_tie_keeps_scanline_order():
    grid = np.full((4, 8), SEG_OUTSIDE, dtype=np.uint8)
    grid[2, 5:7] = SEG_NOWAX  # later scanline position
    grid[0, 0:2] = SEG_NOWAX  # first pixel earliest
    regions = extract_regions(_label_map(grid))
    assert [r.bbox[1] for r in regions] == [0, 2]


def test_classify_aoi_marks_outside(small_dataset, trained_models):
    from waxsep.classes import TASK_SEGMENTATION
    from waxsep.extraction import load_capture_products

    cid = small_dataset.entries[0].capture_id
    _, _, stack = load_capture_products(small_dataset, cid, InputMode.IV)
    aoi = AreaOfInterest(x=32.0, y=32.0, radius=10.0)
    label_map = classify_aoi(trained_models[TASK_SEGMENTATION], stack, aoi)
    inside = aoi.mask(64, 64)
    assert np.all(label_map.labels[~inside] == SEG_OUTSIDE)
    assert np.all(label_map.labels[inside] != SEG_OUTSIDE)


def test_classify_aoi_rejects_wrong_model(small_dataset, trained_models):
    from waxsep.classes import TASK_DETECTION, TASK_SEGMENTATION
    from waxsep.extraction import load_capture_products

    cid = small_dataset.entries[0].capture_id
    _, _, stack = load_capture_products(small_dataset, cid, InputMode.IV)
    aoi = AreaOfInterest(x=32.0, y=32.0, radius=8.0)
    with pytest.raises(ValueError):
        classify_aoi(trained_models[TASK_DETECTION], stack, aoi)
    _, _, stack_i = load_capture_products(small_dataset, cid, InputMode.I)
    with pytest.raises(ValueError):
        classify_aoi(trained_models[TASK_SEGMENTATION], stack_i, aoi)


def test_overlay_colors_and_passthrough():
    base = RasterImage(np.full((4, 4, 3), 0.5))
    stack = ChannelStack(mode=InputMode.I, planes=(base,))
    grid = np.full((4, 4), SEG_OUTSIDE, dtype=np.uint8)
    grid[0, 0] = SEG_WAX
    grid[1, 1] = SEG_NOWAX
    grid[2, 2] = SEG_OTHER
    overlay = render_overlay(stack, _label_map(grid))
    assert tuple(overlay.pixels[0, 0]) == OVERLAY_COLORS[SEG_WAX]
    assert tuple(overlay.pixels[1, 1]) == OVERLAY_COLORS[SEG_NOWAX]
    assert tuple(overlay.pixels[2, 2]) == OVERLAY_COLORS[SEG_OTHER]
    assert tuple(overlay.pixels[3, 3]) == (0.5, 0.5, 0.5)


def test_overlay_rejects_mismatched_sizes():
    base = RasterImage(np.full((4, 4, 3), 0.5))
    stack = ChannelStack(mode=InputMode.I, planes=(base,))
    with pytest.raises(ValueError):
        render_overlay(stack, _label_map(np.zeros((5, 5), dtype=np.uint8)))
