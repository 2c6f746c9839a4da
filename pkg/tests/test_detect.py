"""Sliding sensor template: geometry, votes, search, area of interest."""

import math

import numpy as np
import pytest

from waxsep.classes import SCENE_BACKGROUND, SCENE_NOWAX, SCENE_WAX
from waxsep.detect import (
    INTERIOR_SENSORS,
    SEARCH_SCALES,
    SENSOR_COUNT,
    AreaOfInterest,
    CnnClassifier,
    OracleClassifier,
    SearchStats,
    TemplateHit,
    build_template,
    estimate_aoi,
    multiscale_search,
    template_vote,
)


def _disk_labels(width, height, cx, cy, radius, cls=SCENE_NOWAX):
    labels = np.full((height, width), SCENE_BACKGROUND, dtype=np.uint8)
    yy, xx = np.ogrid[0:height, 0:width]
    labels[(xx - cx) ** 2 + (yy - cy) ** 2 <= radius**2] = cls
    return labels


def test_template_geometry():
    template = build_template(16)
    assert template.offsets.shape == (SENSOR_COUNT, 2)
    assert tuple(template.offsets[0]) == (0, 0)
    assert template.inner_radius == 4
    assert template.boundary_radius == 7
    inner = template.interior_offsets[1:]
    assert len(inner) == 8
    # ring sensors sit at the rounded circle positions, 45 degrees apart
    for k, (dx, dy) in enumerate(inner):
        assert dx == round(4 * math.cos(k * math.pi / 4))
        assert dy == round(4 * math.sin(k * math.pi / 4))
    with pytest.raises(ValueError):
        build_template(3)


def test_template_vote_and_hit_rule():
    labels = _disk_labels(64, 64, 32, 32, 14)
    oracle = OracleClassifier(labels)
    template = build_template(16)
    hit = template_vote(oracle, template, 32, 32)
    assert len(hit.votes) == SENSOR_COUNT
    assert hit.is_hit
    miss = template_vote(oracle, template, 10, 10)
    assert not miss.is_hit
    with pytest.raises(ValueError):
        template_vote(oracle, template, 0, 0)  # sensors leave the image
    # one failed interior sensor kills the hit regardless of the boundary
    votes = [True] * SENSOR_COUNT
    votes[INTERIOR_SENSORS - 1] = False
    assert not TemplateHit(x=5, y=5, scale=16, votes=tuple(votes)).is_hit


def test_search_finds_various_radii_and_positions():
    for radius in (2, 3, 5, 8, 12, 20):
        for cx, cy in ((32, 32), (radius + 2, radius + 2), (60 - radius, 25)):
            labels = _disk_labels(64, 64, cx, cy, radius)
            oracle = OracleClassifier(labels)
            hit = multiscale_search(oracle)
            assert hit is not None, (radius, cx, cy)
            assert labels[hit.y, hit.x] == SCENE_NOWAX


def test_search_blank_scene_has_no_hit():
    oracle = OracleClassifier(np.zeros((64, 64), dtype=np.uint8))
    assert multiscale_search(oracle) is None


def test_search_prefers_coarse_scales():
    labels = _disk_labels(96, 96, 48, 48, 30)
    oracle = OracleClassifier(labels)
    hit = multiscale_search(oracle)
    assert hit is not None and hit.scale >= 32


def test_search_evaluation_budget():
    for radius in (3, 9, 17):
        labels = _disk_labels(64, 64, 30, 34, radius)
        oracle = OracleClassifier(labels)
        stats = SearchStats()
        hit = multiscale_search(oracle, stats=stats)
        assert hit is not None
        assert oracle.evaluations <= SENSOR_COUNT * stats.placements


def test_aoi_coverage_and_area():
    for radius in (2, 4, 7, 12, 19):
        labels = _disk_labels(64, 64, 31, 33, radius)
        oracle = OracleClassifier(labels)
        hit = multiscale_search(oracle)
        assert hit is not None
        aoi = estimate_aoi(oracle, hit)
        berry = labels == SCENE_NOWAX
        mask = aoi.mask(64, 64)
        coverage = float((mask & berry).sum()) / float(berry.sum())
        assert coverage >= 0.95, (radius, coverage)
        assert float(mask.sum()) <= 2.5 * float(berry.sum()), radius


def test_aoi_mask_and_validation():
    aoi = AreaOfInterest(x=5.0, y=5.0, radius=2.0)
    mask = aoi.mask(10, 10)
    assert mask[5, 5] and mask[5, 7] and not mask[5, 8]
    assert aoi.to_json_dict() == {"x": 5.0, "y": 5.0, "radius": 2.0}
    with pytest.raises(ValueError):
        AreaOfInterest(x=0.0, y=0.0, radius=0.0)


def test_mixed_wax_berry_counts_as_berry():
    labels = _disk_labels(64, 64, 32, 32, 12, cls=SCENE_WAX)
    labels[32:, :] = np.where(labels[32:, :] == SCENE_WAX, SCENE_NOWAX, labels[32:, :])
    oracle = OracleClassifier(labels)
    hit = multiscale_search(oracle)
    assert hit is not None and hit.is_hit


def test_cnn_classifier_validation(small_dataset, trained_models):
    from waxsep.classes import TASK_DETECTION, TASK_SEGMENTATION
    from waxsep.extraction import load_capture_products
    from waxsep.imaging import InputMode

    cid = small_dataset.entries[0].capture_id
    _, _, stack = load_capture_products(small_dataset, cid, InputMode.IV)
    with pytest.raises(ValueError):
        CnnClassifier(trained_models[TASK_SEGMENTATION], stack)
    _, _, stack_i = load_capture_products(small_dataset, cid, InputMode.I)
    with pytest.raises(ValueError):
        CnnClassifier(trained_models[TASK_DETECTION], stack_i)


def test_cnn_classifier_end_to_end(small_dataset, trained_models):
    from waxsep.classes import TASK_DETECTION
    from waxsep.extraction import load_capture_products
    from waxsep.imaging import InputMode
    from waxsep.scenesim import load_truth

    found = 0
    for entry in small_dataset.entries:
        _, _, stack = load_capture_products(small_dataset, entry.capture_id, InputMode.IV)
        classifier = CnnClassifier(trained_models[TASK_DETECTION], stack)
        hit = multiscale_search(classifier)
        if hit is None:
            continue
        truth = load_truth(small_dataset.capture_path(entry) / "truth.png")
        berry = (truth == SCENE_NOWAX) | (truth == SCENE_WAX)
        if berry[hit.y, hit.x]:
            found += 1
    assert found == len(small_dataset.entries)
