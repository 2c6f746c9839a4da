"""Separation math: patterns, black level, both formulations, polarization.

The scalar-loop oracle below recomputes the as-written rules one pixel at a
time with plain Python floats, independently of the vectorized code.
"""

import numpy as np
import pytest

from waxsep.imaging import PATTERN_COUNT, CaptureSet, RasterImage
from waxsep.lightsep import (
    BlackLevel,
    estimate_black_value,
    generate_patterns,
    separate_capture,
    separate_pattern_as_written,
    separate_pattern_reference,
    separate_polarization,
)
from waxsep.scenesim import render_scene, simulate_capture
from waxsep.scenesim import SceneSpec


def _scalar_as_written(frames, b):
    """Per-pixel reference: direct = min - max/(b-1); global = 2*max - direct/(b+1)."""
    h, w, c = frames[0].shape
    direct = np.zeros((h, w, c))
    glob = np.zeros((h, w, c))
    for y in range(h):
        for x in range(w):
            for ch in range(c):
                values = [f[y, x, ch] for f in frames]
                lo, hi = min(values), max(values)
                d = lo - hi / (b - 1.0)
                direct[y, x, ch] = d
                glob[y, x, ch] = 2.0 * hi - d / (b + 1.0)
    return direct, glob


def test_pattern_set_shape_and_offsets():
    patterns = generate_patterns(64, 64)
    assert len(patterns.masks) == PATTERN_COUNT == 25
    shifts = (0, 2, 4, 6, 8)  # ceil(8/4) = 2 steps across one cell
    expected = [(dy, dx) for dy in shifts for dx in shifts]
    assert list(patterns.offsets) == expected
    for mask in patterns.masks:
        values = np.unique(mask.pixels)
        assert set(values).issubset({0.0, 1.0})


def test_pattern_coverage_every_pixel_lit_and_dark():
    # every pixel must see at least one lit and one dark mask
    patterns = generate_patterns(64, 64)
    stack = np.stack([m.pixels[:, :, 0] for m in patterns.masks])
    assert stack.max(axis=0).min() == 1.0
    assert stack.min(axis=0).max() == 0.0


def test_black_level_estimate():
    img = RasterImage(np.full((5, 4, 3), 0.25))
    level = estimate_black_value(img)
    assert level.value == pytest.approx(0.25)
    with pytest.raises(ValueError):
        BlackLevel(value=1.0)
    with pytest.raises(ValueError):
        BlackLevel(value=-0.01)


def test_as_written_worked_example():
    # constant frames so min = 0.2 and max = 0.8 everywhere, b = 0.5
    lo = RasterImage(np.full((2, 2, 3), 0.2))
    hi = RasterImage(np.full((2, 2, 3), 0.8))
    result = separate_pattern_as_written([lo, hi], BlackLevel(0.5))
    assert np.allclose(result.direct_map.pixels, 1.8)
    assert np.allclose(result.global_map.pixels, 0.4)


def test_as_written_matches_scalar_loop(rng):
    for trial in range(50):
        frames = [rng.random((8, 8, 3)) for _ in range(5)]
        b = float(rng.uniform(0.0, 0.6))
        result = separate_pattern_as_written(
            [RasterImage(f) for f in frames], BlackLevel(b)
        )
        direct, glob = _scalar_as_written(frames, b)
        assert np.max(np.abs(result.direct_map.pixels - direct)) < 1e-6, trial
        assert np.max(np.abs(result.global_map.pixels - glob)) < 1e-6, trial


def test_reference_formulation_closed_loop(rng):
    # build frames from the formation model and invert them exactly:
    # frame = (b + (1-b)*mask)*D + (1+b)/2 * G
    for b in (0.0, 0.03, 0.2):
        direct = rng.random((6, 6, 3)) * 0.5
        glob = rng.random((6, 6, 3)) * 0.5
        frames = []
        for mask_value in (0.0, 1.0):
            px = (b + (1.0 - b) * mask_value) * direct + (1.0 + b) / 2.0 * glob
            frames.append(RasterImage(px))
        result = separate_pattern_reference(frames, BlackLevel(b))
        assert np.max(np.abs(result.direct_map.pixels - direct)) < 1e-9
        assert np.max(np.abs(result.global_map.pixels - glob)) < 1e-9
        assert result.clamp_fraction == 0.0


def test_reference_clamps_and_reports(rng):
    # min < b*max drives the global estimate negative, tripping the clamp
    lo = RasterImage(np.full((4, 4, 3), 0.0))
    hi = RasterImage(np.full((4, 4, 3), 1.0))
    result = separate_pattern_reference([lo, hi], BlackLevel(0.5))
    assert np.all(result.global_map.pixels >= 0.0)
    # the fraction counts direct and global pixels together
    assert result.clamp_fraction == 0.5


def test_polarization_identity(rng):
    parallel = RasterImage(rng.random((9, 7, 3)))
    perpendicular = RasterImage(rng.random((9, 7, 3)) * 0.5)
    diffuse, specular = separate_polarization(parallel, perpendicular)
    assert np.allclose(diffuse.pixels, 2.0 * perpendicular.pixels)
    recon = specular.pixels + diffuse.pixels / 2.0
    assert np.max(np.abs(recon - parallel.pixels)) < 1e-12


def test_polarization_shape_mismatch(rng):
    with pytest.raises(ValueError):
        separate_polarization(
            RasterImage(rng.random((4, 4, 3))), RasterImage(rng.random((4, 5, 3)))
        )


def _noiseless_scene(width=48, height=48):
    spec = SceneSpec(
        width=width,
        height=height,
        center=(width // 2, height // 2),
        radius=14,
        wax_coverage=0.4,
        base_color=(0.3, 0.2, 0.3),
        ambient=0.02,
        noise_sigma=0.0,
        seed=5,
    )
    return render_scene(spec)


def test_simulated_capture_closed_loop_noiseless():
    scene = _noiseless_scene()
    patterns = generate_patterns(scene.labels.shape[1], scene.labels.shape[0])
    capture = simulate_capture(scene, patterns)
    result = separate_capture(capture, formulation="reference")
    rmse_d = np.sqrt(np.mean((result.direct_map.pixels - scene.direct_map.pixels) ** 2))
    rmse_g = np.sqrt(np.mean((result.global_map.pixels - scene.global_map.pixels) ** 2))
    assert rmse_d < 1e-6 and rmse_g < 1e-6
    rmse_s = np.sqrt(np.mean((result.specular_map.pixels - scene.specular_map.pixels) ** 2))
    assert rmse_s < 1e-9


def test_separate_capture_requires_black(rng):
    frames = tuple(RasterImage(rng.random((4, 4, 3))) for _ in range(25))
    capture = CaptureSet(standard=frames[0], pattern_stack=frames, black=None)
    with pytest.raises(ValueError):
        separate_capture(capture)


def test_separate_capture_unknown_formulation(rng):
    capture = CaptureSet(standard=RasterImage(rng.random((4, 4, 3))))
    with pytest.raises(ValueError):
        separate_capture(capture, formulation="banana")
