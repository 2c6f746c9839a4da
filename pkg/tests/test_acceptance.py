"""Acceptance gate: the package's hard guarantees, one test each.

Every test checks its tolerance or bound against an independent oracle and
prints one PASS line with the measured numbers once the assertions hold;
pytest -v adds the per-test verdict.
"""

import time

import numpy as np
import pytest

from waxsep.classes import (
    SCENE_BACKGROUND,
    SCENE_NOWAX,
    SCENE_PEDICLE,
    SEG_NOWAX,
    SEG_WAX,
    TASK_DETECTION,
    TASK_SEGMENTATION,
)
from waxsep.cnn import init_model, predict_batch
from waxsep.detect import OracleClassifier, estimate_aoi, multiscale_search
from waxsep.extraction import extract_training_pixels
from waxsep.imaging import InputMode, RasterImage
from waxsep.lightsep import (
    BlackLevel,
    generate_patterns,
    separate_capture,
    separate_pattern_as_written,
    separate_polarization,
)
from waxsep.pipeline import EXIT_OK, run_pipeline
from waxsep.pixels import PixelDataset
from waxsep.scenesim import (
    SceneSpec,
    default_profiles,
    generate_dataset,
    render_scene,
    simulate_capture,
    synthesize_population,
)
from waxsep.segment import LabelMap, extract_regions
from waxsep.stats import EvaluationConfig, cross_validate, pearson
from waxsep.training import TrainConfig, gradient_check, learning_rate_at, train


@pytest.fixture(scope="module")
def acceptance_dataset(tmp_path_factory):
    root = tmp_path_factory.mktemp("accept") / "dataset"
    return generate_dataset(root, berries_per_cultivar=10, seed=42)


def test_polarization_identity(rng):
    start = time.monotonic()
    worst = 0.0
    for _ in range(100):
        parallel = RasterImage(rng.random((96, 96, 3)))
        perpendicular = RasterImage(rng.random((96, 96, 3)) * 0.5)
        diffuse, specular = separate_polarization(parallel, perpendicular)
        recon = specular.pixels + diffuse.pixels / 2.0
        worst = max(worst, float(np.max(np.abs(recon - parallel.pixels))))
    elapsed = time.monotonic() - start
    assert worst < 1e-9
    assert elapsed < 5.0
    print(f"PASS polarization identity: max |error| {worst:.3e} over 100 pairs, {elapsed:.2f}s")


def test_separation_matches_scalar_loop(rng):
    worst = 0.0
    for _ in range(50):
        frames = [rng.random((8, 8, 3)) for _ in range(25)]
        b = float(rng.uniform(0.0, 0.6))
        result = separate_pattern_as_written(
            [RasterImage(f) for f in frames], BlackLevel(b)
        )
        h, w, c = 8, 8, 3
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
        worst = max(worst, float(np.max(np.abs(result.direct_map.pixels - direct))))
        worst = max(worst, float(np.max(np.abs(result.global_map.pixels - glob))))
    assert worst < 1e-6
    print(f"PASS separation formula fidelity: max |difference| {worst:.3e} over 50 stacks")


def test_closed_loop_separation():
    start = time.monotonic()
    worst_clean = 0.0
    worst_noisy = 0.0
    for seed, sigma in ((10, 0.0), (11, 0.0), (12, 0.0), (20, 0.01), (21, 0.01), (22, 0.01)):
        spec = SceneSpec(
            width=64, height=64, center=(32, 32), radius=20,
            wax_coverage=0.5, noise_sigma=sigma, seed=seed,
        )
        scene = render_scene(spec)
        capture = simulate_capture(scene)
        result = separate_capture(capture, formulation="reference")
        rmse_d = float(np.sqrt(np.mean((result.direct_map.pixels - scene.direct_map.pixels) ** 2)))
        rmse_g = float(np.sqrt(np.mean((result.global_map.pixels - scene.global_map.pixels) ** 2)))
        if sigma == 0.0:
            worst_clean = max(worst_clean, rmse_d, rmse_g)
        else:
            worst_noisy = max(worst_noisy, rmse_d, rmse_g)
    elapsed = time.monotonic() - start
    assert worst_clean < 1e-6
    assert worst_noisy <= 0.02
    assert elapsed < 30.0
    print(
        f"PASS closed-loop separation: noiseless RMSE {worst_clean:.3e}, "
        f"sigma=0.01 RMSE {worst_noisy:.4f}, {elapsed:.2f}s"
    )


def test_pattern_coverage_exhaustive():
    patterns = generate_patterns(64, 64)
    stack = np.stack([m.pixels[:, :, 0] for m in patterns.masks])
    lit = stack.max(axis=0)
    dark = stack.min(axis=0)
    assert len(patterns.masks) == 25
    assert lit.min() == 1.0
    assert dark.max() == 0.0
    print("PASS pattern coverage: all 4096 pixels lit and dark at least once across 25 masks")


def test_gradient_check_both_architectures():
    start = time.monotonic()
    worst = 0.0
    for kind in ("detection", "segmentation"):
        for seed in range(20):
            model = init_model(kind, 3 if seed % 2 else 15, seed=seed)
            worst = max(worst, gradient_check(model, seed=seed))
    elapsed = time.monotonic() - start
    assert worst < 1e-4
    assert elapsed < 60.0
    print(f"PASS gradient check: max relative error {worst:.3e} over 40 runs, {elapsed:.1f}s")


def test_training_sanity():
    for iteration, expected in ((0, 1e-4), (50_000, 1e-5), (100_000, 1e-6)):
        lr = learning_rate_at(TrainConfig(schedule_scale=1.0), iteration)
        assert lr == pytest.approx(expected, rel=1e-12)

    rng = np.random.default_rng(77)
    n = 10_000
    labels = rng.integers(0, 2, size=n)
    crops = labels[:, None] * 0.6 + 0.2 + rng.normal(0.0, 0.05, (n, 27))
    data = PixelDataset(
        task=TASK_DETECTION,
        mode_name="I",
        channels=3,
        num_classes=2,
        crops=crops,
        coords=rng.random((n, 2)).astype(np.float32),
        labels=labels,
    )
    model = init_model("detection", 3, seed=13)
    config = TrainConfig(iterations=5_000, batch_size=256)
    train(model, data, config, seed=3)
    predicted, _ = predict_batch(model, data.crops, data.coords)
    accuracy = float(np.mean(predicted == data.labels))
    assert accuracy >= 0.99
    print(f"PASS training sanity: separable-set accuracy {accuracy:.4f} within 5000 iterations")


def _disk_scene(width, height, cx, cy, radius):
    labels = np.full((height, width), SCENE_BACKGROUND, dtype=np.uint8)
    yy, xx = np.ogrid[0:height, 0:width]
    labels[(xx - cx) ** 2 + (yy - cy) ** 2 <= radius**2] = SCENE_NOWAX
    return labels


def test_detector_soundness():
    cases = 0
    worst_coverage = 1.0
    worst_ratio = 0.0
    for radius in range(2, 29):
        for cx in (radius + 1, 32, 62 - radius):
            for cy in (radius + 1, 32, 62 - radius):
                labels = _disk_scene(64, 64, cx, cy, radius)
                oracle = OracleClassifier(labels)
                hit = multiscale_search(oracle)
                assert hit is not None, (radius, cx, cy)
                aoi = estimate_aoi(oracle, hit)
                berry = labels == SCENE_NOWAX
                mask = aoi.mask(64, 64)
                coverage = float((mask & berry).sum()) / float(berry.sum())
                ratio = float(mask.sum()) / float(berry.sum())
                assert coverage >= 0.95, (radius, cx, cy, coverage)
                assert ratio <= 2.5, (radius, cx, cy, ratio)
                worst_coverage = min(worst_coverage, coverage)
                worst_ratio = max(worst_ratio, ratio)
                cases += 1

    blanks = 0
    assert multiscale_search(OracleClassifier(np.zeros((64, 64), dtype=np.uint8))) is None
    blanks += 1
    rng = np.random.default_rng(55)
    for _ in range(19):
        labels = np.full((64, 64), SCENE_BACKGROUND, dtype=np.uint8)
        speckle = rng.random((64, 64)) < 0.1
        labels[speckle] = SCENE_PEDICLE  # clutter that is not berry surface
        assert multiscale_search(OracleClassifier(labels)) is None
        blanks += 1
    print(
        f"PASS detector soundness: {cases} berry scenes all found "
        f"(worst coverage {worst_coverage:.3f}, worst area ratio {worst_ratio:.2f}), "
        f"{blanks} blanks hit-free"
    )


def test_end_to_end_cross_validation(acceptance_dataset):
    start = time.monotonic()
    config = EvaluationConfig(
        k=3,
        seed=0,
        pixel_cap=8_000,
        iterations=4_000,
        batch_size=96,
        schedule_scale=0.1,
    )
    report = cross_validate(acceptance_dataset, [InputMode.I, InputMode.IV], config)
    elapsed = time.monotonic() - start
    mode_iv = report.mode_result("IV")
    mode_i = report.mode_result("I")
    assert mode_iv.berry_accuracy >= 0.95
    assert mode_iv.wax_accuracy >= 0.90
    assert mode_iv.berry_accuracy >= mode_i.berry_accuracy
    assert mode_iv.wax_accuracy >= mode_i.wax_accuracy
    assert elapsed < 600.0
    print(
        f"PASS end-to-end cross-validation: mode IV berry {mode_iv.berry_accuracy:.4f} "
        f"wax {mode_iv.wax_accuracy:.4f} vs mode I berry {mode_i.berry_accuracy:.4f} "
        f"wax {mode_i.wax_accuracy:.4f}; {elapsed:.0f}s"
    )


def test_correlation_recovery():
    population = synthesize_population(default_profiles(), per_cultivar=45, seed=0)
    assert len(population) == 270
    proportions = [r.wax_proportion for r in population]
    impedances = [r.impedance for r in population]
    result = pearson(proportions, impedances)
    assert abs(result.r - 0.76) <= 0.08
    assert result.p < 1e-30

    n = len(proportions)
    mx = sum(proportions) / n
    my = sum(impedances) / n
    sxy = sum((a - mx) * (b - my) for a, b in zip(proportions, impedances))
    sxx = sum((a - mx) ** 2 for a in proportions)
    syy = sum((b - my) ** 2 for b in impedances)
    brute = sxy / (sxx**0.5 * syy**0.5)
    assert abs(result.r - brute) < 1e-12
    print(
        f"PASS correlation recovery: r {result.r:.4f} (planted 0.76), p {result.p:.2e}, "
        f"brute-force gap {abs(result.r - brute):.2e}"
    )


def _oracle_regions(labels):
    """Flood-fill reference for extract_regions, ordered by the same rule."""
    height, width = labels.shape
    found = []
    for class_id in (SEG_WAX, SEG_NOWAX):
        mask = labels == class_id
        seen = np.zeros_like(mask, dtype=bool)
        for sy in range(height):
            for sx in range(width):
                if not mask[sy, sx] or seen[sy, sx]:
                    continue
                stack = [(sy, sx)]
                seen[sy, sx] = True
                pix = []
                while stack:
                    y, x = stack.pop()
                    pix.append((y, x))
                    for ny, nx in ((y - 1, x), (y + 1, x), (y, x - 1), (y, x + 1)):
                        if 0 <= ny < height and 0 <= nx < width and mask[ny, nx] and not seen[ny, nx]:
                            seen[ny, nx] = True
                            stack.append((ny, nx))
                pix.sort()  # row-major, so aggregation matches nonzero order
                ys = np.array([p[0] for p in pix], dtype=np.int64)
                xs = np.array([p[1] for p in pix], dtype=np.int64)
                found.append(
                    (
                        -len(pix),
                        sy * width + sx,
                        class_id,
                        {
                            "class_id": class_id,
                            "size": len(pix),
                            "centroid": (float(xs.mean()), float(ys.mean())),
                            "bbox": (int(xs.min()), int(ys.min()), int(xs.max()), int(ys.max())),
                        },
                    )
                )
    found.sort(key=lambda item: (item[0], item[1], item[2]))
    return [item[3] for item in found]


def test_region_extraction_equals_flood_fill():
    rng = np.random.default_rng(99)
    checked = 0
    for trial in range(200):
        density = rng.uniform(0.2, 0.8)
        labels = np.where(
            rng.random((64, 64)) < density,
            rng.integers(0, 2, (64, 64)),  # wax / nowax
            rng.integers(2, 4, (64, 64)),  # other / outside
        ).astype(np.uint8)
        regions = extract_regions(LabelMap(labels=labels))
        oracle = _oracle_regions(labels)
        assert len(regions) == len(oracle), trial
        for got, want in zip(regions, oracle):
            assert got.class_id == want["class_id"], trial
            assert got.size == want["size"], trial
            assert got.bbox == want["bbox"], trial
            assert got.centroid == want["centroid"], trial
        checked += len(regions)
    print(f"PASS region extraction: {checked} regions over 200 maps match the flood-fill oracle exactly")


def test_pipeline_determinism(acceptance_dataset, tmp_path):
    models = {}
    for task, kind in ((TASK_DETECTION, "detection"), (TASK_SEGMENTATION, "segmentation")):
        data = extract_training_pixels(
            acceptance_dataset, None, InputMode.IV, task, cap=6_000, seed=9
        )
        model = init_model(kind, data.channels, seed=9)
        train(model, data, TrainConfig(iterations=1_200, batch_size=96, schedule_scale=0.1), seed=9)
        models[task] = model

    out_a = tmp_path / "run_a"
    out_b = tmp_path / "run_b"
    assert run_pipeline(acceptance_dataset, models, InputMode.IV, out_a) == EXIT_OK
    assert run_pipeline(acceptance_dataset, models, InputMode.IV, out_b) == EXIT_OK

    files_a = sorted(p.relative_to(out_a) for p in out_a.rglob("*") if p.is_file())
    files_b = sorted(p.relative_to(out_b) for p in out_b.rglob("*") if p.is_file())
    assert files_a == files_b
    for rel in files_a:
        assert (out_a / rel).read_bytes() == (out_b / rel).read_bytes(), str(rel)
    print(f"PASS determinism: two pipeline runs byte-identical across {len(files_a)} files")
