"""Model construction, forward pass, prediction and checkpoint IO."""

import numpy as np
import pytest

from waxsep.cnn import (
    KIND_DETECTION,
    KIND_SEGMENTATION,
    forward,
    init_model,
    load_model,
    parameter_count,
    predict_batch,
    predict_pixel,
    save_model,
)


@pytest.mark.parametrize(
    "kind,channels,expected",
    [
        (KIND_DETECTION, 3, 5714),
        (KIND_SEGMENTATION, 3, 5187),
        (KIND_DETECTION, 15, 9170),
        (KIND_SEGMENTATION, 15, 8643),
    ],
)
def test_parameter_counts(kind, channels, expected):
    assert parameter_count(kind, channels) == expected
    model = init_model(kind, channels, seed=0)
    assert model.params.size == expected


def test_unknown_kind_rejected():
    with pytest.raises(ValueError):
        init_model("classification", 3)


def test_same_seed_identical_parameters():
    a = init_model(KIND_DETECTION, 6, seed=5)
    b = init_model(KIND_DETECTION, 6, seed=5)
    c = init_model(KIND_DETECTION, 6, seed=6)
    assert np.array_equal(a.params, b.params)
    assert not np.array_equal(a.params, c.params)


def test_class_counts_per_kind():
    assert init_model(KIND_DETECTION, 15, seed=0).num_classes == 2
    assert init_model(KIND_SEGMENTATION, 15, seed=0).num_classes == 3


def test_softmax_rows_normalized(rng):
    model = init_model(KIND_SEGMENTATION, 6, seed=1)
    crops = rng.random((40, 9 * 6)).astype(np.float32)
    logits = forward(model, crops)
    assert logits.shape == (40, 3)
    _, probs = predict_batch(model, crops)
    assert np.max(np.abs(probs.sum(axis=1) - 1.0)) < 1e-6
    assert probs.min() >= 0.0


def test_zero_parameters_give_uniform_and_class_zero(rng):
    model = init_model(KIND_DETECTION, 3, seed=2)
    model.params[:] = 0.0
    crops = rng.random((10, 27)).astype(np.float32)
    coords = rng.random((10, 2)).astype(np.float32)
    labels, probs = predict_batch(model, crops, coords)
    assert np.allclose(probs, 0.5)
    assert np.all(labels == 0)  # argmax tie resolves to the lowest class


def test_forward_bit_identical(rng):
    model = init_model(KIND_SEGMENTATION, 15, seed=3)
    crops = rng.random((25, 9 * 15)).astype(np.float32)
    a = forward(model, crops)
    b = forward(model, crops)
    assert np.array_equal(a, b)


def test_batch_matches_per_sample(rng):
    model = init_model(KIND_DETECTION, 3, seed=4)
    crops = rng.random((15, 27)).astype(np.float32)
    coords = rng.random((15, 2)).astype(np.float32)
    labels, _ = predict_batch(model, crops, coords)
    singles = [predict_pixel(model, crops[i], coords[i]) for i in range(15)]
    assert list(labels) == singles


def test_detection_requires_coords(rng):
    model = init_model(KIND_DETECTION, 3, seed=0)
    crops = rng.random((4, 27)).astype(np.float32)
    with pytest.raises(ValueError):
        forward(model, crops)


def test_checkpoint_roundtrip(tmp_path, rng):
    model = init_model(KIND_SEGMENTATION, 6, seed=7)
    path = save_model(model, tmp_path / "seg.npz")
    loaded = load_model(path)
    assert loaded.kind == model.kind
    assert loaded.input_channels == model.input_channels
    assert np.array_equal(loaded.params, model.params)
    crops = rng.random((8, 54)).astype(np.float32)
    assert np.array_equal(forward(model, crops), forward(loaded, crops))


def test_checkpoint_rejects_garbage(tmp_path):
    path = tmp_path / "bad.npz"
    np.savez(path, nonsense=np.zeros(3))
    with pytest.raises((ValueError, KeyError)):
        load_model(path)


def test_trained_berry_crop_confident(small_dataset, trained_models):
    from waxsep.classes import DET_BERRY, TASK_DETECTION
    from waxsep.extraction import extract_training_pixels
    from waxsep.imaging import InputMode

    ds = extract_training_pixels(small_dataset, None, InputMode.IV, TASK_DETECTION)
    model = trained_models[TASK_DETECTION]
    berry_rows = np.flatnonzero(ds.labels == DET_BERRY)
    _, probs = predict_batch(model, ds.crops[berry_rows], ds.coords[berry_rows])
    # interior berry pixels should be called with high confidence on average
    assert float(np.mean(probs[:, DET_BERRY])) > 0.9
