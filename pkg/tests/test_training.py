"""Optimizer behavior: schedule, invariants, convergence, gradient check."""

import numpy as np
import pytest

from waxsep.cnn import (
    KIND_DETECTION,
    KIND_SEGMENTATION,
    init_model,
    predict_batch,
)
from waxsep.pixels import PixelDataset
from waxsep.training import (
    OptimizerState,
    TrainConfig,
    gradient_check,
    learning_rate_at,
    train,
    train_step,
)


def _pixel_set(crops, labels, num_classes=3, task="segmentation", coords=None):
    crops = np.asarray(crops, dtype=np.float32)
    n = len(crops)
    if coords is None:
        coords = np.zeros((n, 2), dtype=np.float32)
    return PixelDataset(
        task=task,
        mode_name="I",
        channels=crops.shape[1] // 9,
        num_classes=num_classes,
        crops=crops,
        coords=coords,
        labels=np.asarray(labels, dtype=np.int64),
    )


def _separable(n, num_classes, channels=3, jitter=0.02, seed=5):
    rng = np.random.default_rng(seed)
    labels = np.arange(n) % num_classes
    centers = labels / max(num_classes - 1, 1) * 0.8 + 0.1
    crops = centers[:, None] + rng.normal(0.0, jitter, (n, 9 * channels))
    return _pixel_set(crops, labels, num_classes=num_classes)


def test_schedule_full_scale():
    config = TrainConfig(schedule_scale=1.0)
    assert learning_rate_at(config, 0) == pytest.approx(1e-4)
    assert learning_rate_at(config, 49_999) == pytest.approx(1e-4)
    assert learning_rate_at(config, 50_000) == pytest.approx(1e-5)
    assert learning_rate_at(config, 99_999) == pytest.approx(1e-5)
    assert learning_rate_at(config, 100_000) == pytest.approx(1e-6)


def test_schedule_scaled_drops():
    config = TrainConfig(schedule_scale=0.1)
    assert config.drop_iterations == (5_000, 10_000)
    assert learning_rate_at(config, 4_999) == pytest.approx(1e-4)
    assert learning_rate_at(config, 5_000) == pytest.approx(1e-5)
    assert learning_rate_at(config, 10_000) == pytest.approx(1e-6)


def test_config_validation():
    for bad in (
        dict(iterations=0),
        dict(batch_size=0),
        dict(base_lr=-1e-4),
        dict(momentum=1.0),
        dict(momentum=-0.1),
        dict(weight_decay=-1e-4),
        dict(schedule_scale=0.0),
    ):
        with pytest.raises(ValueError):
            TrainConfig(**bad)


def test_zero_lr_freezes_parameters():
    model = init_model(KIND_SEGMENTATION, 3, seed=1)
    before = model.params.copy()
    data = _separable(30, 3)
    config = TrainConfig(iterations=25, batch_size=12, base_lr=0.0, schedule_scale=1.0)
    history = train(model, data, config, seed=0)
    assert np.array_equal(model.params, before)
    assert np.isfinite(history[-1].loss)


def test_pure_decay_shrinks_parameters():
    # zero data gradient: dead hidden layers (all-zero weights up front)
    # with balanced batches leave only the weight-decay term
    model = init_model(KIND_SEGMENTATION, 3, seed=0)
    model.params[:] = 0.0
    model.weights("trunk")[:] = 0.5
    before = model.params.copy()
    data = _pixel_set(np.random.default_rng(1).random((30, 27)), np.arange(30) % 3)
    lr, decay, steps = 1e-2, 1e-2, 50
    config = TrainConfig(
        iterations=steps, batch_size=30, base_lr=lr, momentum=0.0,
        weight_decay=decay, schedule_scale=1.0,
    )
    train(model, data, config, seed=0)
    expected = before * (1.0 - lr * decay) ** steps
    assert np.linalg.norm(model.params) < np.linalg.norm(before)
    assert np.max(np.abs(model.params - expected)) < 1e-6


def test_single_batch_loss_mostly_decreasing():
    data = _separable(60, 3)
    model = init_model(KIND_SEGMENTATION, 3, seed=2)
    config = TrainConfig(iterations=200, batch_size=60, base_lr=1e-3, schedule_scale=1.0)
    state = OptimizerState.for_model(model)
    losses = []
    for _ in range(200):
        record = train_step(model, data.crops, None, data.labels, config, state)
        losses.append(record.loss)
    drops = sum(1 for a, b in zip(losses, losses[1:]) if b < a)
    assert drops >= 0.95 * (len(losses) - 1)


def test_separable_set_trains_to_high_accuracy():
    data = _separable(2000, 2, seed=9)
    data = _pixel_set(data.crops, data.labels, num_classes=2, task="detection",
                      coords=np.random.default_rng(3).random((2000, 2)).astype(np.float32))
    model = init_model(KIND_DETECTION, 3, seed=4)
    config = TrainConfig(iterations=800, batch_size=64, base_lr=1e-3, schedule_scale=1.0)
    train(model, data, config, seed=1)
    labels, _ = predict_batch(model, data.crops, data.coords)
    accuracy = float(np.mean(labels == data.labels))
    assert accuracy >= 0.99


def test_one_sample_overfits_to_zero_loss():
    data = _pixel_set(np.full((1, 27), 0.7), [1])
    model = init_model(KIND_SEGMENTATION, 3, seed=3)
    config = TrainConfig(
        iterations=2000, batch_size=8, base_lr=1e-2, weight_decay=0.0, schedule_scale=1.0
    )
    history = train(model, data, config, seed=0)
    assert history[-1].loss < 1e-4


def test_training_is_deterministic():
    data = _separable(100, 3, seed=6)
    config = TrainConfig(iterations=40, batch_size=16, schedule_scale=1.0)
    runs = []
    for _ in range(2):
        model = init_model(KIND_SEGMENTATION, 3, seed=8)
        history = train(model, data, config, seed=2, log_every=1)
        runs.append((model.params.copy(), [r.loss for r in history]))
    assert np.array_equal(runs[0][0], runs[1][0])
    assert runs[0][1] == runs[1][1]


def test_history_records_iterations_and_rates():
    data = _separable(30, 3)
    config = TrainConfig(iterations=12, batch_size=8, schedule_scale=1.0)
    model = init_model(KIND_SEGMENTATION, 3, seed=0)
    history = train(model, data, config, seed=0, log_every=5)
    assert [r.iteration for r in history] == [0, 5, 10, 11]
    assert all(r.learning_rate == pytest.approx(1e-4) for r in history)


def test_empty_and_mismatched_datasets_rejected():
    model = init_model(KIND_SEGMENTATION, 3, seed=0)
    empty = _pixel_set(np.zeros((0, 27)), [])
    with pytest.raises(ValueError):
        train(model, empty, TrainConfig(iterations=1))
    two_class = _separable(10, 2)
    with pytest.raises(ValueError):
        train(model, two_class, TrainConfig(iterations=1))


def test_divergence_aborts_with_diagnostic():
    data = _pixel_set(np.random.default_rng(0).random((30, 27)) * 10, np.arange(30) % 3)
    model = init_model(KIND_SEGMENTATION, 3, seed=0)
    config = TrainConfig(
        iterations=500, batch_size=16, base_lr=1e7, weight_decay=0.0, schedule_scale=1.0
    )
    with np.errstate(all="ignore"), pytest.raises(FloatingPointError):
        train(model, data, config, seed=0)


@pytest.mark.parametrize("kind", [KIND_DETECTION, KIND_SEGMENTATION])
def test_gradient_check_quick(kind):
    for seed in (0, 1, 2):
        model = init_model(kind, 3, seed=seed)
        assert gradient_check(model, seed=seed) < 1e-4
