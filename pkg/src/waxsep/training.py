"""SGD-with-momentum training for the pixel classifiers.

The learning rate starts at 1e-4 and drops by 10x at two iteration
thresholds. At full scale the thresholds are 50000 and 100000; they scale
linearly with ``schedule_scale`` so desk-sized runs (default scale 0.1 ->
5000/10000) keep the same shape. Every batch is class-balanced by
resampling each class to an equal share.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np

from waxsep.cnn import CnnModel, loss_and_grad, loss_value
from waxsep.pixels import PixelDataset

_FULL_SCALE_DROPS = (50_000, 100_000)


@dataclass(frozen=True)
class TrainConfig:
    iterations: int = 15_000
    batch_size: int = 256
    base_lr: float = 1e-4
    momentum: float = 0.9
    weight_decay: float = 5e-4
    schedule_scale: float = 0.1

    def __post_init__(self):
        if self.iterations < 1:
            raise ValueError("iterations must be >= 1")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.base_lr < 0:
            raise ValueError("base_lr must be >= 0")
        if not (0.0 <= self.momentum < 1.0):
            raise ValueError("momentum must be in [0, 1)")
        if self.weight_decay < 0:
            raise ValueError("weight_decay must be >= 0")
        if self.schedule_scale <= 0:
            raise ValueError("schedule_scale must be positive")

    @property
    def drop_iterations(self) -> tuple:
        return tuple(int(round(t * self.schedule_scale)) for t in _FULL_SCALE_DROPS)


def learning_rate_at(config: TrainConfig, iteration: int) -> float:
    """Learning rate for a 0-based iteration counter; each threshold the
    counter has reached divides the rate by 10."""
    lr = config.base_lr
    for drop in config.drop_iterations:
        if iteration >= drop:
            lr *= 0.1
    return lr


@dataclass
class OptimizerState:
    """Momentum velocities (float64) plus the iteration counter."""

    velocity: np.ndarray
    iteration: int = 0

    @staticmethod
    def for_model(model: CnnModel) -> "OptimizerState":
        return OptimizerState(velocity=np.zeros(model.params.shape, dtype=np.float64))


@dataclass(frozen=True)
class StepRecord:
    iteration: int
    loss: float
    learning_rate: float


def train_step(
    model: CnnModel,
    crops: np.ndarray,
    coords: Optional[np.ndarray],
    labels: np.ndarray,
    config: TrainConfig,
    state: OptimizerState,
) -> StepRecord:
    """One SGD-momentum update:

        v <- momentum * v - lr * grad;  params <- params + v

    Gradients accumulate in float64; parameters stay float32.
    """
    params64 = model.params.astype(np.float64)
    loss, grad = loss_and_grad(model, params64, crops, coords, labels, config.weight_decay)
    if not np.isfinite(loss):
        raise FloatingPointError(f"training diverged: non-finite loss at iteration {state.iteration}")
    lr = learning_rate_at(config, state.iteration)
    state.velocity *= config.momentum
    state.velocity -= lr * grad
    params64 += state.velocity
    model.params[:] = params64.astype(np.float32)
    record = StepRecord(iteration=state.iteration, loss=loss, learning_rate=lr)
    state.iteration += 1
    return record


def _balanced_batch(rng: np.random.Generator, pools: list, batch_size: int):
    """Indices for one batch with equal per-class shares (remainder goes to
    the lowest class ids)."""
    n_classes = len(pools)
    base = batch_size // n_classes
    remainder = batch_size - base * n_classes
    picks = []
    for c, pool in enumerate(pools):
        count = base + (1 if c < remainder else 0)
        if count == 0:
            continue
        picks.append(pool[rng.integers(0, len(pool), size=count)])
    return np.concatenate(picks)


def train(
    model: CnnModel,
    data: PixelDataset,
    config: TrainConfig,
    seed: int = 0,
    log_every: int = 0,
) -> List[StepRecord]:
    """Train to ``config.iterations`` with class-balanced resampling.

    Returns the recorded steps (always including the last one). Balancing
    runs over the classes actually present; absent classes get no share.
    """
    if len(data) == 0:
        raise ValueError("cannot train on an empty pixel set")
    if model.num_classes != data.num_classes:
        raise ValueError("model and pixel set disagree on class count")
    pools = [np.flatnonzero(data.labels == c) for c in range(data.num_classes)]
    pools = [pool for pool in pools if len(pool)]
    rng = np.random.default_rng(np.random.SeedSequence((seed, 0x7A)))
    state = OptimizerState.for_model(model)
    history: List[StepRecord] = []
    for _ in range(config.iterations):
        idx = _balanced_batch(rng, pools, config.batch_size)
        coords = data.coords[idx] if model.uses_coordinates else None
        record = train_step(model, data.crops[idx], coords, data.labels[idx], config, state)
        if log_every and (record.iteration % log_every == 0):
            history.append(record)
    if not history or history[-1].iteration != config.iterations - 1:
        history.append(record)
    return history


def _kink_free_params(
    model: CnnModel,
    params64: np.ndarray,
    crops: np.ndarray,
    coords: Optional[np.ndarray],
    margin: float,
) -> np.ndarray:
    """Copy of the parameters with biases shifted off ReLU kinks.

    A central difference steps across a kink whenever some pre-activation of
    the probe batch sits closer to zero than the perturbation can push it,
    and the two gradient estimates then disagree by O(1) at that parameter.
    Comparing at a point where every unit is clearly active or inactive for
    the whole batch removes the artifact without weakening the check: the
    backward pass still has to match the loss surface it is actually on.
    """
    nudged = params64.copy()

    def settle(name: str, inputs: np.ndarray) -> np.ndarray:
        bias = model.bias(name, nudged)
        pre = inputs @ model.weights(name, nudged) + bias
        for j in range(pre.shape[1]):
            column = pre[:, j]
            if np.abs(column).min() >= margin:
                continue
            # smallest bias shift that clears the whole column out of the
            # band; pushing past the minimum is always a valid fallback
            aim = margin * 1.0625
            shifts = np.concatenate([aim - column, -aim - column])
            for delta in shifts[np.argsort(np.abs(shifts))]:
                if np.abs(column + delta).min() >= margin:
                    bias[j] += delta
                    pre[:, j] = column + delta
                    break
        return np.maximum(pre, 0.0)

    hidden = settle("crop_dense", settle("crop_conv", crops))
    if model.uses_coordinates:
        hidden = np.concatenate([hidden, settle("coord_dense", coords)], axis=1)
    settle("trunk", hidden)
    return nudged


def gradient_check(
    model: CnnModel,
    batch_size: int = 6,
    seed: int = 0,
    step: float = 1e-3,
    weight_decay: float = 5e-4,
) -> float:
    """Max relative error between analytic and central-difference gradients.

    Both sides run the identical float64 loss; relative error per parameter
    is |ga - gn| / max(|ga|, |gn|, 1e-8).
    """
    rng = np.random.default_rng(np.random.SeedSequence((seed, 0xFD)))
    crops = rng.normal(0.0, 1.0, size=(batch_size, 9 * model.input_channels))
    coords = rng.uniform(0.0, 1.0, size=(batch_size, 2)) if model.uses_coordinates else None
    labels = rng.integers(0, model.num_classes, size=batch_size)
    params64 = _kink_free_params(model, model.params.astype(np.float64), crops, coords, margin=30.0 * step)

    _, analytic = loss_and_grad(model, params64, crops, coords, labels, weight_decay)
    numeric = np.zeros_like(analytic)
    probe = params64.copy()

    def central(i: float, width: float) -> float:
        probe[i] = original + width
        lo_plus = loss_value(model, probe, crops, coords, labels, weight_decay)
        probe[i] = original - width
        lo_minus = loss_value(model, probe, crops, coords, labels, weight_decay)
        return (lo_plus - lo_minus) / (2.0 * width)

    for i in range(len(probe)):
        original = probe[i]
        # one Richardson step: the h**2 truncation term of the plain central
        # difference is visible (~1e-9) next to gradients that nearly cancel,
        # so combine the h and h/2 estimates to push it down to h**4
        coarse = central(i, step)
        fine = central(i, step / 2.0)
        probe[i] = original
        numeric[i] = (4.0 * fine - coarse) / 3.0
    denom = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), 1e-8)
    return float(np.max(np.abs(analytic - numeric) / denom))
