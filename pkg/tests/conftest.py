"""Shared fixtures: one small synthetic dataset and models trained on it.

Both are session-scoped because rendering and training dominate the suite's
runtime; tests must not mutate them.
"""

import numpy as np
import pytest

from waxsep.classes import TASK_DETECTION, TASK_SEGMENTATION
from waxsep.cnn import init_model
from waxsep.extraction import extract_training_pixels
from waxsep.imaging import InputMode, load_manifest
from waxsep.scenesim import default_profiles, generate_dataset
from waxsep.training import TrainConfig, train


@pytest.fixture(scope="session")
def small_dataset(tmp_path_factory):
    """Four 64x64 captures over two cultivars, full frame sets."""
    root = tmp_path_factory.mktemp("dataset")
    generate_dataset(
        root,
        berries_per_cultivar=2,
        profiles=default_profiles()[:2],
        seed=702,
        width=64,
        height=64,
    )
    return load_manifest(root / "manifest.json")


@pytest.fixture(scope="session")
def trained_models(small_dataset):
    """Detection and segmentation nets trained on the small dataset, mode IV."""
    config = TrainConfig(iterations=1500, batch_size=64, schedule_scale=0.1)
    models = {}
    for task in (TASK_DETECTION, TASK_SEGMENTATION):
        pixels = extract_training_pixels(
            small_dataset, None, InputMode.IV, task, cap=4000, seed=9
        )
        model = init_model(task, InputMode.IV.channel_count, seed=9)
        train(model, pixels, config, seed=9)
        models[task] = model
    return models


@pytest.fixture()
def rng():
    return np.random.default_rng(1234)
