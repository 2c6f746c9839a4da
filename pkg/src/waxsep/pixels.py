"""Pixel sample batches: 3x3 crops, normalized coordinates, class labels."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np


def normalize_coords(xs, ys, width: int, height: int) -> np.ndarray:
    """(N, 2) float32 positions scaled to [0, 1] by image size.

    Every consumer of the coordinate branch must normalize the same way,
    so this is the single definition.
    """
    xs = np.asarray(xs, dtype=np.float64)
    ys = np.asarray(ys, dtype=np.float64)
    return np.stack([xs / float(width), ys / float(height)], axis=1).astype(np.float32)


@dataclass
class PixelDataset:
    """Training/evaluation pixels for one task and input mode.

    ``crops`` rows are flattened 3x3 neighborhoods in (dy, dx, channel)
    order; ``coords`` are pixel positions normalized to [0, 1] by image
    width and height (all zeros when the task ignores position).
    """

    task: str
    mode_name: str
    channels: int
    num_classes: int
    crops: np.ndarray
    coords: np.ndarray
    labels: np.ndarray

    def __post_init__(self):
        self.crops = np.asarray(self.crops, dtype=np.float32)
        self.coords = np.asarray(self.coords, dtype=np.float32)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        n = len(self.labels)
        if self.crops.shape != (n, 9 * self.channels):
            raise ValueError(
                f"crops shape {self.crops.shape} does not match {n} samples x {9 * self.channels} values"
            )
        if self.coords.shape != (n, 2):
            raise ValueError(f"coords shape {self.coords.shape} does not match {n} samples")
        if n and (self.labels.min() < 0 or self.labels.max() >= self.num_classes):
            raise ValueError("labels outside [0, num_classes)")

    def __len__(self) -> int:
        return len(self.labels)

    def class_counts(self) -> np.ndarray:
        return np.bincount(self.labels, minlength=self.num_classes)

    def subsample_per_class(self, cap: int, seed: int = 0) -> "PixelDataset":
        """Uniformly subsample each class to at most ``cap`` pixels."""
        if cap < 1:
            raise ValueError("cap must be >= 1")
        rng = np.random.default_rng(np.random.SeedSequence((seed, 0x5B)))
        keep = []
        for c in range(self.num_classes):
            pool = np.flatnonzero(self.labels == c)
            if len(pool) > cap:
                pool = np.sort(rng.choice(pool, size=cap, replace=False))
            keep.append(pool)
        idx = np.sort(np.concatenate(keep)) if keep else np.empty(0, dtype=np.int64)
        return PixelDataset(
            task=self.task,
            mode_name=self.mode_name,
            channels=self.channels,
            num_classes=self.num_classes,
            crops=self.crops[idx],
            coords=self.coords[idx],
            labels=self.labels[idx],
        )

    @staticmethod
    def concatenate(parts: Sequence["PixelDataset"]) -> "PixelDataset":
        parts = list(parts)
        if not parts:
            raise ValueError("nothing to concatenate")
        first = parts[0]
        for p in parts[1:]:
            if (p.task, p.mode_name, p.channels, p.num_classes) != (
                first.task,
                first.mode_name,
                first.channels,
                first.num_classes,
            ):
                raise ValueError("pixel datasets disagree in task, mode or shape")
        return PixelDataset(
            task=first.task,
            mode_name=first.mode_name,
            channels=first.channels,
            num_classes=first.num_classes,
            crops=np.concatenate([p.crops for p in parts]),
            coords=np.concatenate([p.coords for p in parts]),
            labels=np.concatenate([p.labels for p in parts]),
        )

    def save(self, path) -> Path:
        path = Path(path)
        np.savez_compressed(
            path,
            task=self.task,
            mode_name=self.mode_name,
            channels=self.channels,
            num_classes=self.num_classes,
            crops=self.crops,
            coords=self.coords,
            labels=self.labels,
        )
        return path if path.suffix == ".npz" else path.with_suffix(path.suffix + ".npz")

    @staticmethod
    def load(path) -> "PixelDataset":
        path = Path(path)
        if not path.is_file():
            raise FileNotFoundError(f"no such pixel file: {path}")
        with np.load(path, allow_pickle=False) as doc:
            return PixelDataset(
                task=str(doc["task"]),
                mode_name=str(doc["mode_name"]),
                channels=int(doc["channels"]),
                num_classes=int(doc["num_classes"]),
                crops=doc["crops"],
                coords=doc["coords"],
                labels=doc["labels"],
            )
