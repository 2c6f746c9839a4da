"""Training-pixel extraction from rectangle labels.

Every pixel inside a labeled rectangle becomes one sample: the 3x3 crop
around it (edge-replicated at borders), its normalized coordinates when the
task uses them, and the rectangle's class. Captures are processed in
capture-id order and results concatenated, so the outcome is a pure
function of (manifest, sidecars, mode, task, cap, seed) no matter how many
workers run.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from typing import Dict, Mapping, Optional, Tuple

import numpy as np

from waxsep.classes import TASK_CLASSES, TASK_DETECTION
from waxsep.imaging import (
    CaptureSet,
    ChannelStack,
    DatasetManifest,
    InputMode,
    assemble_channel_stack,
    load_capture_dir,
)
from waxsep.labels import LabelSidecar, load_sidecar
from waxsep.lightsep import SeparationResult, capture_planes, separate_capture
from waxsep.pixels import PixelDataset, normalize_coords
from waxsep._kernels import extract_crops


def worker_count() -> int:
    """Worker pool size, bounded by the WAXSEP_THREADS environment variable."""
    env = os.environ.get("WAXSEP_THREADS", "").strip()
    if env:
        try:
            requested = int(env)
        except ValueError as exc:
            raise ValueError(f"WAXSEP_THREADS must be an integer, got {env!r}") from exc
        return max(1, requested)
    return max(1, min(4, os.cpu_count() or 1))


def load_capture_products(
    manifest: DatasetManifest,
    capture_id: str,
    mode: InputMode,
    formulation: str = "reference",
) -> Tuple[CaptureSet, Optional[SeparationResult], ChannelStack]:
    """Load one capture and assemble the channel stack for a mode.

    Separation only runs when the mode needs derived planes; the standard
    photograph alone never pays for it.
    """
    capture = load_capture_dir(manifest.capture_path(capture_id))
    separation = None
    planes = {"standard": capture.standard}
    if mode is not InputMode.I:
        separation = separate_capture(capture, formulation=formulation)
        planes = capture_planes(capture, separation)
    return capture, separation, assemble_channel_stack(planes, mode)


def _entry_pixels(
    manifest: DatasetManifest,
    capture_id: str,
    sidecar: LabelSidecar,
    mode: InputMode,
    task: str,
) -> Optional[PixelDataset]:
    rectangles = sidecar.for_task(task)
    if not rectangles:
        return None
    _, _, stack = load_capture_products(manifest, capture_id, mode)
    tensor = stack.tensor()
    height, width = tensor.shape[:2]
    class_names = TASK_CLASSES[task]

    all_xs, all_ys, all_labels = [], [], []
    for rect in rectangles:
        if not rect.fits_inside(width, height):
            raise ValueError(
                f"capture {capture_id}: rectangle {rect} exceeds {width}x{height} image"
            )
        xs = np.arange(rect.x, rect.x + rect.width, dtype=np.int64)
        ys = np.arange(rect.y, rect.y + rect.height, dtype=np.int64)
        gy, gx = np.meshgrid(ys, xs, indexing="ij")
        all_xs.append(gx.ravel())
        all_ys.append(gy.ravel())
        all_labels.append(np.full(gx.size, class_names.index(rect.label), dtype=np.int64))
    xs = np.concatenate(all_xs)
    ys = np.concatenate(all_ys)
    labels = np.concatenate(all_labels)
    crops = extract_crops(tensor, xs, ys)
    if task == TASK_DETECTION:
        coords = normalize_coords(xs, ys, width, height)
    else:
        coords = np.zeros((len(labels), 2), dtype=np.float32)
    return PixelDataset(
        task=task,
        mode_name=mode.name,
        channels=tensor.shape[2],
        num_classes=len(class_names),
        crops=crops,
        coords=coords,
        labels=labels,
    )


def extract_training_pixels(
    manifest: DatasetManifest,
    sidecars: Optional[Mapping[str, LabelSidecar]],
    mode: InputMode,
    task: str,
    cap: Optional[int] = None,
    seed: int = 0,
    capture_ids: Optional[Tuple[str, ...]] = None,
) -> PixelDataset:
    """All labeled pixels for one task and input mode across a dataset.

    ``sidecars`` maps capture id to its label set; None loads each capture's
    sidecar file from the manifest. ``capture_ids`` restricts extraction to a
    subset (fold training sets). ``cap`` subsamples each class uniformly
    with ``seed`` after concatenation.
    """
    if task not in TASK_CLASSES:
        raise ValueError(f"unknown task {task!r}")
    ids = sorted(capture_ids if capture_ids is not None else (e.capture_id for e in manifest.entries))
    loaded: Dict[str, LabelSidecar] = {}
    for capture_id in ids:
        if sidecars is not None and capture_id in sidecars:
            loaded[capture_id] = sidecars[capture_id]
        else:
            path = manifest.sidecar_path(capture_id)
            if path is None:
                raise ValueError(f"capture {capture_id} has no label sidecar")
            loaded[capture_id] = load_sidecar(path)

    workers = worker_count()
    if workers == 1 or len(ids) <= 1:
        parts = [_entry_pixels(manifest, cid, loaded[cid], mode, task) for cid in ids]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(lambda cid: _entry_pixels(manifest, cid, loaded[cid], mode, task), ids))
    parts = [p for p in parts if p is not None]
    if not parts:
        raise ValueError(f"no {task} rectangles found in the given captures")
    dataset = PixelDataset.concatenate(parts)
    if cap is not None:
        dataset = dataset.subsample_per_class(cap, seed=seed)
    return dataset
