"""Kernel backend selection.

The compiled extension is used when it imported cleanly; otherwise (or when
WAXSEP_FORCE_FALLBACK=1 is set) pure numpy/scipy implementations take over.
Both backends produce identical outputs, which the test suite asserts.
"""

from __future__ import annotations

import os

import numpy as np

try:
    if os.environ.get("WAXSEP_FORCE_FALLBACK", "") == "1":
        raise ImportError("fallback forced via WAXSEP_FORCE_FALLBACK")
    from waxsep import _core  # type: ignore[attr-defined]

    BACKEND = "compiled"
except ImportError:  # pragma: no cover - exercised via env var in tests
    _core = None
    BACKEND = "fallback"

_OFFSETS = np.array([-1, 0, 1], dtype=np.int64)


def _extract_crops_numpy(tensor: np.ndarray, xs: np.ndarray, ys: np.ndarray) -> np.ndarray:
    h, w, c = tensor.shape
    if xs.size and (xs.min() < 0 or xs.max() >= w or ys.min() < 0 or ys.max() >= h):
        raise ValueError("crop center outside image bounds")
    padded = np.pad(tensor, ((1, 1), (1, 1), (0, 0)), mode="edge")
    rows = ys[:, None] + 1 + _OFFSETS[None, :]
    cols = xs[:, None] + 1 + _OFFSETS[None, :]
    crops = padded[rows[:, :, None], cols[:, None, :], :]
    return crops.reshape(len(xs), 9 * c).astype(np.float32)


def extract_crops(tensor: np.ndarray, xs, ys) -> np.ndarray:
    """(N, 9*channels) float32 matrix of edge-replicated 3x3 crops.

    Row layout is (dy, dx, channel) with dy, dx running -1, 0, +1.
    """
    tensor = np.ascontiguousarray(tensor, dtype=np.float64)
    xs = np.ascontiguousarray(xs, dtype=np.int64)
    ys = np.ascontiguousarray(ys, dtype=np.int64)
    if xs.shape != ys.shape or xs.ndim != 1:
        raise ValueError("xs and ys must be equal-length 1-d arrays")
    if _core is not None:
        return _core.extract_crops(tensor, xs, ys)
    return _extract_crops_numpy(tensor, xs, ys)


def _label_components_scipy(mask: np.ndarray):
    from scipy import ndimage

    labels, count = ndimage.label(mask, structure=np.array([[0, 1, 0], [1, 1, 1], [0, 1, 0]]))
    labels = labels.astype(np.int64)
    if count == 0:
        return labels, 0
    # Renumber components in scanline order of their first pixel so both
    # backends agree exactly.
    flat = labels.ravel()
    nonzero = np.flatnonzero(flat)
    order_ids, first_idx = np.unique(flat[nonzero], return_index=True)
    remap = np.zeros(count + 1, dtype=np.int64)
    remap[order_ids[np.argsort(first_idx)]] = np.arange(1, count + 1)
    return remap[labels], count


def label_components(mask: np.ndarray):
    """4-connected components of a binary mask.

    Returns (labels, count) with components numbered 1..count in scanline
    order of their first pixel; 0 marks off-mask pixels.
    """
    mask = np.ascontiguousarray(np.asarray(mask) != 0, dtype=np.uint8)
    if mask.ndim != 2:
        raise ValueError("mask must be 2-d")
    if _core is not None:
        return _core.label_components(mask)
    return _label_components_scipy(mask)
