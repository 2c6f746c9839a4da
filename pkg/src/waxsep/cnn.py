"""Minimal pixel-classification networks with exact analytic gradients.

Both architectures read a flattened 3x3 crop. The crop branch starts with
a 3x3 valid convolution with 32 filters, which on a 3x3 input collapses to
one output position per filter and is therefore stored and computed as a
dense layer over the 9*channels crop values (identical parameter count and
arithmetic). The detection net adds a coordinate branch whose output is
concatenated before the trunk:

    detection:    crop(9C) -> 32 -> relu -> 64 -> relu ---+
                  coords(2) -> 16 -> relu -----------------+-> concat(80) -> 32 -> relu -> 2
    segmentation: crop(9C) -> 32 -> relu -> 64 -> relu -> 32 -> relu -> 3

Parameters live in one flat float32 vector with per-layer views (weights
first, then bias, in declaration order). Forward/backward accumulate in
float64 during training; inference runs in float32.
"""

from __future__ import annotations

import base64
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Tuple

import numpy as np

from waxsep.classes import TASK_DETECTION, TASK_SEGMENTATION

CHECKPOINT_VERSION = 1

KIND_DETECTION = TASK_DETECTION
KIND_SEGMENTATION = TASK_SEGMENTATION


@dataclass(frozen=True)
class LayerShape:
    """Placement of one dense layer inside the flat parameter vector."""

    name: str
    n_in: int
    n_out: int
    offset: int

    @property
    def size(self) -> int:
        return self.n_in * self.n_out + self.n_out


def _layer_plan(kind: str, input_channels: int) -> Tuple[tuple, bool, int]:
    crop_in = 9 * input_channels
    if kind == KIND_DETECTION:
        dims = [("crop_conv", crop_in, 32), ("crop_dense", 32, 64), ("coord_dense", 2, 16),
                ("trunk", 64 + 16, 32), ("head", 32, 2)]
        uses_coords = True
        classes = 2
    elif kind == KIND_SEGMENTATION:
        dims = [("crop_conv", crop_in, 32), ("crop_dense", 32, 64), ("trunk", 64, 32), ("head", 32, 3)]
        uses_coords = False
        classes = 3
    else:
        raise ValueError(f"unknown model kind {kind!r}")
    layers = []
    offset = 0
    for name, n_in, n_out in dims:
        layer = LayerShape(name=name, n_in=n_in, n_out=n_out, offset=offset)
        layers.append(layer)
        offset += layer.size
    return tuple(layers), uses_coords, classes


@dataclass
class CnnModel:
    """A trained or trainable pixel classifier.

    ``params`` is the single flat float32 parameter vector; the dataclass
    is mutable only through in-place parameter updates during training.
    """

    kind: str
    input_channels: int
    num_classes: int
    uses_coordinates: bool
    layers: tuple
    params: np.ndarray

    def __post_init__(self):
        self.params = np.asarray(self.params, dtype=np.float32)
        expected = parameter_count(self.kind, self.input_channels)
        if self.params.shape != (expected,):
            raise ValueError(f"parameter vector must have {expected} entries, got {self.params.shape}")

    def layer(self, name: str) -> LayerShape:
        for layer in self.layers:
            if layer.name == name:
                return layer
        raise KeyError(f"no layer named {name!r}")

    def weights(self, name: str, params: Optional[np.ndarray] = None) -> np.ndarray:
        """(n_in, n_out) view of a layer's weights inside a flat vector."""
        layer = self.layer(name)
        flat = self.params if params is None else params
        return flat[layer.offset : layer.offset + layer.n_in * layer.n_out].reshape(layer.n_in, layer.n_out)

    def bias(self, name: str, params: Optional[np.ndarray] = None) -> np.ndarray:
        layer = self.layer(name)
        flat = self.params if params is None else params
        start = layer.offset + layer.n_in * layer.n_out
        return flat[start : start + layer.n_out]


def parameter_count(kind: str, input_channels: int) -> int:
    layers, _, _ = _layer_plan(kind, input_channels)
    return sum(layer.size for layer in layers)


def init_model(kind: str, input_channels: int, seed: int = 0) -> CnnModel:
    """He-initialized model: W ~ N(0, sqrt(2 / fan_in)), biases zero."""
    if input_channels < 1:
        raise ValueError("input_channels must be >= 1")
    layers, uses_coords, classes = _layer_plan(kind, input_channels)
    rng = np.random.default_rng(np.random.SeedSequence((seed, 0xCE)))
    params = np.zeros(sum(l.size for l in layers), dtype=np.float32)
    for layer in layers:
        std = np.sqrt(2.0 / layer.n_in)
        w = rng.normal(0.0, std, size=layer.n_in * layer.n_out)
        params[layer.offset : layer.offset + layer.n_in * layer.n_out] = w.astype(np.float32)
    return CnnModel(
        kind=kind,
        input_channels=input_channels,
        num_classes=classes,
        uses_coordinates=uses_coords,
        layers=layers,
        params=params,
    )


def _forward_cached(model: CnnModel, params: np.ndarray, crops: np.ndarray, coords: Optional[np.ndarray]):
    """Logits plus the activation cache backward needs; dtype follows params."""
    w1, b1 = model.weights("crop_conv", params), model.bias("crop_conv", params)
    a1 = crops @ w1 + b1
    z1 = np.maximum(a1, 0.0)
    w2, b2 = model.weights("crop_dense", params), model.bias("crop_dense", params)
    a2 = z1 @ w2 + b2
    z2 = np.maximum(a2, 0.0)
    if model.uses_coordinates:
        if coords is None:
            raise ValueError("detection model needs pixel coordinates")
        wc, bc = model.weights("coord_dense", params), model.bias("coord_dense", params)
        ac = coords @ wc + bc
        zc = np.maximum(ac, 0.0)
        h = np.concatenate([z2, zc], axis=1)
    else:
        ac = zc = None
        h = z2
    w3, b3 = model.weights("trunk", params), model.bias("trunk", params)
    a3 = h @ w3 + b3
    z3 = np.maximum(a3, 0.0)
    w4, b4 = model.weights("head", params), model.bias("head", params)
    logits = z3 @ w4 + b4
    return logits, (crops, coords, a1, z1, a2, z2, ac, zc, h, a3, z3)


def _softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=1, keepdims=True)


def loss_value(
    model: CnnModel,
    params64: np.ndarray,
    crops: np.ndarray,
    coords: Optional[np.ndarray],
    labels: np.ndarray,
    weight_decay: float,
) -> float:
    """Training loss only (float64), shared by backprop and finite
    differences so both sides differentiate the identical function."""
    crops64 = np.asarray(crops, dtype=np.float64)
    coords64 = None if coords is None else np.asarray(coords, dtype=np.float64)
    logits, _ = _forward_cached(model, params64, crops64, coords64)
    probs = _softmax(logits)
    data_loss = float(-np.mean(np.log(probs[np.arange(len(labels)), labels] + 1e-300)))
    return data_loss + 0.5 * weight_decay * float(np.dot(params64, params64))


def loss_and_grad(
    model: CnnModel,
    params64: np.ndarray,
    crops: np.ndarray,
    coords: Optional[np.ndarray],
    labels: np.ndarray,
    weight_decay: float,
):
    """Mean softmax cross-entropy + (wd/2)*||params||^2 and its gradient.

    Everything runs in float64; the returned gradient is a flat float64
    vector aligned with the parameter layout.
    """
    crops64 = np.asarray(crops, dtype=np.float64)
    coords64 = None if coords is None else np.asarray(coords, dtype=np.float64)
    logits, cache = _forward_cached(model, params64, crops64, coords64)
    n = len(labels)
    probs = _softmax(logits)
    data_loss = float(-np.mean(np.log(probs[np.arange(n), labels] + 1e-300)))
    loss = data_loss + 0.5 * weight_decay * float(np.dot(params64, params64))

    grad = np.zeros_like(params64)

    def put(name, dw, db):
        layer = model.layer(name)
        grad[layer.offset : layer.offset + layer.n_in * layer.n_out] = dw.ravel()
        grad[layer.offset + layer.n_in * layer.n_out : layer.offset + layer.size] = db

    _, _, a1, z1, a2, z2, ac, zc, h, a3, z3 = cache
    dlogits = probs.copy()
    dlogits[np.arange(n), labels] -= 1.0
    dlogits /= n

    put("head", z3.T @ dlogits, dlogits.sum(axis=0))
    dz3 = dlogits @ model.weights("head", params64).T
    da3 = dz3 * (a3 > 0)
    put("trunk", h.T @ da3, da3.sum(axis=0))
    dh = da3 @ model.weights("trunk", params64).T
    if model.uses_coordinates:
        dz2 = dh[:, : z2.shape[1]]
        dzc = dh[:, z2.shape[1] :]
        dac = dzc * (ac > 0)
        put("coord_dense", coords64.T @ dac, dac.sum(axis=0))
    else:
        dz2 = dh
    da2 = dz2 * (a2 > 0)
    put("crop_dense", z1.T @ da2, da2.sum(axis=0))
    dz1 = da2 @ model.weights("crop_dense", params64).T
    da1 = dz1 * (a1 > 0)
    put("crop_conv", crops64.T @ da1, da1.sum(axis=0))

    grad += weight_decay * params64
    return loss, grad


def forward(model: CnnModel, crops: np.ndarray, coords: Optional[np.ndarray] = None) -> np.ndarray:
    """Class logits for a batch, float32 inference path."""
    crops = np.asarray(crops, dtype=np.float32)
    coords32 = None if coords is None else np.asarray(coords, dtype=np.float32)
    logits, _ = _forward_cached(model, model.params, crops, coords32)
    return logits


def predict_batch(model: CnnModel, crops: np.ndarray, coords: Optional[np.ndarray] = None):
    """(labels, probabilities) for a batch; argmax ties resolve to the
    lowest class id."""
    logits = forward(model, crops, coords)
    probs = _softmax(logits.astype(np.float64))
    return np.argmax(logits, axis=1), probs


def predict_pixel(model: CnnModel, crop: np.ndarray, coord=None) -> int:
    coords = None if coord is None else np.asarray([coord], dtype=np.float32)
    labels, _ = predict_batch(model, np.asarray([crop], dtype=np.float32), coords)
    return int(labels[0])


def save_model(model: CnnModel, path) -> Path:
    """Checkpoint: JSON descriptor plus base64 little-endian float32 blob."""
    path = Path(path)
    doc = {
        "format_version": CHECKPOINT_VERSION,
        "kind": model.kind,
        "input_channels": model.input_channels,
        "num_classes": model.num_classes,
        "uses_coordinates": model.uses_coordinates,
        "layers": [
            {"name": l.name, "in": l.n_in, "out": l.n_out, "offset": l.offset} for l in model.layers
        ],
        "dtype": "<f4",
        "parameters": base64.b64encode(model.params.astype("<f4").tobytes()).decode("ascii"),
    }
    path.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")
    return path


def load_model(path) -> CnnModel:
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"no such model checkpoint: {path}")
    doc = json.loads(path.read_text())
    if doc.get("format_version") != CHECKPOINT_VERSION:
        raise ValueError(f"unsupported checkpoint version {doc.get('format_version')!r}")
    if doc.get("dtype") != "<f4":
        raise ValueError(f"unsupported parameter dtype {doc.get('dtype')!r}")
    params = np.frombuffer(base64.b64decode(doc["parameters"]), dtype="<f4").copy()
    kind = doc["kind"]
    channels = int(doc["input_channels"])
    layers, uses_coords, classes = _layer_plan(kind, channels)
    declared = [(l["name"], l["in"], l["out"], l["offset"]) for l in doc.get("layers", [])]
    expected = [(l.name, l.n_in, l.n_out, l.offset) for l in layers]
    if declared != expected:
        raise ValueError("checkpoint layer table does not match the architecture")
    return CnnModel(
        kind=kind,
        input_channels=channels,
        num_classes=classes,
        uses_coordinates=uses_coords,
        layers=layers,
        params=params,
    )
