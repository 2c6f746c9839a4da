"""Raster image types, image file I/O and dataset manifests.

Intensities live in linear [0, 1] nominally but are kept as unclamped
float64 throughout the pipeline; clamping happens only when a file is
written. PNG (8 and 16 bit) and binary/ASCII portable pixmaps are the
supported container formats.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Iterable, Mapping, Optional, Sequence

import cv2
import numpy as np

PATTERN_COUNT = 25

_SUPPORTED_SUFFIXES = {".png", ".ppm", ".pgm", ".pnm"}


@dataclass(frozen=True)
class RasterImage:
    """A row-major float64 image of shape (height, width, channels).

    Instances are treated as immutable after construction; operations
    return new images instead of mutating pixel data.
    """

    pixels: np.ndarray

    def __post_init__(self):
        px = np.asarray(self.pixels, dtype=np.float64)
        if px.ndim == 2:
            px = px[:, :, np.newaxis]
        if px.ndim != 3:
            raise ValueError(f"expected 2- or 3-d pixel array, got shape {px.shape}")
        if px.shape[0] < 1 or px.shape[1] < 1 or px.shape[2] < 1:
            raise ValueError(f"zero-sized image: shape {px.shape}")
        if not np.all(np.isfinite(px)):
            raise ValueError("image contains non-finite intensities")
        object.__setattr__(self, "pixels", px)

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @property
    def channels(self) -> int:
        return self.pixels.shape[2]

    @staticmethod
    def zeros(width: int, height: int, channels: int = 3) -> "RasterImage":
        return RasterImage(np.zeros((height, width, channels), dtype=np.float64))


class InputMode(Enum):
    """Channel combinations fed to the pixel classifiers.

    Each named plane is a 3-channel image, so mode I yields 3 input
    channels, II and III yield 6 and IV yields 15.
    """

    I = ("standard",)
    II = ("diffuse", "specular")
    III = ("direct", "global")
    IV = ("standard", "specular", "diffuse", "direct", "global")

    @property
    def plane_names(self) -> tuple:
        return self.value

    @property
    def channel_count(self) -> int:
        return 3 * len(self.value)

    @staticmethod
    def parse(text: str) -> "InputMode":
        try:
            return InputMode[text.strip().upper()]
        except KeyError:
            raise ValueError(f"unknown input mode {text!r}; expected I, II, III or IV") from None


@dataclass(frozen=True)
class ChannelStack:
    """Named 3-channel planes concatenated into one classifier input."""

    mode: InputMode
    planes: tuple

    def __post_init__(self):
        planes = tuple(self.planes)
        if len(planes) != len(self.mode.plane_names):
            raise ValueError(
                f"mode {self.mode.name} needs planes {self.mode.plane_names}, got {len(planes)}"
            )
        w, h = planes[0].width, planes[0].height
        for img in planes:
            if img.channels != 3:
                raise ValueError("channel stacks are built from 3-channel planes")
            if (img.width, img.height) != (w, h):
                raise ValueError("all planes in a stack must share dimensions")
        object.__setattr__(self, "planes", planes)

    @property
    def width(self) -> int:
        return self.planes[0].width

    @property
    def height(self) -> int:
        return self.planes[0].height

    @property
    def channel_count(self) -> int:
        return 3 * len(self.planes)

    def tensor(self) -> np.ndarray:
        """Concatenate planes into one (height, width, channels) array."""
        return np.concatenate([p.pixels for p in self.planes], axis=2)


@dataclass(frozen=True)
class CaptureSet:
    """All frames recorded for one berry under the imaging protocol.

    `pattern_stack` holds the shifted-pattern frames in row-major shift
    order (vertical shift outer, horizontal shift inner). Polarization and
    pattern frames are optional so partially recorded captures can still
    be represented; assembling a mode that needs a missing frame fails.
    """

    standard: RasterImage
    pattern_stack: Optional[tuple] = None
    black: Optional[RasterImage] = None
    parallel: Optional[RasterImage] = None
    perpendicular: Optional[RasterImage] = None

    def __post_init__(self):
        if self.pattern_stack is not None:
            object.__setattr__(self, "pattern_stack", tuple(self.pattern_stack))
        dims = (self.standard.width, self.standard.height)
        for img in self._members():
            if (img.width, img.height) != dims:
                raise ValueError("all capture frames must share dimensions")

    def _members(self) -> Iterable[RasterImage]:
        yield self.standard
        for img in (self.black, self.parallel, self.perpendicular):
            if img is not None:
                yield img
        if self.pattern_stack is not None:
            yield from self.pattern_stack

    @property
    def width(self) -> int:
        return self.standard.width

    @property
    def height(self) -> int:
        return self.standard.height


def read_image(path) -> RasterImage:
    """Read a PNG or portable pixmap into linear float64 intensities.

    8-bit files are scaled by 1/255, 16-bit files by 1/65535. Color images
    come back as 3 channels in RGB order, grayscale as a single channel.
    """
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"no such image file: {path}")
    if path.suffix.lower() not in _SUPPORTED_SUFFIXES:
        raise ValueError(f"unsupported image format {path.suffix!r}: {path}")
    raw = cv2.imread(str(path), cv2.IMREAD_UNCHANGED)
    if raw is None:
        raise ValueError(f"could not decode image file: {path}")
    if raw.dtype == np.uint8:
        scale = 255.0
    elif raw.dtype == np.uint16:
        scale = 65535.0
    else:
        raise ValueError(f"unsupported sample type {raw.dtype} in {path}")
    px = raw.astype(np.float64) / scale
    if px.ndim == 3:
        if px.shape[2] == 4:
            px = px[:, :, :3]
        if px.shape[2] == 3:
            px = px[:, :, ::-1]  # BGR -> RGB
    return RasterImage(px)


def write_image(image: RasterImage, path, bit_depth: int = 16) -> Path:
    """Write an image, clamping intensities to [0, 1] on export.

    Only this boundary clamps; in-memory intensities stay unclamped.
    """
    if bit_depth not in (8, 16):
        raise ValueError(f"bit_depth must be 8 or 16, got {bit_depth}")
    if image.channels not in (1, 3):
        raise ValueError(f"can only write 1- or 3-channel images, got {image.channels}")
    path = Path(path)
    if path.suffix.lower() not in _SUPPORTED_SUFFIXES:
        raise ValueError(f"unsupported image format {path.suffix!r}: {path}")
    scale = 255.0 if bit_depth == 8 else 65535.0
    dtype = np.uint8 if bit_depth == 8 else np.uint16
    px = np.clip(image.pixels, 0.0, 1.0)
    quant = np.rint(px * scale).astype(dtype)
    if image.channels == 3:
        quant = quant[:, :, ::-1]  # RGB -> BGR
    else:
        quant = quant[:, :, 0]
    if path.suffix.lower() != ".png" and bit_depth == 16:
        # Portable pixmaps are written 16-bit big-endian by OpenCV and read
        # back symmetrically; nothing extra to do, this branch documents it.
        pass
    if not cv2.imwrite(str(path), quant):
        raise ValueError(f"failed to write image: {path}")
    return path


def assemble_channel_stack(planes: Mapping[str, RasterImage], mode: InputMode) -> ChannelStack:
    """Build the classifier input stack for `mode` from named planes.

    Raises ValueError when a plane the mode needs is missing or when the
    planes disagree in size.
    """
    selected = []
    for name in mode.plane_names:
        img = planes.get(name)
        if img is None:
            raise ValueError(f"mode {mode.name} needs channel {name!r} but it is missing")
        selected.append(img)
    return ChannelStack(mode=mode, planes=tuple(selected))


# --- capture directories ---------------------------------------------------

_PATTERN_NAME = "pattern_{:02d}.png"


def capture_file_names(pattern_count: int = PATTERN_COUNT) -> list:
    """Canonical file names inside one capture directory."""
    names = ["standard.png", "black.png", "parallel.png", "perpendicular.png"]
    names += [_PATTERN_NAME.format(i) for i in range(pattern_count)]
    return names


def load_capture_dir(path) -> CaptureSet:
    """Load a capture directory written by the simulator or CLI."""
    path = Path(path)
    if not path.is_dir():
        raise FileNotFoundError(f"no such capture directory: {path}")

    def _opt(name):
        file = path / name
        return read_image(file) if file.is_file() else None

    standard = path / "standard.png"
    if not standard.is_file():
        raise ValueError(f"capture directory without standard.png: {path}")
    stack = []
    for i in range(PATTERN_COUNT):
        file = path / _PATTERN_NAME.format(i)
        if not file.is_file():
            stack = None
            break
        stack.append(read_image(file))
    return CaptureSet(
        standard=read_image(standard),
        pattern_stack=tuple(stack) if stack else None,
        black=_opt("black.png"),
        parallel=_opt("parallel.png"),
        perpendicular=_opt("perpendicular.png"),
    )


def save_capture_dir(capture: CaptureSet, path, bit_depth: int = 16) -> Path:
    """Write all frames of a capture to one directory."""
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    write_image(capture.standard, path / "standard.png", bit_depth)
    if capture.black is not None:
        write_image(capture.black, path / "black.png", bit_depth)
    if capture.parallel is not None:
        write_image(capture.parallel, path / "parallel.png", bit_depth)
    if capture.perpendicular is not None:
        write_image(capture.perpendicular, path / "perpendicular.png", bit_depth)
    if capture.pattern_stack is not None:
        for i, frame in enumerate(capture.pattern_stack):
            write_image(frame, path / _PATTERN_NAME.format(i), bit_depth)
    return path


# --- manifests --------------------------------------------------------------

MANIFEST_VERSION = 1


@dataclass(frozen=True)
class ManifestEntry:
    """One berry capture referenced from a dataset manifest."""

    capture_id: str
    path: str  # capture directory, relative to the manifest
    cultivar: str
    impedance: Optional[float] = None
    sidecar: Optional[str] = None  # rectangle-label file, relative to the manifest

    def to_json_dict(self) -> dict:
        return {
            "id": self.capture_id,
            "path": self.path,
            "cultivar": self.cultivar,
            "impedance": self.impedance,
            "labels": self.sidecar,
        }


@dataclass(frozen=True)
class DatasetManifest:
    """Index of a dataset directory: version plus one entry per capture."""

    entries: tuple
    root: Optional[Path] = None
    version: int = MANIFEST_VERSION

    def __post_init__(self):
        object.__setattr__(self, "entries", tuple(self.entries))
        seen = set()
        for entry in self.entries:
            if entry.capture_id in seen:
                raise ValueError(f"duplicate capture id in manifest: {entry.capture_id}")
            seen.add(entry.capture_id)

    def entry(self, capture_id: str) -> ManifestEntry:
        for e in self.entries:
            if e.capture_id == capture_id:
                return e
        raise KeyError(f"unknown capture id: {capture_id}")

    def capture_path(self, entry) -> Path:
        if isinstance(entry, str):
            entry = self.entry(entry)
        if self.root is None:
            return Path(entry.path)
        return self.root / entry.path

    def sidecar_path(self, entry) -> Optional[Path]:
        if isinstance(entry, str):
            entry = self.entry(entry)
        if entry.sidecar is None:
            return None
        if self.root is None:
            return Path(entry.sidecar)
        return self.root / entry.sidecar


def save_manifest(manifest: DatasetManifest, path) -> Path:
    path = Path(path)
    doc = {
        "format_version": manifest.version,
        "entries": [e.to_json_dict() for e in manifest.entries],
    }
    path.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")
    return path


def load_manifest(path) -> DatasetManifest:
    """Load and validate a manifest; unknown versions and dangling capture
    paths are rejected."""
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"no such manifest: {path}")
    doc = json.loads(path.read_text())
    version = doc.get("format_version")
    if version != MANIFEST_VERSION:
        raise ValueError(f"unsupported manifest version {version!r} in {path}")
    entries = []
    for raw in doc.get("entries", []):
        entries.append(
            ManifestEntry(
                capture_id=str(raw["id"]),
                path=str(raw["path"]),
                cultivar=str(raw.get("cultivar", "")),
                impedance=None if raw.get("impedance") is None else float(raw["impedance"]),
                sidecar=raw.get("labels"),
            )
        )
    manifest = DatasetManifest(entries=tuple(entries), root=path.parent)
    for entry in manifest.entries:
        cap = manifest.capture_path(entry)
        if not cap.is_dir():
            raise ValueError(f"manifest entry {entry.capture_id!r} points at missing capture dir {cap}")
        side = manifest.sidecar_path(entry)
        if side is not None and not side.is_file():
            raise ValueError(f"manifest entry {entry.capture_id!r} points at missing label file {side}")
    return manifest
