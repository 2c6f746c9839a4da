"""Illumination channel separation.

Two independent decompositions of a scene's radiance are computed from the
capture frames:

* direct vs. global illumination, from per-pixel extrema over a stack of
  shifted-checkerboard projections and the projector's black level;
* specular vs. diffuse reflection, from a cross-polarized image pair.

Two direct/global formulations ship. ``as_written`` follows the published
update rules literally:

    direct = min - max / (b - 1)
    global = 2 * max - direct / (b + 1)

``reference`` inverts the two-component image formation with a projector
black level b exactly and is the pipeline default:

    direct = (max - min) / (1 - b)
    global = 2 * (min - b * max) / (1 - b**2)

both clamped at zero, with the clamped fraction reported.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence, Tuple

import numpy as np

from waxsep.imaging import CaptureSet, RasterImage


@dataclass(frozen=True)
class PatternSet:
    """Binary projection masks for the shifted-checkerboard protocol.

    ``offsets`` holds the 25 (dy, dx) shifts in row-major order (vertical
    shift outer, horizontal shift inner); ``masks`` holds one single-channel
    image per shift, 1.0 where the projector pixel is on.
    """

    cell_size: int
    width: int
    height: int
    offsets: tuple
    masks: tuple

    def __post_init__(self):
        object.__setattr__(self, "offsets", tuple(self.offsets))
        object.__setattr__(self, "masks", tuple(self.masks))
        if len(self.offsets) != len(self.masks):
            raise ValueError("offsets and masks must pair up")


@dataclass(frozen=True)
class BlackLevel:
    """Scalar projector black level for one capture session."""

    value: float
    source: str = "measured"

    def __post_init__(self):
        if not (0.0 <= self.value < 1.0):
            raise ValueError(f"black level must satisfy 0 <= b < 1, got {self.value}")


@dataclass(frozen=True)
class SeparationResult:
    """Separated illumination maps plus the parameters that produced them."""

    formulation: str
    b_value: float
    direct_map: Optional[RasterImage] = None
    global_map: Optional[RasterImage] = None
    diffuse_map: Optional[RasterImage] = None
    specular_map: Optional[RasterImage] = None
    clamp_fraction: float = 0.0

    def planes(self) -> dict:
        """Named planes for channel-stack assembly; absent maps are omitted."""
        out = {}
        for name, img in (
            ("direct", self.direct_map),
            ("global", self.global_map),
            ("diffuse", self.diffuse_map),
            ("specular", self.specular_map),
        ):
            if img is not None:
                out[name] = img
        return out


def generate_patterns(width: int, height: int, cell_size: int = 8) -> PatternSet:
    """Build the 25 shifted checkerboard masks for a frame size.

    The checkerboard has square cells of ``cell_size`` pixels with the
    top-left cell transparent at zero shift. Shifts run over a 5x5 grid
    {0, s, 2s, 3s, 4s} per axis with s = ceil(cell_size / 4), so the five
    positions per axis span exactly one cell.
    """
    if width < 1 or height < 1:
        raise ValueError("pattern frames need positive dimensions")
    if cell_size < 1:
        raise ValueError(f"cell_size must be >= 1, got {cell_size}")
    stride = math.ceil(cell_size / 4)
    shifts = [stride * i for i in range(5)]
    xs = np.arange(width, dtype=np.int64)[np.newaxis, :]
    ys = np.arange(height, dtype=np.int64)[:, np.newaxis]
    offsets = []
    masks = []
    for dy in shifts:
        for dx in shifts:
            lit = (((xs + dx) // cell_size) + ((ys + dy) // cell_size)) % 2 == 0
            offsets.append((dy, dx))
            masks.append(RasterImage(lit.astype(np.float64)))
    return PatternSet(
        cell_size=cell_size, width=width, height=height, offsets=tuple(offsets), masks=tuple(masks)
    )


def estimate_black_value(black: RasterImage, source: str = "measured") -> BlackLevel:
    """Mean intensity of the black-projection frame, over all pixels and
    channels."""
    return BlackLevel(value=float(np.mean(black.pixels)), source=source)


def _stack_tensor(stack: Sequence[RasterImage]) -> np.ndarray:
    frames = list(stack)
    if not frames:
        raise ValueError("empty pattern stack")
    shape = frames[0].pixels.shape
    for img in frames:
        if img.pixels.shape != shape:
            raise ValueError("pattern stack frames must share dimensions")
    return np.stack([img.pixels for img in frames], axis=0)


def separate_pattern_as_written(stack: Sequence[RasterImage], black: BlackLevel) -> SeparationResult:
    """Literal published update rules; kept for fidelity studies.

    The two rules are not a consistent inversion of the image formation, so
    the maps can leave [0, 1]; nothing is clamped here.
    """
    b = black.value
    if abs(b - 1.0) < 1e-12:
        raise ValueError("as-written separation undefined for b = 1")
    tensor = _stack_tensor(stack)
    mn = tensor.min(axis=0)
    mx = tensor.max(axis=0)
    direct = mn - mx / (b - 1.0)
    glob = 2.0 * mx - direct / (b + 1.0)
    return SeparationResult(
        formulation="as_written",
        b_value=b,
        direct_map=RasterImage(direct),
        global_map=RasterImage(glob),
    )


def separate_pattern_reference(stack: Sequence[RasterImage], black: BlackLevel) -> SeparationResult:
    """Exact inversion of the two-component formation with black level b.

    Negative intensities (noise can push either map below zero) are clamped
    to 0 and the clamped fraction is reported on the result.
    """
    b = black.value
    tensor = _stack_tensor(stack)
    mn = tensor.min(axis=0)
    mx = tensor.max(axis=0)
    direct = (mx - mn) / (1.0 - b)
    glob = 2.0 * (mn - b * mx) / (1.0 - b * b)
    clamped = int(np.count_nonzero(direct < 0.0)) + int(np.count_nonzero(glob < 0.0))
    total = direct.size + glob.size
    return SeparationResult(
        formulation="reference",
        b_value=b,
        direct_map=RasterImage(np.maximum(direct, 0.0)),
        global_map=RasterImage(np.maximum(glob, 0.0)),
        clamp_fraction=clamped / total,
    )


def separate_polarization(parallel: RasterImage, perpendicular: RasterImage) -> Tuple[RasterImage, RasterImage]:
    """Split a cross-polarized pair into (diffuse, specular).

    diffuse = 2 * perpendicular; specular = parallel - diffuse / 2. The
    identity specular + diffuse / 2 == parallel holds to float64 rounding.
    """
    if parallel.pixels.shape != perpendicular.pixels.shape:
        raise ValueError("polarization pair must share dimensions")
    diffuse = 2.0 * perpendicular.pixels
    specular = parallel.pixels - diffuse / 2.0
    return RasterImage(diffuse), RasterImage(specular)


def separate_capture(capture: CaptureSet, formulation: str = "reference") -> SeparationResult:
    """Run every separation a capture's frames allow and merge the maps.

    Needs the pattern stack plus black frame for direct/global and the
    polarization pair for diffuse/specular; whichever is present is used.
    """
    if formulation not in ("reference", "as_written"):
        raise ValueError(f"unknown formulation {formulation!r}")
    direct = glob = diffuse = specular = None
    b_value = 0.0
    clamp_fraction = 0.0
    if capture.pattern_stack is not None:
        if capture.black is None:
            raise ValueError("pattern stack present but black frame missing")
        black = estimate_black_value(capture.black)
        b_value = black.value
        fn = separate_pattern_reference if formulation == "reference" else separate_pattern_as_written
        sep = fn(capture.pattern_stack, black)
        direct, glob = sep.direct_map, sep.global_map
        clamp_fraction = sep.clamp_fraction
    if capture.parallel is not None and capture.perpendicular is not None:
        diffuse, specular = separate_polarization(capture.parallel, capture.perpendicular)
    return SeparationResult(
        formulation=formulation,
        b_value=b_value,
        direct_map=direct,
        global_map=glob,
        diffuse_map=diffuse,
        specular_map=specular,
        clamp_fraction=clamp_fraction,
    )


def capture_planes(capture: CaptureSet, separation: SeparationResult) -> dict:
    """All named planes available for stack assembly from one capture."""
    planes = {"standard": capture.standard}
    planes.update(separation.planes())
    return planes
