"""Synthetic berry scenes with exact ground truth.

A scene is a single shaded berry disk on a near-black background, with an
optional stalk stub, procedural wax-bloom patches and four consistent
illumination maps:

    direct + global == diffuse + specular == total radiance

Wax patches raise diffuse reflection and the directly scattered share and
suppress the specular highlight; wax-free skin carries a localized specular
lobe. Those contrasts are free parameters of the simulator, chosen so the
separated channels carry more class signal than raw intensity does.

Captures are synthesized under the two-component image formation with a
projector black level b: a pattern frame sees

    (b + (1 - b) * mask) * direct + (1 + b) / 2 * global + noise

which the reference separation inverts exactly. The black frame is the
uniform level b plus noise, the fully lit frame is direct + global, and the
polarization pair is (specular + diffuse / 2, diffuse / 2).

Noise is a per-pixel Gaussian field with standard deviation
``noise_sigma``. By default (``noise_mode="sensor"``) one field is drawn
per capture session and shared by all of its frames, modeling sensor
pattern noise at fixed exposure; ``noise_mode="frame"`` draws a fresh field
per frame instead. Per-frame noise biases the per-pixel extrema over the
25-frame stack by roughly 3.2 sigma, which no max/min separation can undo,
so the session-noise default is what keeps noisy stack inversion within
2 sigma.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence

import cv2
import numpy as np

from waxsep.classes import (
    SCENE_BACKGROUND,
    SCENE_NOWAX,
    SCENE_PEDICLE,
    SCENE_WAX,
)
from waxsep.imaging import (
    CaptureSet,
    DatasetManifest,
    ManifestEntry,
    RasterImage,
    save_capture_dir,
    save_manifest,
)
from waxsep.labels import LabelSidecar, RectangleLabel, save_sidecar
from waxsep.lightsep import PatternSet, generate_patterns

_WAX_TINT = np.array([0.75, 0.78, 0.82])
_PEDICLE_COLOR = np.array([0.36, 0.27, 0.16])
_HIGHLIGHT_STRENGTH = 0.35
_SHEEN = 0.02
_DIRECT_SHARE_SKIN = 0.42
_DIRECT_SHARE_WAX_BOOST = 0.33


@dataclass(frozen=True)
class SceneSpec:
    """Parameters of one synthetic berry scene."""

    width: int
    height: int
    center: tuple
    radius: int
    base_color: tuple = (0.30, 0.18, 0.26)
    wax_coverage: float = 0.5
    wax_patch_scale: float = 0.25
    pedicle: bool = True
    background_level: float = 0.02
    ambient: float = 0.03
    noise_sigma: float = 0.01
    noise_mode: str = "sensor"
    seed: int = 0

    def __post_init__(self):
        if self.width < 8 or self.height < 8:
            raise ValueError("scene frames need at least 8x8 pixels")
        if self.radius < 2:
            raise ValueError(f"berry radius must be >= 2, got {self.radius}")
        cx, cy = self.center
        margin = 2
        if (
            cx - self.radius < margin
            or cy - self.radius < margin
            or cx + self.radius > self.width - 1 - margin
            or cy + self.radius > self.height - 1 - margin
        ):
            raise ValueError("berry disk must stay inside the frame with a 2-pixel margin")
        if not (0.0 <= self.wax_coverage <= 1.0):
            raise ValueError(f"wax coverage must be in [0, 1], got {self.wax_coverage}")
        if not (0.0 <= self.ambient < 1.0):
            raise ValueError(f"ambient level must satisfy 0 <= b < 1, got {self.ambient}")
        if self.noise_sigma < 0:
            raise ValueError("noise sigma must be >= 0")
        if self.noise_mode not in ("sensor", "frame"):
            raise ValueError(f"noise_mode must be 'sensor' or 'frame', got {self.noise_mode!r}")


@dataclass(frozen=True)
class GroundTruthScene:
    """Rendered scene: per-pixel labels plus the four illumination maps."""

    spec: SceneSpec
    labels: np.ndarray  # uint8 (h, w), values from classes.SCENE_*
    direct_map: RasterImage
    global_map: RasterImage
    diffuse_map: RasterImage
    specular_map: RasterImage
    wax_proportion: float


@dataclass(frozen=True)
class CultivarProfile:
    """Per-cultivar wax coverage distribution and impedance response."""

    name: str
    coverage_mean: float
    coverage_spread: float
    alpha: float
    beta: float
    sigma_z: float
    base_color: tuple = (0.30, 0.18, 0.26)


@dataclass(frozen=True)
class ImpedanceRecord:
    """One berry's electrical impedance with its ground-truth proportion."""

    capture_id: str
    cultivar: str
    wax_proportion: float
    impedance: float


_DEFAULT_CULTIVARS = (
    # name, coverage mean, spread, berry color
    ("Morio Muskat", 0.18, 0.06, (0.42, 0.48, 0.22)),
    ("Dakapo", 0.30, 0.07, (0.30, 0.12, 0.25)),
    ("Seibel 7511", 0.40, 0.07, (0.22, 0.10, 0.20)),
    ("Sauvignon Blanc", 0.50, 0.07, (0.35, 0.45, 0.20)),
    ("Riesling", 0.60, 0.06, (0.45, 0.47, 0.24)),
    ("Cabernet Sauvignon", 0.72, 0.06, (0.16, 0.10, 0.22)),
)


def default_profiles(target_r: float = 0.76, alpha: float = 8.0, beta: float = 0.5) -> tuple:
    """Six cultivar profiles whose pooled population correlates proportion
    with impedance at roughly ``target_r``.

    The impedance noise is shared across profiles and solved from the
    pooled coverage variance: corr = alpha*sigma_p / sqrt(alpha^2 sigma_p^2
    + sigma_z^2), so sigma_z = alpha * sigma_p * sqrt(1/r^2 - 1).
    """
    if not (0.0 < target_r < 1.0):
        raise ValueError(f"target correlation must be in (0, 1), got {target_r}")
    means = np.array([m for _, m, _, _ in _DEFAULT_CULTIVARS])
    spreads = np.array([s for _, _, s, _ in _DEFAULT_CULTIVARS])
    sigma_p = math.sqrt(float(np.mean(spreads**2)) + float(np.var(means)))
    sigma_z = alpha * sigma_p * math.sqrt(1.0 / target_r**2 - 1.0)
    return tuple(
        CultivarProfile(
            name=name,
            coverage_mean=mean,
            coverage_spread=spread,
            alpha=alpha,
            beta=beta,
            sigma_z=sigma_z,
            base_color=color,
        )
        for name, mean, spread, color in _DEFAULT_CULTIVARS
    )


def _wax_mask(rng: np.random.Generator, disk: np.ndarray, spec: SceneSpec) -> np.ndarray:
    """Procedural wax patches: smooth blob noise thresholded to coverage.

    The threshold is bisected until the covered fraction of berry pixels is
    within +-2% of the target (or as close as pixel quantization allows).
    """
    target = spec.wax_coverage
    if target <= 0.0:
        return np.zeros_like(disk)
    if target >= 1.0:
        return disk.copy()
    h, w = disk.shape
    feature = max(2.0, spec.wax_patch_scale * spec.radius)
    gh = max(2, int(math.ceil(h / feature)) + 1)
    gw = max(2, int(math.ceil(w / feature)) + 1)
    coarse = rng.standard_normal((gh, gw))
    field = cv2.resize(coarse, (w, h), interpolation=cv2.INTER_CUBIC)
    vals = field[disk]
    lo = float(vals.min()) - 1.0
    hi = float(vals.max()) + 1.0
    thr = 0.5 * (lo + hi)
    for _ in range(64):
        thr = 0.5 * (lo + hi)
        frac = float(np.mean(vals >= thr))
        if abs(frac - target) <= 0.02:
            break
        if frac > target:
            lo = thr
        else:
            hi = thr
    return disk & (field >= thr)


def render_scene(spec: SceneSpec) -> GroundTruthScene:
    """Render labels and the four consistent illumination maps."""
    rng = np.random.default_rng(np.random.SeedSequence((spec.seed, 0)))
    h, w = spec.height, spec.width
    cx, cy = spec.center
    radius = float(spec.radius)
    ys = np.arange(h, dtype=np.float64)[:, None]
    xs = np.arange(w, dtype=np.float64)[None, :]
    d2 = (xs - cx) ** 2 + (ys - cy) ** 2
    disk = d2 <= radius**2

    nz = np.sqrt(np.clip(1.0 - d2 / radius**2, 0.0, 1.0))
    shade = 0.25 + 0.75 * nz

    wax = _wax_mask(rng, disk, spec)
    labels = np.full((h, w), SCENE_BACKGROUND, dtype=np.uint8)
    labels[disk] = SCENE_NOWAX
    labels[wax] = SCENE_WAX

    pedicle = np.zeros((h, w), dtype=bool)
    if spec.pedicle:
        pw = max(2, spec.radius // 4)
        ph = max(2, spec.radius // 3)
        x0 = max(0, cx - pw // 2)
        x1 = min(w, x0 + pw)
        y1 = max(0, cy - spec.radius + 1)
        y0 = max(0, y1 - ph)
        if y1 > y0 and x1 > x0:
            region = np.zeros((h, w), dtype=bool)
            region[y0:y1, x0:x1] = True
            pedicle = region & (labels == SCENE_BACKGROUND)
            labels[pedicle] = SCENE_PEDICLE

    # Highlight lobe, offset toward the light.
    lx = cx - 0.35 * radius
    ly = cy - 0.35 * radius
    lobe = np.exp(-((xs - lx) ** 2 + (ys - ly) ** 2) / (2.0 * (0.30 * radius) ** 2))

    base = np.asarray(spec.base_color, dtype=np.float64)
    waxf = wax.astype(np.float64)[:, :, None]
    diskf = disk.astype(np.float64)[:, :, None]
    pedf = pedicle.astype(np.float64)[:, :, None]
    bgf = 1.0 - diskf - pedf
    shade3 = shade[:, :, None]
    lobe3 = lobe[:, :, None]

    skin_color = (1.0 - 0.45 * waxf) * base[None, None, :] + 0.45 * waxf * _WAX_TINT[None, None, :]
    diffuse = diskf * shade3 * skin_color * (1.0 + 0.25 * waxf)
    diffuse = diffuse + pedf * 0.85 * _PEDICLE_COLOR[None, None, :]
    diffuse = diffuse + bgf * 0.9 * spec.background_level

    specular = diskf * ((1.0 - 0.9 * waxf) * _HIGHLIGHT_STRENGTH * lobe3 + _SHEEN * shade3)
    specular = specular + pedf * 0.02
    specular = specular + bgf * 0.1 * spec.background_level

    total = diffuse + specular
    share = diskf * (_DIRECT_SHARE_SKIN + _DIRECT_SHARE_WAX_BOOST * waxf) + (pedf + bgf) * 0.5
    direct = share * total
    glob = total - direct

    n_wax = int(wax.sum())
    n_berry = int(disk.sum())
    return GroundTruthScene(
        spec=spec,
        labels=labels,
        direct_map=RasterImage(direct),
        global_map=RasterImage(glob),
        diffuse_map=RasterImage(diffuse),
        specular_map=RasterImage(specular),
        wax_proportion=n_wax / n_berry,
    )


def simulate_capture(scene: GroundTruthScene, patterns: Optional[PatternSet] = None) -> CaptureSet:
    """Synthesize every capture frame for a rendered scene.

    Frame formation (b = ambient level, D/G/S/F the scene maps):

        pattern_k      = (b + (1 - b) * mask_k) * D + (1 + b) / 2 * G + n
        standard       = D + G + n
        black          = b + n
        parallel       = S + F / 2 + n
        perpendicular  = F / 2 + n

    In the default "sensor" noise mode one noise field n is drawn for the
    whole session; in "frame" mode each frame draws a fresh field (order:
    standard, black, parallel, perpendicular, then the pattern stack).
    """
    spec = scene.spec
    if patterns is None:
        patterns = generate_patterns(spec.width, spec.height)
    if patterns.width != spec.width or patterns.height != spec.height:
        raise ValueError("pattern set dimensions do not match the scene")
    rng = np.random.default_rng(np.random.SeedSequence((spec.seed, 1)))
    D = scene.direct_map.pixels
    G = scene.global_map.pixels
    S = scene.specular_map.pixels
    F = scene.diffuse_map.pixels
    b = spec.ambient
    sigma = spec.noise_sigma

    if sigma == 0.0:
        def noise():
            return 0.0
    elif spec.noise_mode == "sensor":
        session = rng.normal(0.0, sigma, D.shape)

        def noise():
            return session
    else:
        def noise():
            return rng.normal(0.0, sigma, D.shape)

    standard = RasterImage(D + G + noise())
    black = RasterImage(np.full_like(D, b) + noise())
    parallel = RasterImage(S + F / 2.0 + noise())
    perpendicular = RasterImage(F / 2.0 + noise())
    frames = []
    for mask in patterns.masks:
        m = mask.pixels  # (h, w, 1) broadcasts over channels
        frames.append(RasterImage((b + (1.0 - b) * m) * D + (1.0 + b) / 2.0 * G + noise()))
    return CaptureSet(
        standard=standard,
        pattern_stack=tuple(frames),
        black=black,
        parallel=parallel,
        perpendicular=perpendicular,
    )


def synthesize_impedance(
    proportion: float, profile: CultivarProfile, rng: np.random.Generator
) -> float:
    """Draw one impedance value: alpha * proportion + beta + noise,
    truncated at zero."""
    z = profile.alpha * proportion + profile.beta + rng.normal(0.0, profile.sigma_z)
    return max(0.0, float(z))


def synthesize_population(
    profiles: Sequence[CultivarProfile],
    per_cultivar: int,
    seed: int = 0,
    width: int = 48,
    height: int = 48,
) -> list:
    """Render a population in memory and return its impedance records.

    Lightweight companion to `generate_dataset` for correlation studies:
    no capture frames are synthesized or written.
    """
    records = []
    for ci, profile in enumerate(profiles):
        for bi in range(per_cultivar):
            rng = np.random.default_rng(np.random.SeedSequence((seed, ci, bi)))
            spec = _sample_scene_spec(rng, profile, width, height, 0.0, 0.0, "sensor")
            scene = render_scene(spec)
            records.append(
                ImpedanceRecord(
                    capture_id=f"{_slug(profile.name)}_{bi:03d}",
                    cultivar=profile.name,
                    wax_proportion=scene.wax_proportion,
                    impedance=synthesize_impedance(scene.wax_proportion, profile, rng),
                )
            )
    return records


def _slug(name: str) -> str:
    return name.lower().replace(" ", "_")


def _sample_scene_spec(
    rng: np.random.Generator,
    profile: CultivarProfile,
    width: int,
    height: int,
    ambient: float,
    noise_sigma: float,
    noise_mode: str,
) -> SceneSpec:
    max_radius = min(width, height) // 2 - 8
    min_radius = max(8, int(0.7 * max_radius))
    radius = int(rng.integers(min_radius, max_radius + 1))
    jitter = max(1, min(width, height) // 2 - radius - 3)
    cx = width // 2 + int(rng.integers(-jitter, jitter + 1))
    cy = height // 2 + int(rng.integers(-jitter, jitter + 1))
    coverage = float(np.clip(rng.normal(profile.coverage_mean, profile.coverage_spread), 0.02, 0.98))
    color = np.clip(np.asarray(profile.base_color) + rng.normal(0.0, 0.02, 3), 0.05, 0.60)
    return SceneSpec(
        width=width,
        height=height,
        center=(cx, cy),
        radius=radius,
        base_color=tuple(float(c) for c in color),
        wax_coverage=coverage,
        pedicle=True,
        ambient=ambient,
        noise_sigma=noise_sigma,
        noise_mode=noise_mode,
        seed=int(rng.integers(2**31)),
    )


# --- ground-truth rectangles -------------------------------------------------


def _pure_windows(mask: np.ndarray, side: int) -> np.ndarray:
    """Top-left corners (y, x) of all side x side windows fully inside mask."""
    h, w = mask.shape
    if side > h or side > w:
        return np.empty((0, 2), dtype=np.int64)
    ii = np.zeros((h + 1, w + 1), dtype=np.int64)
    ii[1:, 1:] = np.cumsum(np.cumsum(mask.astype(np.int64), axis=0), axis=1)
    sums = ii[side:, side:] - ii[:-side, side:] - ii[side:, :-side] + ii[:-side, :-side]
    return np.argwhere(sums == side * side)


def _greedy_rects(mask: np.ndarray, label: str, target_pixels: int, sides=(6, 4, 3, 2, 1)) -> list:
    """Disjoint class-pure rectangles in scanline order until the pixel
    target is met; falls back to single pixels so any non-empty class
    yields at least one rectangle."""
    rects = []
    used = np.zeros_like(mask, dtype=bool)
    covered = 0
    for side in sides:
        if covered >= target_pixels:
            break
        for y, x in _pure_windows(mask & ~used, side):
            if used[y : y + side, x : x + side].any():
                continue
            used[y : y + side, x : x + side] = True
            rects.append(RectangleLabel(x=int(x), y=int(y), width=side, height=side, label=label))
            covered += side * side
            if covered >= target_pixels:
                break
    return rects


def ground_truth_rectangles(scene: GroundTruthScene, target_pixels: int = 250) -> tuple:
    """Perfect rectangle labels for both tasks, derived from scene truth.

    Every rectangle is class-pure by construction, so pixel counts per
    class equal the summed rectangle areas exactly.
    """
    labels = scene.labels
    cx, cy = scene.spec.center
    radius = scene.spec.radius
    berry = (labels == SCENE_NOWAX) | (labels == SCENE_WAX)
    rects = []

    # Detection: one centered square on the berry ...
    side = int(radius * math.sqrt(2.0)) - 1
    while side >= 1:
        x0, y0 = cx - side // 2, cy - side // 2
        if x0 >= 0 and y0 >= 0 and berry[y0 : y0 + side, x0 : x0 + side].all():
            rects.append(RectangleLabel(x=x0, y=y0, width=side, height=side, label="berry"))
            break
        side -= 1
    # ... and background patches near the corners.
    h, w = labels.shape
    for side in (8, 4, 2, 1):
        corners = [
            (1, 1),
            (w - 1 - side, 1),
            (1, h - 1 - side),
            (w - 1 - side, h - 1 - side),
        ]
        good = [
            (x, y)
            for x, y in corners
            if x >= 0 and y >= 0 and (labels[y : y + side, x : x + side] == SCENE_BACKGROUND).all()
        ]
        if len(good) == 4:
            rects.extend(
                RectangleLabel(x=x, y=y, width=side, height=side, label="background") for x, y in good
            )
            break

    # Segmentation: pure windows per class.
    rects.extend(_greedy_rects(labels == SCENE_WAX, "wax", target_pixels))
    rects.extend(_greedy_rects(labels == SCENE_NOWAX, "nowax", target_pixels))
    other = (labels == SCENE_BACKGROUND) | (labels == SCENE_PEDICLE)
    rects.extend(_greedy_rects(other, "other", target_pixels))
    return tuple(rects)


# --- dataset generation -------------------------------------------------------


def save_truth(labels: np.ndarray, path) -> Path:
    """Write a ground-truth label map as raw 8-bit class ids."""
    path = Path(path)
    if not cv2.imwrite(str(path), labels.astype(np.uint8)):
        raise ValueError(f"failed to write truth map: {path}")
    return path


def load_truth(path) -> np.ndarray:
    path = Path(path)
    raw = cv2.imread(str(path), cv2.IMREAD_UNCHANGED)
    if raw is None:
        raise FileNotFoundError(f"no such truth map: {path}")
    if raw.ndim != 2:
        raise ValueError(f"truth map must be single-channel: {path}")
    return raw.astype(np.uint8)


def generate_dataset(
    out_dir,
    berries_per_cultivar: int,
    profiles: Optional[Sequence[CultivarProfile]] = None,
    seed: int = 0,
    width: int = 96,
    height: int = 96,
    ambient: float = 0.03,
    noise_sigma: float = 0.01,
    noise_mode: str = "sensor",
    target_label_pixels: int = 250,
    bit_depth: int = 16,
) -> DatasetManifest:
    """Render, synthesize and write a complete dataset directory.

    Layout: one capture directory per berry (frames as PNG, plus scene.json
    and truth.png), one labels.json sidecar per berry, and manifest.json at
    the root. Same seed, same arguments -> byte-identical manifest and
    sidecars.
    """
    if berries_per_cultivar < 1:
        raise ValueError("berries_per_cultivar must be >= 1")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    if profiles is None:
        profiles = default_profiles()
    patterns = generate_patterns(width, height)
    entries = []
    for ci, profile in enumerate(profiles):
        for bi in range(berries_per_cultivar):
            rng = np.random.default_rng(np.random.SeedSequence((seed, ci, bi)))
            spec = _sample_scene_spec(rng, profile, width, height, ambient, noise_sigma, noise_mode)
            scene = render_scene(spec)
            capture = simulate_capture(scene, patterns)
            impedance = synthesize_impedance(scene.wax_proportion, profile, rng)

            capture_id = f"{_slug(profile.name)}_{bi:03d}"
            cap_dir = out_dir / capture_id
            save_capture_dir(capture, cap_dir, bit_depth=bit_depth)
            save_truth(scene.labels, cap_dir / "truth.png")
            scene_doc = {
                "capture_id": capture_id,
                "cultivar": profile.name,
                "wax_proportion": scene.wax_proportion,
                "impedance": impedance,
                "center": [spec.center[0], spec.center[1]],
                "radius": spec.radius,
                "coverage_target": spec.wax_coverage,
                "ambient": spec.ambient,
                "noise_sigma": spec.noise_sigma,
                "noise_mode": spec.noise_mode,
                "seed": spec.seed,
            }
            (cap_dir / "scene.json").write_text(json.dumps(scene_doc, indent=2, sort_keys=True) + "\n")

            sidecar_name = f"{capture_id}.labels.json"
            sidecar = LabelSidecar(
                capture_id=capture_id,
                rectangles=ground_truth_rectangles(scene, target_label_pixels),
                annotator="simulator",
            )
            save_sidecar(sidecar, out_dir / sidecar_name)
            entries.append(
                ManifestEntry(
                    capture_id=capture_id,
                    path=capture_id,
                    cultivar=profile.name,
                    impedance=impedance,
                    sidecar=sidecar_name,
                )
            )
    manifest = DatasetManifest(entries=tuple(entries), root=out_dir)
    save_manifest(manifest, out_dir / "manifest.json")
    return manifest
