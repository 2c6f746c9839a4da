"""Cross-validated evaluation of the pixel classifiers plus correlation
statistics and plot-ready report files.

The evaluation protocol: captures are split into k stratified folds; for
every requested input mode and every fold, both networks are trained on
pixels extracted from the training folds only, then scored on the held-out
captures. Berry accuracy is per-pixel agreement of the detection net over
the whole frame; wax accuracy runs the full chain (template search, region
estimate, segmentation) and scores only pixels inside the analysed region.

Reference accuracies of 0.979 (berry) and 0.973 (wax) were reported for the
original field-captured dataset with all five planes as input; they
characterize that dataset and are not reproduction targets for synthetic
scenes.
"""

from __future__ import annotations

import json
import logging
import math
import time
from dataclasses import dataclass
from pathlib import Path
from typing import NamedTuple, Optional, Sequence

import numpy as np

from waxsep.classes import (
    SEG_OUTSIDE,
    TASK_DETECTION,
    TASK_SEGMENTATION,
    scene_to_detection,
    scene_to_segmentation,
)
from waxsep.cnn import init_model
from waxsep.detect import CnnClassifier, estimate_aoi, multiscale_search
from waxsep.extraction import extract_training_pixels, load_capture_products
from waxsep.imaging import DatasetManifest, InputMode
from waxsep.scenesim import load_truth
from waxsep.segment import classify_aoi, quantify_wax
from waxsep.training import TrainConfig, train

logger = logging.getLogger(__name__)

# Fixed mode order used for seeding and report layout, so the report is
# independent of the order modes are passed in.
CANONICAL_MODES = (InputMode.I, InputMode.II, InputMode.III, InputMode.IV)
_MODE_ORDINAL = {mode: i for i, mode in enumerate(CANONICAL_MODES)}


def canonical_modes(modes: Sequence[InputMode]) -> tuple:
    """Unique requested modes in canonical order."""
    wanted = set(modes)
    if not wanted:
        raise ValueError("at least one input mode is required")
    for mode in wanted:
        if mode not in _MODE_ORDINAL:
            raise ValueError(f"unknown input mode: {mode!r}")
    return tuple(m for m in CANONICAL_MODES if m in wanted)


# --- fold planning -----------------------------------------------------------


@dataclass(frozen=True)
class FoldPlan:
    """Capture-id to fold-index assignment for k-fold evaluation."""

    k: int
    seed: int
    assignment: dict

    def __post_init__(self):
        if self.k < 2:
            raise ValueError("k must be >= 2")
        for cid, fold in self.assignment.items():
            if not (0 <= fold < self.k):
                raise ValueError(f"capture {cid!r} assigned to fold {fold} outside [0, {self.k})")

    def fold_ids(self, fold: int) -> tuple:
        """Held-out capture ids of one fold, sorted."""
        return tuple(sorted(c for c, f in self.assignment.items() if f == fold))

    def train_ids(self, fold: int) -> tuple:
        """Training capture ids for one fold (everything else), sorted."""
        return tuple(sorted(c for c, f in self.assignment.items() if f != fold))

    @property
    def fold_sizes(self) -> tuple:
        sizes = [0] * self.k
        for fold in self.assignment.values():
            sizes[fold] += 1
        return tuple(sizes)


def plan_folds(manifest: DatasetManifest, k: int = 3, seed: int = 0) -> FoldPlan:
    """Stratified fold assignment: within each cultivar the captures are
    shuffled (seeded) and dealt round-robin; one global deal counter keeps
    overall fold sizes within 1 and per-cultivar counts within 1.
    """
    if k < 2:
        raise ValueError("k must be >= 2")
    if len(manifest.entries) < k:
        raise ValueError(f"cannot split {len(manifest.entries)} captures into {k} folds")
    groups: dict = {}
    for entry in manifest.entries:
        groups.setdefault(entry.cultivar, []).append(entry.capture_id)
    rng = np.random.default_rng(np.random.SeedSequence((int(seed), 0xF01D)))
    assignment: dict = {}
    counter = 0
    for cultivar in sorted(groups):
        ids = sorted(groups[cultivar])
        for j in rng.permutation(len(ids)):
            assignment[ids[j]] = counter % k
            counter += 1
    return FoldPlan(k=k, seed=int(seed), assignment=assignment)


# --- accuracy ----------------------------------------------------------------


def _as_label_array(value) -> np.ndarray:
    labels = getattr(value, "labels", value)
    arr = np.asarray(labels)
    if arr.ndim != 2:
        raise ValueError("label maps must be 2-d")
    return arr


def pixel_accuracy(predicted, truth, ignore_label: Optional[int] = None) -> float:
    """Fraction of pixels where the maps agree.

    Accepts 2-d arrays or objects with a ``labels`` attribute. Pixels whose
    value equals ``ignore_label`` in either map are excluded; for the wax
    task that restricts scoring to the analysed region.
    """
    pred = _as_label_array(predicted)
    true = _as_label_array(truth)
    if pred.shape != true.shape:
        raise ValueError(f"label map shapes differ: {pred.shape} vs {true.shape}")
    if ignore_label is None:
        mask = np.ones(pred.shape, dtype=bool)
    else:
        mask = (pred != ignore_label) & (true != ignore_label)
    total = int(np.count_nonzero(mask))
    if total == 0:
        raise ValueError("no pixels left to score after exclusion")
    return float(np.count_nonzero(pred[mask] == true[mask]) / total)


# --- Pearson correlation -----------------------------------------------------


class PearsonResult(NamedTuple):
    r: float
    p: float
    n: int


def _beta_continued_fraction(a: float, b: float, x: float) -> float:
    # Lentz's algorithm for the continued fraction of the regularized
    # incomplete beta function (converges fast for x < (a+1)/(a+b+2)).
    max_iterations = 400
    eps = 3e-16
    tiny = 1e-300
    qab = a + b
    qap = a + 1.0
    qam = a - 1.0
    c = 1.0
    d = 1.0 - qab * x / qap
    if abs(d) < tiny:
        d = tiny
    d = 1.0 / d
    h = d
    for m in range(1, max_iterations + 1):
        m2 = 2 * m
        coef = m * (b - m) * x / ((qam + m2) * (a + m2))
        d = 1.0 + coef * d
        if abs(d) < tiny:
            d = tiny
        c = 1.0 + coef / c
        if abs(c) < tiny:
            c = tiny
        d = 1.0 / d
        h *= d * c
        coef = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2))
        d = 1.0 + coef * d
        if abs(d) < tiny:
            d = tiny
        c = 1.0 + coef / c
        if abs(c) < tiny:
            c = tiny
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < eps:
            return h
    raise ArithmeticError("incomplete beta continued fraction did not converge")


def regularized_incomplete_beta(a: float, b: float, x: float) -> float:
    """I_x(a, b), accurate to about 1e-10 over the parameter range used for
    t-distribution tails."""
    if a <= 0.0 or b <= 0.0:
        raise ValueError("beta parameters must be positive")
    if x <= 0.0:
        return 0.0
    if x >= 1.0:
        return 1.0
    ln_front = (
        math.lgamma(a + b)
        - math.lgamma(a)
        - math.lgamma(b)
        + a * math.log(x)
        + b * math.log1p(-x)
    )
    front = math.exp(ln_front)
    if x < (a + 1.0) / (a + b + 2.0):
        return front * _beta_continued_fraction(a, b, x) / a
    return 1.0 - front * _beta_continued_fraction(b, a, 1.0 - x) / b


def pearson(x, y) -> PearsonResult:
    """Sample correlation with a two-sided p-value.

    The p-value tests r against a t distribution with n-2 degrees of
    freedom via t = r*sqrt((n-2)/(1-r^2)); both tails are evaluated in one
    incomplete-beta call, p = I_{nu/(nu+t^2)}(nu/2, 1/2), which stays exact
    down to denormal-small p instead of cancelling against 1.
    """
    xv = np.asarray(x, dtype=np.float64)
    yv = np.asarray(y, dtype=np.float64)
    if xv.ndim != 1 or yv.ndim != 1:
        raise ValueError("correlation inputs must be 1-d vectors")
    if xv.shape != yv.shape:
        raise ValueError(f"length mismatch: {xv.shape[0]} vs {yv.shape[0]}")
    n = int(xv.shape[0])
    if n < 3:
        raise ValueError("correlation needs at least 3 samples")
    dx = xv - xv.mean()
    dy = yv - yv.mean()
    sxx = float(dx @ dx)
    syy = float(dy @ dy)
    if sxx == 0.0 or syy == 0.0:
        raise ValueError("correlation is undefined for a zero-variance input")
    r = float(dx @ dy) / math.sqrt(sxx * syy)
    r = max(-1.0, min(1.0, r))
    nu = n - 2
    if 1.0 - r * r <= 0.0:
        return PearsonResult(r=r, p=0.0, n=n)
    t2 = r * r * nu / (1.0 - r * r)
    p = regularized_incomplete_beta(0.5 * nu, 0.5, nu / (nu + t2))
    return PearsonResult(r=r, p=min(1.0, max(0.0, p)), n=n)


# --- cross-validation --------------------------------------------------------


@dataclass(frozen=True)
class EvaluationConfig:
    """Knobs for one cross-validation run; defaults suit synthetic sets."""

    k: int = 3
    seed: int = 0
    pixel_cap: Optional[int] = 4000
    iterations: int = 800
    batch_size: int = 64
    base_lr: float = 1e-4
    momentum: float = 0.9
    weight_decay: float = 5e-4
    schedule_scale: float = 0.01
    formulation: str = "reference"

    def train_config(self) -> TrainConfig:
        return TrainConfig(
            iterations=self.iterations,
            batch_size=self.batch_size,
            base_lr=self.base_lr,
            momentum=self.momentum,
            weight_decay=self.weight_decay,
            schedule_scale=self.schedule_scale,
        )


@dataclass(frozen=True)
class ModeResult:
    """Accuracies for one input mode, per fold and averaged."""

    mode: str
    berry_fold_accuracies: tuple
    wax_fold_accuracies: tuple
    evaluated: int
    detected: int

    def __post_init__(self):
        for acc in (*self.berry_fold_accuracies, *self.wax_fold_accuracies):
            if not (0.0 <= acc <= 1.0):
                raise ValueError(f"accuracy {acc} outside [0, 1]")

    @property
    def berry_accuracy(self) -> float:
        return float(np.mean(self.berry_fold_accuracies))

    @property
    def wax_accuracy(self) -> float:
        return float(np.mean(self.wax_fold_accuracies))

    def to_json_dict(self) -> dict:
        return {
            "mode": self.mode,
            "berry_fold_accuracies": list(self.berry_fold_accuracies),
            "wax_fold_accuracies": list(self.wax_fold_accuracies),
            "berry_accuracy": self.berry_accuracy,
            "wax_accuracy": self.wax_accuracy,
            "evaluated": self.evaluated,
            "detected": self.detected,
        }


class FiveNumber(NamedTuple):
    minimum: float
    q1: float
    median: float
    q3: float
    maximum: float


def quartiles(values) -> FiveNumber:
    arr = np.asarray(values, dtype=np.float64)
    if arr.size == 0:
        raise ValueError("cannot summarize an empty sample")
    lo, q1, med, q3, hi = np.percentile(arr, [0, 25, 50, 75, 100])
    return FiveNumber(float(lo), float(q1), float(med), float(q3), float(hi))


@dataclass(frozen=True)
class CultivarStats:
    """Predicted wax-proportion and impedance spreads for one cultivar."""

    cultivar: str
    count: int
    proportion: FiveNumber
    impedance: FiveNumber

    def to_json_dict(self) -> dict:
        return {
            "cultivar": self.cultivar,
            "count": self.count,
            "proportion": self.proportion._asdict(),
            "impedance": self.impedance._asdict(),
        }


class CorrelationPair(NamedTuple):
    capture_id: str
    cultivar: str
    proportion: float
    impedance: float


@dataclass(frozen=True)
class EvaluationReport:
    """Everything one cross-validation run produced."""

    k: int
    seed: int
    fold_sizes: tuple
    mode_results: tuple
    cultivar_stats: tuple
    pairs: tuple
    correlation: Optional[PearsonResult]
    correlation_mode: Optional[str]
    compute_seconds: tuple  # ((mode name, wall seconds), ...); local timings only

    def __post_init__(self):
        if self.correlation is not None and self.correlation.n != len(self.pairs):
            raise ValueError("correlation sample size disagrees with the stored pairs")

    def mode_result(self, mode_name: str) -> ModeResult:
        for result in self.mode_results:
            if result.mode == mode_name:
                return result
        raise KeyError(f"no results for mode {mode_name!r}")

    def to_json_dict(self) -> dict:
        return {
            "k": self.k,
            "seed": self.seed,
            "fold_sizes": list(self.fold_sizes),
            "modes": [m.to_json_dict() for m in self.mode_results],
            "cultivars": [c.to_json_dict() for c in self.cultivar_stats],
            "pairs": [
                {
                    "id": p.capture_id,
                    "cultivar": p.cultivar,
                    "proportion": p.proportion,
                    "impedance": p.impedance,
                }
                for p in self.pairs
            ],
            "correlation": (
                None
                if self.correlation is None
                else {
                    "mode": self.correlation_mode,
                    "r": self.correlation.r,
                    "p": self.correlation.p,
                    "n": self.correlation.n,
                }
            ),
            # Wall-clock training + evaluation time on this machine; unlike
            # the accuracies these numbers are not comparable across runs.
            "compute_seconds": {mode: secs for mode, secs in self.compute_seconds},
        }


def _train_seed(seed: int, fold: int, mode: InputMode, task: str) -> int:
    task_id = 0 if task == TASK_DETECTION else 1
    seq = np.random.SeedSequence((int(seed), fold, _MODE_ORDINAL[mode], task_id, 0xCF))
    return int(seq.generate_state(1)[0])


def _detection_map(model, stack) -> np.ndarray:
    """Predicted detection labels for every pixel of a stack."""
    classifier = CnnClassifier(model, stack)
    h, w = stack.height, stack.width
    out = np.empty((h, w), dtype=np.uint8)
    rows_per_slab = max(1, 65536 // max(1, w))
    for y0 in range(0, h, rows_per_slab):
        y1 = min(h, y0 + rows_per_slab)
        ys, xs = np.mgrid[y0:y1, 0:w]
        berry = classifier.is_berry(xs.ravel(), ys.ravel())
        out[y0:y1] = berry.reshape(y1 - y0, w).astype(np.uint8)
    return out


@dataclass(frozen=True)
class _CaptureScore:
    capture_id: str
    cultivar: str
    berry_accuracy: float
    wax_accuracy: float
    proportion: Optional[float]
    detected: bool


def _score_capture(det_model, seg_model, manifest, capture_id, mode, formulation) -> _CaptureScore:
    _, _, stack = load_capture_products(manifest, capture_id, mode, formulation)
    entry = manifest.entry(capture_id)
    truth = load_truth(manifest.capture_path(capture_id) / "truth.png")
    if truth.shape != (stack.height, stack.width):
        raise ValueError(f"truth map for {capture_id!r} does not match the capture size")
    berry_acc = pixel_accuracy(_detection_map(det_model, stack), scene_to_detection(truth))
    classifier = CnnClassifier(det_model, stack)
    hit = multiscale_search(classifier)
    if hit is None:
        return _CaptureScore(capture_id, entry.cultivar, berry_acc, 0.0, None, False)
    aoi = estimate_aoi(classifier, hit)
    label_map = classify_aoi(seg_model, stack, aoi)
    wax_acc = pixel_accuracy(label_map.labels, scene_to_segmentation(truth), ignore_label=SEG_OUTSIDE)
    try:
        proportion: Optional[float] = quantify_wax(label_map, berry_id=capture_id).wax_proportion
    except ValueError:
        proportion = None
    return _CaptureScore(capture_id, entry.cultivar, berry_acc, wax_acc, proportion, True)


def cross_validate(
    manifest: DatasetManifest,
    modes: Sequence[InputMode],
    config: EvaluationConfig = EvaluationConfig(),
) -> EvaluationReport:
    """Train and score both networks per mode and fold.

    Per (mode, fold): pixels are extracted from the training folds only,
    both nets are trained from scratch with seeds derived from (seed, fold,
    mode, task), and every held-out capture is scored. A capture the
    template search misses counts 0 toward wax accuracy and contributes no
    correlation pair. The correlation and the per-cultivar spreads use the
    richest evaluated mode.
    """
    mode_list = canonical_modes(modes)
    plan = plan_folds(manifest, k=config.k, seed=config.seed)
    train_cfg = config.train_config()
    mode_results = []
    proportions_by_mode: dict = {}
    timings = []
    for mode in mode_list:
        t0 = time.perf_counter()
        berry_folds = []
        wax_folds = []
        detected = 0
        evaluated = 0
        proportions: dict = {}
        for fold in range(plan.k):
            train_ids = plan.train_ids(fold)
            test_ids = plan.fold_ids(fold)
            if set(train_ids) & set(test_ids):
                raise AssertionError("fold plan leaked training captures into the test set")
            models = {}
            for task in (TASK_DETECTION, TASK_SEGMENTATION):
                seed = _train_seed(config.seed, fold, mode, task)
                pixels = extract_training_pixels(
                    manifest,
                    None,
                    mode,
                    task,
                    cap=config.pixel_cap,
                    seed=seed,
                    capture_ids=train_ids,
                )
                model = init_model(task, mode.channel_count, seed=seed)
                train(model, pixels, train_cfg, seed=seed)
                models[task] = model
            fold_berry = []
            fold_wax = []
            for cid in test_ids:
                score = _score_capture(
                    models[TASK_DETECTION],
                    models[TASK_SEGMENTATION],
                    manifest,
                    cid,
                    mode,
                    config.formulation,
                )
                fold_berry.append(score.berry_accuracy)
                fold_wax.append(score.wax_accuracy)
                evaluated += 1
                if score.detected:
                    detected += 1
                if score.proportion is not None:
                    proportions[cid] = score.proportion
            berry_folds.append(float(np.mean(fold_berry)))
            wax_folds.append(float(np.mean(fold_wax)))
            logger.info(
                "mode %s fold %d: berry %.4f wax %.4f over %d captures",
                mode.name,
                fold,
                berry_folds[-1],
                wax_folds[-1],
                len(test_ids),
            )
        mode_results.append(
            ModeResult(
                mode=mode.name,
                berry_fold_accuracies=tuple(berry_folds),
                wax_fold_accuracies=tuple(wax_folds),
                evaluated=evaluated,
                detected=detected,
            )
        )
        proportions_by_mode[mode] = proportions
        timings.append((mode.name, time.perf_counter() - t0))

    _log_mode_ordering(mode_results)

    rich_mode = mode_list[-1]
    pairs = []
    for entry in sorted(manifest.entries, key=lambda e: e.capture_id):
        prop = proportions_by_mode[rich_mode].get(entry.capture_id)
        if prop is None or entry.impedance is None:
            continue
        pairs.append(CorrelationPair(entry.capture_id, entry.cultivar, float(prop), float(entry.impedance)))

    correlation: Optional[PearsonResult] = None
    if len(pairs) >= 3:
        try:
            correlation = pearson([p.proportion for p in pairs], [p.impedance for p in pairs])
        except ValueError as exc:
            logger.warning("correlation skipped: %s", exc)

    by_cultivar: dict = {}
    for pair in pairs:
        by_cultivar.setdefault(pair.cultivar, []).append(pair)
    cultivar_stats = tuple(
        CultivarStats(
            cultivar=name,
            count=len(group),
            proportion=quartiles([p.proportion for p in group]),
            impedance=quartiles([p.impedance for p in group]),
        )
        for name, group in sorted(by_cultivar.items())
    )

    return EvaluationReport(
        k=plan.k,
        seed=config.seed,
        fold_sizes=plan.fold_sizes,
        mode_results=tuple(mode_results),
        cultivar_stats=cultivar_stats,
        pairs=tuple(pairs),
        correlation=correlation,
        correlation_mode=rich_mode.name if correlation is not None else None,
        compute_seconds=tuple(timings),
    )


def _log_mode_ordering(mode_results) -> None:
    # Richer inputs are expected (not required) to do at least as well.
    by_name = {m.mode: m for m in mode_results}
    if "I" in by_name and "IV" in by_name:
        base, rich = by_name["I"], by_name["IV"]
        for task, b, r in (
            ("berry", base.berry_accuracy, rich.berry_accuracy),
            ("wax", base.wax_accuracy, rich.wax_accuracy),
        ):
            if r < b:
                logger.warning(
                    "mode IV underperformed mode I on the %s task: %.4f < %.4f",
                    task,
                    r,
                    b,
                )


# --- report emission ---------------------------------------------------------


def emit_report(report: EvaluationReport, out_dir) -> tuple:
    """Write plot-ready files; returns the written paths.

    Files: ``report.json`` (everything), ``table1.csv`` (one data row per
    mode), ``boxplot_data.csv`` (per-cultivar five-number summaries for
    proportion and impedance) and ``correlation.csv`` (one data row per
    correlated pair, preceded by a ``#`` summary line with r, p and n).
    Output bytes are deterministic for a fixed report.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)

    report_path = out / "report.json"
    report_path.write_text(json.dumps(report.to_json_dict(), indent=2, sort_keys=True) + "\n")

    table_path = out / "table1.csv"
    lines = ["mode,berry_accuracy,wax_accuracy"]
    for result in report.mode_results:
        lines.append(f"{result.mode},{result.berry_accuracy:.6f},{result.wax_accuracy:.6f}")
    table_path.write_text("\n".join(lines) + "\n")

    box_path = out / "boxplot_data.csv"
    lines = ["cultivar,measure,count,minimum,q1,median,q3,maximum"]
    for stats in report.cultivar_stats:
        for measure, summary in (("proportion", stats.proportion), ("impedance", stats.impedance)):
            lines.append(
                f"{stats.cultivar},{measure},{stats.count},"
                f"{summary.minimum:.6f},{summary.q1:.6f},{summary.median:.6f},"
                f"{summary.q3:.6f},{summary.maximum:.6f}"
            )
    box_path.write_text("\n".join(lines) + "\n")

    corr_path = out / "correlation.csv"
    if report.correlation is None:
        head = "# pearson unavailable (fewer than 3 usable pairs)"
    else:
        head = (
            f"# pearson r={report.correlation.r:.6f} "
            f"p={report.correlation.p:.6e} n={report.correlation.n} "
            f"mode={report.correlation_mode}"
        )
    lines = [head, "capture_id,cultivar,wax_proportion,impedance"]
    for pair in report.pairs:
        lines.append(
            f"{pair.capture_id},{pair.cultivar},{pair.proportion:.6f},{pair.impedance:.6f}"
        )
    corr_path.write_text("\n".join(lines) + "\n")

    return (report_path, table_path, box_path, corr_path)
