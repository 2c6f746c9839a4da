"""Batch pipeline: every capture runs separation, berry detection, region
estimation, wax segmentation and quantification; the batch ends with the
proportion-impedance correlation and one aggregate report.

Per-capture failures are recorded and skipped, never fatal for the batch;
the run only fails as a whole when no capture succeeds. All emitted bytes
are a pure function of the dataset, the models and the mode, so repeated
runs produce identical files.
"""

from __future__ import annotations

import json
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Optional

import cv2
import numpy as np

from waxsep.classes import TASK_DETECTION, TASK_SEGMENTATION
from waxsep.cnn import CnnModel
from waxsep.detect import CnnClassifier, SearchStats, estimate_aoi, multiscale_search
from waxsep.extraction import load_capture_products, worker_count
from waxsep.imaging import DatasetManifest, InputMode, write_image
from waxsep.segment import classify_aoi, quantify_wax, render_overlay
from waxsep.stats import pearson

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_FAILURE = 3


@dataclass(frozen=True)
class CaptureOutcome:
    """What one capture produced, or why it did not."""

    capture_id: str
    cultivar: str
    error: Optional[str] = None
    wax_proportion: Optional[float] = None
    impedance: Optional[float] = None
    aoi: Optional[dict] = None

    @property
    def ok(self) -> bool:
        return self.error is None

    def to_json_dict(self) -> dict:
        doc: dict = {"id": self.capture_id, "cultivar": self.cultivar}
        if self.error is not None:
            doc["error"] = self.error
            return doc
        doc["wax_proportion"] = self.wax_proportion
        doc["impedance"] = self.impedance
        doc["aoi"] = self.aoi
        return doc


def _require_models(models: Mapping[str, CnnModel]) -> tuple:
    try:
        det = models[TASK_DETECTION]
        seg = models[TASK_SEGMENTATION]
    except (KeyError, TypeError):
        raise ValueError(
            f"models must map {TASK_DETECTION!r} and {TASK_SEGMENTATION!r} to trained networks"
        ) from None
    if det.kind != TASK_DETECTION or seg.kind != TASK_SEGMENTATION:
        raise ValueError("model kinds do not match their tasks")
    return det, seg


def _write_label_png(labels: np.ndarray, path: Path) -> None:
    # Raw class indices, one byte per pixel; viewers need a palette but the
    # values survive exactly.
    if not cv2.imwrite(str(path), labels.astype(np.uint8)):
        raise ValueError(f"failed to write label map: {path}")


def process_capture(
    manifest: DatasetManifest,
    capture_id: str,
    models: Mapping[str, CnnModel],
    mode: InputMode,
    out_dir,
    formulation: str = "reference",
) -> CaptureOutcome:
    """Run every stage for one capture and write its output files.

    Writes into ``out_dir/captures/<id>/``: ``separation.json`` (when the
    mode separates anything), ``aoi.json``, ``labelmap.png`` (class ids),
    ``overlay.png`` and ``wax_report.json``.
    """
    det_model, seg_model = _require_models(models)
    entry = manifest.entry(capture_id)
    cap_out = Path(out_dir) / "captures" / capture_id
    cap_out.mkdir(parents=True, exist_ok=True)

    _, separation, stack = load_capture_products(manifest, capture_id, mode, formulation)
    if separation is not None:
        (cap_out / "separation.json").write_text(
            json.dumps(
                {
                    "formulation": separation.formulation,
                    "b_value": separation.b_value,
                    "clamp_fraction": separation.clamp_fraction,
                },
                indent=2,
                sort_keys=True,
            )
            + "\n"
        )

    classifier = CnnClassifier(det_model, stack)
    stats = SearchStats()
    hit = multiscale_search(classifier, stats=stats)
    if hit is None:
        raise ValueError("no berry found by the template search")
    aoi = estimate_aoi(classifier, hit)
    aoi_doc = {
        "center": [aoi.x, aoi.y],
        "radius": aoi.radius,
        "hit_scale": hit.scale,
        "placements": stats.placements,
        "evaluations": classifier.evaluations,
    }
    (cap_out / "aoi.json").write_text(json.dumps(aoi_doc, indent=2, sort_keys=True) + "\n")

    label_map = classify_aoi(seg_model, stack, aoi)
    _write_label_png(label_map.labels, cap_out / "labelmap.png")
    write_image(render_overlay(stack, label_map), cap_out / "overlay.png", bit_depth=8)

    report = quantify_wax(label_map, berry_id=capture_id)
    (cap_out / "wax_report.json").write_text(
        json.dumps(report.to_json_dict(), indent=2, sort_keys=True) + "\n"
    )
    return CaptureOutcome(
        capture_id=capture_id,
        cultivar=entry.cultivar,
        wax_proportion=report.wax_proportion,
        impedance=entry.impedance,
        aoi=aoi_doc,
    )


def run_pipeline(
    manifest: DatasetManifest,
    models: Mapping[str, CnnModel],
    mode: InputMode,
    out_dir,
    formulation: str = "reference",
) -> int:
    """Process every capture, then correlate proportions against impedance.

    Returns ``EXIT_OK`` when at least one capture succeeded (failures are
    recorded in the aggregate report) and ``EXIT_FAILURE`` when none did or
    the manifest is empty. ``pipeline_report.json`` lists per-capture
    outcomes sorted by id plus the correlation over the successful ones.
    """
    _require_models(models)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    ids = sorted(e.capture_id for e in manifest.entries)
    if not ids:
        logger.error("no captures in the manifest; nothing to process")
        (out / "pipeline_report.json").write_text(
            json.dumps({"error": "no captures", "captures": []}, indent=2, sort_keys=True) + "\n"
        )
        return EXIT_FAILURE

    def one(cid: str) -> CaptureOutcome:
        try:
            return process_capture(manifest, cid, models, mode, out, formulation)
        except Exception as exc:
            logger.warning("capture %s failed: %s", cid, exc)
            return CaptureOutcome(
                capture_id=cid, cultivar=manifest.entry(cid).cultivar, error=str(exc)
            )

    workers = worker_count()
    if workers > 1 and len(ids) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            outcomes = list(pool.map(one, ids))
    else:
        outcomes = [one(cid) for cid in ids]

    succeeded = [o for o in outcomes if o.ok]
    pairs = [
        (o.capture_id, o.wax_proportion, o.impedance)
        for o in succeeded
        if o.wax_proportion is not None and o.impedance is not None
    ]
    correlation = None
    if len(pairs) >= 3:
        try:
            result = pearson([p[1] for p in pairs], [p[2] for p in pairs])
            correlation = {"r": result.r, "p": result.p, "n": result.n}
        except ValueError as exc:
            logger.warning("correlation skipped: %s", exc)

    doc = {
        "mode": mode.name,
        "formulation": formulation,
        "processed": len(outcomes),
        "succeeded": len(succeeded),
        "failed": len(outcomes) - len(succeeded),
        "captures": [o.to_json_dict() for o in outcomes],
        "correlation": correlation,
    }
    (out / "pipeline_report.json").write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")

    if not succeeded:
        logger.error("every capture failed (%d attempted)", len(outcomes))
        return EXIT_FAILURE
    logger.info(
        "pipeline done: %d/%d captures succeeded, reports under %s",
        len(succeeded),
        len(outcomes),
        out,
    )
    return EXIT_OK
