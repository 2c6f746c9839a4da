"""Grape berry wax phenotyping from structured-light and polarization captures.

The package covers the full chain: illumination separation of raw captures,
a synthetic scene generator with exact ground truth, small from-scratch
pixel classifiers, a sparse sliding-template berry detector, wax
segmentation and quantification, cross-validated evaluation statistics, a
batch pipeline and a local annotation service.
"""

from waxsep._kernels import BACKEND
from waxsep.classes import (
    DET_BACKGROUND,
    DET_BERRY,
    SEG_NOWAX,
    SEG_OTHER,
    SEG_OUTSIDE,
    SEG_WAX,
    TASK_DETECTION,
    TASK_SEGMENTATION,
)
from waxsep.cnn import CnnModel, init_model, load_model, predict_batch, save_model
from waxsep.detect import (
    AreaOfInterest,
    CnnClassifier,
    OracleClassifier,
    SensorTemplate,
    TemplateHit,
    build_template,
    estimate_aoi,
    multiscale_search,
)
from waxsep.extraction import extract_training_pixels, load_capture_products
from waxsep.imaging import (
    CaptureSet,
    ChannelStack,
    DatasetManifest,
    InputMode,
    ManifestEntry,
    RasterImage,
    load_capture_dir,
    load_manifest,
    read_image,
    save_capture_dir,
    save_manifest,
    write_image,
)
from waxsep.labels import LabelSidecar, RectangleLabel, load_sidecar, save_sidecar
from waxsep.lightsep import (
    BlackLevel,
    SeparationResult,
    estimate_black_value,
    generate_patterns,
    separate_capture,
    separate_pattern_as_written,
    separate_pattern_reference,
    separate_polarization,
)
from waxsep.pipeline import run_pipeline
from waxsep.pixels import PixelDataset, normalize_coords
from waxsep.scenesim import (
    CultivarProfile,
    default_profiles,
    generate_dataset,
    load_truth,
    render_scene,
    simulate_capture,
)
from waxsep.segment import LabelMap, Region, WaxReport, classify_aoi, quantify_wax, render_overlay
from waxsep.service import serve_annotation
from waxsep.stats import (
    EvaluationConfig,
    EvaluationReport,
    FoldPlan,
    cross_validate,
    emit_report,
    pearson,
    pixel_accuracy,
    plan_folds,
)
from waxsep.training import TrainConfig, gradient_check, train

__version__ = "0.1.0"

__all__ = [
    "BACKEND",
    "__version__",
    # class conventions
    "DET_BACKGROUND",
    "DET_BERRY",
    "SEG_WAX",
    "SEG_NOWAX",
    "SEG_OTHER",
    "SEG_OUTSIDE",
    "TASK_DETECTION",
    "TASK_SEGMENTATION",
    # imaging
    "RasterImage",
    "InputMode",
    "ChannelStack",
    "CaptureSet",
    "ManifestEntry",
    "DatasetManifest",
    "read_image",
    "write_image",
    "load_capture_dir",
    "save_capture_dir",
    "load_manifest",
    "save_manifest",
    # separation
    "BlackLevel",
    "SeparationResult",
    "generate_patterns",
    "estimate_black_value",
    "separate_pattern_as_written",
    "separate_pattern_reference",
    "separate_polarization",
    "separate_capture",
    # simulator
    "CultivarProfile",
    "default_profiles",
    "render_scene",
    "simulate_capture",
    "generate_dataset",
    "load_truth",
    # labels and pixels
    "RectangleLabel",
    "LabelSidecar",
    "load_sidecar",
    "save_sidecar",
    "PixelDataset",
    "normalize_coords",
    "extract_training_pixels",
    "load_capture_products",
    # model
    "CnnModel",
    "init_model",
    "predict_batch",
    "save_model",
    "load_model",
    "TrainConfig",
    "train",
    "gradient_check",
    # detection and segmentation
    "SensorTemplate",
    "build_template",
    "TemplateHit",
    "AreaOfInterest",
    "OracleClassifier",
    "CnnClassifier",
    "multiscale_search",
    "estimate_aoi",
    "LabelMap",
    "Region",
    "WaxReport",
    "classify_aoi",
    "quantify_wax",
    "render_overlay",
    # evaluation and pipeline
    "FoldPlan",
    "plan_folds",
    "pixel_accuracy",
    "pearson",
    "EvaluationConfig",
    "EvaluationReport",
    "cross_validate",
    "emit_report",
    "run_pipeline",
    "serve_annotation",
]
