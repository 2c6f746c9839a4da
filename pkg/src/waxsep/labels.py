"""Rectangle labels and their sidecar files.

Annotations are axis-aligned rectangles, each carrying one class name.
Detection rectangles use {berry, background}; segmentation rectangles use
{wax, nowax, other}. A sidecar file stores every rectangle for one capture
together with an annotator tag, a timestamp and a version counter that the
annotation service bumps on each accepted write.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Optional

from waxsep.classes import TASK_CLASSES, TASK_DETECTION, TASK_SEGMENTATION

SIDECAR_VERSION = 1

_CLASS_TO_TASK = {name: task for task, names in TASK_CLASSES.items() for name in names}


@dataclass(frozen=True)
class RectangleLabel:
    """One labeled axis-aligned rectangle, in pixel coordinates.

    (x, y) is the top-left corner; width and height are at least 1. The
    rectangle covers pixels x..x+width-1 and y..y+height-1 inclusive.
    """

    x: int
    y: int
    width: int
    height: int
    label: str

    def __post_init__(self):
        for name in ("x", "y", "width", "height"):
            value = getattr(self, name)
            if not isinstance(value, int) or isinstance(value, bool):
                raise ValueError(f"rectangle {name} must be an integer, got {value!r}")
        if self.x < 0 or self.y < 0:
            raise ValueError(f"rectangle origin must be non-negative, got ({self.x}, {self.y})")
        if self.width < 1 or self.height < 1:
            raise ValueError(f"rectangle sides must be >= 1, got {self.width}x{self.height}")
        if self.label not in _CLASS_TO_TASK:
            raise ValueError(f"unknown rectangle class {self.label!r}")

    @property
    def task(self) -> str:
        return _CLASS_TO_TASK[self.label]

    def fits_inside(self, width: int, height: int) -> bool:
        return self.x + self.width <= width and self.y + self.height <= height

    def to_json_dict(self) -> dict:
        return {
            "x": self.x,
            "y": self.y,
            "width": self.width,
            "height": self.height,
            "label": self.label,
        }

    @staticmethod
    def from_json_dict(raw: dict) -> "RectangleLabel":
        try:
            return RectangleLabel(
                x=int(raw["x"]),
                y=int(raw["y"]),
                width=int(raw["width"]),
                height=int(raw["height"]),
                label=str(raw["label"]),
            )
        except KeyError as missing:
            raise ValueError(f"rectangle record misses field {missing}") from None


@dataclass(frozen=True)
class LabelSidecar:
    """All rectangle labels recorded for one capture."""

    capture_id: str
    rectangles: tuple
    annotator: str = "unknown"
    timestamp: str = "1970-01-01T00:00:00Z"
    version: int = 1

    def __post_init__(self):
        object.__setattr__(self, "rectangles", tuple(self.rectangles))
        if self.version < 1:
            raise ValueError(f"sidecar version must be >= 1, got {self.version}")

    def for_task(self, task: str) -> tuple:
        if task not in (TASK_DETECTION, TASK_SEGMENTATION):
            raise ValueError(f"unknown task {task!r}")
        return tuple(r for r in self.rectangles if r.task == task)

    def to_json_dict(self) -> dict:
        return {
            "format_version": SIDECAR_VERSION,
            "capture_id": self.capture_id,
            "annotator": self.annotator,
            "timestamp": self.timestamp,
            "version": self.version,
            "rectangles": [r.to_json_dict() for r in self.rectangles],
        }


def sidecar_from_json_dict(doc: dict) -> LabelSidecar:
    version = doc.get("format_version")
    if version != SIDECAR_VERSION:
        raise ValueError(f"unsupported label sidecar version {version!r}")
    return LabelSidecar(
        capture_id=str(doc["capture_id"]),
        rectangles=tuple(RectangleLabel.from_json_dict(r) for r in doc.get("rectangles", [])),
        annotator=str(doc.get("annotator", "unknown")),
        timestamp=str(doc.get("timestamp", "1970-01-01T00:00:00Z")),
        version=int(doc.get("version", 1)),
    )


def load_sidecar(path) -> LabelSidecar:
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"no such label file: {path}")
    return sidecar_from_json_dict(json.loads(path.read_text()))


def save_sidecar(sidecar: LabelSidecar, path) -> Path:
    """Write a sidecar atomically (write to a temp name, then rename)."""
    path = Path(path)
    payload = json.dumps(sidecar.to_json_dict(), indent=2, sort_keys=True) + "\n"
    tmp = path.with_name(path.name + f".tmp{os.getpid()}")
    tmp.write_text(payload)
    os.replace(tmp, path)
    return path
