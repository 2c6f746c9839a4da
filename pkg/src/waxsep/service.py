"""Local annotation service: a small HTTP API over one dataset manifest.

Routes:
  GET  /api/images                      capture ids, dimensions, label counts
  GET  /api/images/{id}/channel/{name}  one plane as 8-bit PNG
  GET  /api/images/{id}/labels          rectangle sidecar as JSON
  PUT  /api/images/{id}/labels          validate and persist a sidecar
  GET  /                                bundled UI assets (static files)

Writes use optimistic concurrency: every stored sidecar carries a version
counter, a PUT must name the version it read, and a stale PUT gets 409 so
the client can refresh and overwrite (the refreshed writer wins). Sidecar
files are written atomically and writes are serialized per capture id;
reads run concurrently on the threading server.
"""

from __future__ import annotations

import json
import logging
import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from pathlib import Path
from typing import Optional
from urllib.parse import urlparse

import cv2
import numpy as np

from waxsep.imaging import DatasetManifest, RasterImage, load_capture_dir
from waxsep.labels import LabelSidecar, RectangleLabel, load_sidecar, save_sidecar
from waxsep.lightsep import separate_capture

logger = logging.getLogger(__name__)

CHANNEL_NAMES = ("standard", "direct", "global", "diffuse", "specular")

_CONTENT_TYPES = {
    ".html": "text/html; charset=utf-8",
    ".js": "text/javascript; charset=utf-8",
    ".css": "text/css; charset=utf-8",
    ".json": "application/json",
    ".png": "image/png",
    ".svg": "image/svg+xml",
    ".map": "application/json",
    ".ico": "image/x-icon",
}

_PLACEHOLDER_PAGE = """<!DOCTYPE html>
<html><head><meta charset="utf-8"><title>waxsep annotation service</title></head>
<body><h1>waxsep annotation service</h1>
<p>No UI bundle is installed. The JSON API is available under <code>/api</code>:</p>
<ul>
<li>GET /api/images</li>
<li>GET /api/images/{id}/channel/{standard|direct|global|diffuse|specular}</li>
<li>GET /api/images/{id}/labels</li>
<li>PUT /api/images/{id}/labels</li>
</ul></body></html>
"""


def _png_bytes(image: RasterImage) -> bytes:
    rgb = np.clip(image.pixels, 0.0, 1.0)
    bgr = (rgb[:, :, ::-1] * 255.0).round().astype(np.uint8)
    ok, buf = cv2.imencode(".png", bgr)
    if not ok:
        raise ValueError("PNG encoding failed")
    return bytes(buf)


class AnnotationService:
    """State shared by all request handler threads."""

    def __init__(self, manifest: DatasetManifest, static_dir=None):
        self.manifest = manifest
        self.static_dir: Optional[Path] = None
        if static_dir is not None:
            self.static_dir = Path(static_dir)
        else:
            bundled = Path(__file__).parent / "ui"
            if bundled.is_dir():
                self.static_dir = bundled
        self._planes_cache: dict = {}
        self._cache_lock = threading.Lock()
        self._write_locks: dict = {}
        self._write_locks_guard = threading.Lock()

    # --- capture data ---------------------------------------------------

    def capture_ids(self) -> tuple:
        return tuple(sorted(e.capture_id for e in self.manifest.entries))

    def planes(self, capture_id: str) -> dict:
        """Displayable planes of one capture, separated once and cached."""
        with self._cache_lock:
            cached = self._planes_cache.get(capture_id)
        if cached is not None:
            return cached
        capture = load_capture_dir(self.manifest.capture_path(capture_id))
        planes = {"standard": capture.standard}
        try:
            planes.update(separate_capture(capture).planes())
        except ValueError:
            # Frames for separation are absent; the standard image remains.
            pass
        with self._cache_lock:
            self._planes_cache[capture_id] = planes
        return planes

    def image_listing(self) -> list:
        listing = []
        for cid in self.capture_ids():
            entry = self.manifest.entry(cid)
            planes = self.planes(cid)
            sidecar = self.load_labels(cid)
            listing.append(
                {
                    "id": cid,
                    "cultivar": entry.cultivar,
                    "width": planes["standard"].width,
                    "height": planes["standard"].height,
                    "channels": sorted(planes.keys()),
                    "labels": len(sidecar.rectangles) if sidecar else 0,
                    "version": sidecar.version if sidecar else 0,
                }
            )
        return listing

    # --- sidecars ---------------------------------------------------------

    def sidecar_file(self, capture_id: str) -> Path:
        path = self.manifest.sidecar_path(capture_id)
        if path is not None:
            return path
        root = self.manifest.root or Path(".")
        return root / f"{capture_id}.labels.json"

    def load_labels(self, capture_id: str) -> Optional[LabelSidecar]:
        path = self.sidecar_file(capture_id)
        if not path.is_file():
            return None
        return load_sidecar(path)

    def labels_json(self, capture_id: str) -> dict:
        sidecar = self.load_labels(capture_id)
        if sidecar is None:
            return {
                "format_version": 1,
                "capture_id": capture_id,
                "annotator": "",
                "timestamp": "",
                "version": 0,
                "rectangles": [],
            }
        return sidecar.to_json_dict()

    def _write_lock(self, capture_id: str) -> threading.Lock:
        with self._write_locks_guard:
            lock = self._write_locks.get(capture_id)
            if lock is None:
                lock = threading.Lock()
                self._write_locks[capture_id] = lock
            return lock

    def store_labels(self, capture_id: str, doc: dict) -> dict:
        """Validate one PUT body and persist it; returns the stored JSON.

        Raises ValidationError (400 material) or VersionConflict (409).
        """
        if not isinstance(doc, dict):
            raise ValidationError("body", "label payload must be a JSON object")
        raw_rects = doc.get("rectangles")
        if not isinstance(raw_rects, list) or not raw_rects:
            raise ValidationError("rectangles", "at least one rectangle is required")
        planes = self.planes(capture_id)
        width = planes["standard"].width
        height = planes["standard"].height
        rects = []
        for i, raw in enumerate(raw_rects):
            if not isinstance(raw, dict):
                raise ValidationError(f"rectangles[{i}]", "each rectangle must be an object")
            try:
                rect = RectangleLabel.from_json_dict(raw)
            except ValueError as exc:
                raise ValidationError(f"rectangles[{i}]", str(exc)) from None
            if not rect.fits_inside(width, height):
                raise ValidationError(
                    f"rectangles[{i}]",
                    f"rectangle ({rect.x}, {rect.y}, {rect.width}x{rect.height}) "
                    f"exceeds the {width}x{height} image",
                )
            rects.append(rect)
        try:
            base_version = int(doc.get("version", 0))
        except (TypeError, ValueError):
            raise ValidationError("version", "version must be an integer") from None

        with self._write_lock(capture_id):
            current = self.load_labels(capture_id)
            current_version = current.version if current else 0
            if base_version != current_version:
                raise VersionConflict(current_version)
            sidecar = LabelSidecar(
                capture_id=capture_id,
                rectangles=tuple(rects),
                annotator=str(doc.get("annotator", "unknown")) or "unknown",
                timestamp=str(doc.get("timestamp", "")) or "1970-01-01T00:00:00Z",
                version=current_version + 1,
            )
            save_sidecar(sidecar, self.sidecar_file(capture_id))
        return sidecar.to_json_dict()


class ValidationError(Exception):
    def __init__(self, field: str, message: str):
        super().__init__(message)
        self.field = field
        self.message = message


class VersionConflict(Exception):
    def __init__(self, current_version: int):
        super().__init__(f"sidecar version is {current_version}")
        self.current_version = current_version


class _Handler(BaseHTTPRequestHandler):
    protocol_version = "HTTP/1.1"

    @property
    def service(self) -> AnnotationService:
        return self.server.service  # type: ignore[attr-defined]

    def log_message(self, fmt, *args):
        logger.debug("%s %s", self.address_string(), fmt % args)

    # --- response helpers -------------------------------------------------

    def _send(self, status: int, body: bytes, content_type: str) -> None:
        self.send_response(status)
        self.send_header("Content-Type", content_type)
        self.send_header("Content-Length", str(len(body)))
        self.end_headers()
        self.wfile.write(body)

    def _send_json(self, status: int, doc) -> None:
        self._send(status, (json.dumps(doc, sort_keys=True) + "\n").encode(), "application/json")

    def _error(self, status: int, message: str, **extra) -> None:
        self._send_json(status, {"error": message, **extra})

    # --- routing ------------------------------------------------------------

    def do_GET(self):
        try:
            self._route_get()
        except Exception:
            logger.exception("GET %s failed", self.path)
            self._error(500, "internal error")

    def do_PUT(self):
        try:
            self._route_put()
        except Exception:
            logger.exception("PUT %s failed", self.path)
            self._error(500, "internal error")

    def _route_get(self):
        path = urlparse(self.path).path
        parts = [p for p in path.split("/") if p]
        if parts[:2] == ["api", "images"]:
            if len(parts) == 2:
                return self._send_json(200, {"images": self.service.image_listing()})
            capture_id = parts[2]
            try:
                self.service.manifest.entry(capture_id)
            except KeyError:
                return self._error(404, f"unknown capture id: {capture_id}")
            if len(parts) == 5 and parts[3] == "channel":
                return self._get_channel(capture_id, parts[4])
            if len(parts) == 4 and parts[3] == "labels":
                return self._send_json(200, self.service.labels_json(capture_id))
            return self._error(404, f"no such endpoint: {path}")
        if parts and parts[0] == "api":
            return self._error(404, f"no such endpoint: {path}")
        return self._get_static(parts)

    def _get_channel(self, capture_id: str, name: str):
        if name not in CHANNEL_NAMES:
            return self._error(404, f"unknown channel {name!r}; expected one of {CHANNEL_NAMES}")
        planes = self.service.planes(capture_id)
        if name not in planes:
            return self._error(
                404, f"channel {name!r} is unavailable for {capture_id} (no separation frames)"
            )
        self._send(200, _png_bytes(planes[name]), "image/png")

    def _get_static(self, parts):
        root = self.service.static_dir
        if root is None:
            return self._send(200, _PLACEHOLDER_PAGE.encode(), "text/html; charset=utf-8")
        rel = "/".join(parts) if parts else "index.html"
        target = (root / rel).resolve()
        if not str(target).startswith(str(root.resolve())):
            return self._error(404, "not found")
        if target.is_dir():
            target = target / "index.html"
        if not target.is_file():
            if not parts:
                return self._send(200, _PLACEHOLDER_PAGE.encode(), "text/html; charset=utf-8")
            return self._error(404, f"no such asset: /{rel}")
        content_type = _CONTENT_TYPES.get(target.suffix, "application/octet-stream")
        self._send(200, target.read_bytes(), content_type)

    def _route_put(self):
        path = urlparse(self.path).path
        parts = [p for p in path.split("/") if p]
        if len(parts) != 4 or parts[:2] != ["api", "images"] or parts[3] != "labels":
            return self._error(404, f"no such endpoint: {path}")
        capture_id = parts[2]
        try:
            self.service.manifest.entry(capture_id)
        except KeyError:
            return self._error(404, f"unknown capture id: {capture_id}")
        try:
            length = int(self.headers.get("Content-Length", "0"))
        except ValueError:
            return self._error(400, "bad Content-Length")
        body = self.rfile.read(length) if length else b""
        try:
            doc = json.loads(body.decode("utf-8"))
        except (UnicodeDecodeError, json.JSONDecodeError) as exc:
            return self._error(400, f"body is not valid JSON: {exc}", field="body")
        try:
            stored = self.service.store_labels(capture_id, doc)
        except ValidationError as exc:
            return self._error(400, exc.message, field=exc.field)
        except VersionConflict as exc:
            return self._error(
                409,
                f"label version changed; re-fetch and retry (stored version {exc.current_version})",
                current_version=exc.current_version,
            )
        self._send_json(200, stored)


def serve_annotation(
    manifest: DatasetManifest,
    port: int,
    host: str = "127.0.0.1",
    static_dir=None,
) -> ThreadingHTTPServer:
    """Bind the annotation API; the caller drives ``serve_forever``."""
    server = ThreadingHTTPServer((host, port), _Handler)
    server.service = AnnotationService(manifest, static_dir=static_dir)  # type: ignore[attr-defined]
    logger.info("annotation service on http://%s:%d/", host, server.server_address[1])
    return server
