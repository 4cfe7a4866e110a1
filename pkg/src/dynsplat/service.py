"""Local HTTP service for interactive viewing and selection.

Read-only over a loaded checkpoint: every request renders from an immutable
scene snapshot, so concurrent requests are safe. Selections are cached under
a token (the content hash of the sorted id set) so a client can re-pose the
same selection across time via /timeline.

Routes:
  GET  /meta                              scene metadata
  GET  /render?azimuth&elevation&radius&t&w&h&channels[&camera_index]  PNG
  POST /select {mode, pixel?, view?, t, theta, embedding?}             JSON
  GET  /timeline?selection_token&t                                     JSON
"""

from __future__ import annotations

import base64
import hashlib
import io
import json
import os
import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from urllib.parse import parse_qs, urlparse

import numpy as np
from PIL import Image

from . import semantics, viz
from .camera import Camera, orbit_camera
from .deformation import apply_deformation
from .errors import DynsplatError, EmptyPixel
from .rasterizer import RenderOptions, render

MAX_SIZE = 1024


class BadRequest(Exception):
    """Maps to HTTP 400."""


def _png_bytes(img01: np.ndarray) -> bytes:
    u8 = np.clip(img01 * 255.0 + 0.5, 0, 255).astype(np.uint8)
    buf = io.BytesIO()
    Image.fromarray(u8, mode="RGB").save(buf, format="PNG")
    return buf.getvalue()


def _mask_png_bytes(mask: np.ndarray) -> bytes:
    u8 = np.where(mask, 255, 0).astype(np.uint8)
    buf = io.BytesIO()
    Image.fromarray(u8, mode="L").save(buf, format="PNG")
    return buf.getvalue()


class ViewerService:
    """Stateless request handling over an immutable checkpoint snapshot."""

    def __init__(self, gaussians, field, iteration=0, frames=None,
                 max_size=MAX_SIZE, workers=None):
        self.gaussians = gaussians
        self.field = field
        self.iteration = iteration
        self.frames = frames or []
        self.max_size = max_size
        self._selections = {}
        self._lock = threading.Lock()
        self._render_slots = threading.BoundedSemaphore(
            workers or os.cpu_count() or 4)

    # -- views ------------------------------------------------------------

    def _camera_from_query(self, params) -> Camera:
        if "camera_index" in params:
            idx = int(params["camera_index"][0])
            if not 0 <= idx < len(self.frames):
                raise BadRequest(f"camera_index {idx} out of range")
            return self.frames[idx].camera
        try:
            azimuth = float(params.get("azimuth", ["30"])[0])
            elevation = float(params.get("elevation", ["15"])[0])
            radius = float(params.get("radius", ["3"])[0])
            w = int(params.get("w", ["512"])[0])
            h = int(params.get("h", ["512"])[0])
            fov = float(params.get("fov", ["50"])[0])
            target = tuple(float(v) for v in params.get("target", ["0,0,0"])[0].split(","))
        except ValueError as exc:
            raise BadRequest(f"bad view parameter: {exc}")
        if not (1 <= w <= self.max_size and 1 <= h <= self.max_size):
            raise BadRequest(f"image size {w}x{h} outside 1..{self.max_size}")
        if radius <= 0:
            raise BadRequest("radius must be positive")
        return orbit_camera(azimuth, elevation, radius, target, w, h, fov)

    def _camera_from_view(self, view) -> Camera:
        if not isinstance(view, dict):
            raise BadRequest("view must be an object")
        params = {k: [str(v)] for k, v in view.items()}
        return self._camera_from_query(params)

    @staticmethod
    def _time_of(raw) -> float:
        try:
            t = float(raw)
        except (TypeError, ValueError):
            raise BadRequest(f"bad time {raw!r}")
        if not 0.0 <= t <= 1.0:
            raise BadRequest(f"time {t} outside [0, 1]")
        return t

    # -- endpoints --------------------------------------------------------

    def meta(self) -> dict:
        cams = [{"index": i, "time": f.time, "width": f.camera.width,
                 "height": f.camera.height} for i, f in enumerate(self.frames)]
        return {"count": int(self.gaussians.count),
                "feature_dim": int(self.gaussians.feature_dim),
                "time_range": [0.0, 1.0],
                "iteration": int(self.iteration),
                "cameras": cams}

    def render_view(self, params) -> bytes:
        camera = self._camera_from_query(params)
        t = self._time_of(params.get("t", ["0"])[0])
        channels = params.get("channels", ["color"])[0]
        if channels not in ("color", "feature-pca", "alpha"):
            raise BadRequest(f"unknown channels {channels!r}")
        with self._render_slots:
            posed, _ = apply_deformation(self.gaussians, self.field, t)
            out = render(posed, camera, RenderOptions())
        if channels == "color":
            img = out.color
        elif channels == "feature-pca":
            img = viz.feature_pca_rgb(out.feature)
        else:
            img = viz.alpha_gray(out.alpha)
        return _png_bytes(img)

    def select(self, payload) -> dict:
        if not isinstance(payload, dict):
            raise BadRequest("body must be a JSON object")
        mode = payload.get("mode")
        theta = payload.get("theta", semantics.DEFAULT_THETA)
        try:
            theta = float(theta)
        except (TypeError, ValueError):
            raise BadRequest(f"bad theta {theta!r}")
        if not -1.0 <= theta <= 1.0:
            raise BadRequest(f"theta {theta} outside [-1, 1]")
        t = self._time_of(payload.get("t", 0.0))
        camera = self._camera_from_view(payload.get("view", {}))
        mask_threshold = float(payload.get("mask_alpha_threshold",
                                           semantics.DEFAULT_MASK_ALPHA))

        with self._render_slots:
            if mode == "click":
                pixel = payload.get("pixel")
                if (not isinstance(pixel, (list, tuple)) or len(pixel) != 2):
                    raise BadRequest("click mode needs pixel [x, y]")
                px, py = float(pixel[0]), float(pixel[1])
                if not (0 <= px <= camera.width - 1 and 0 <= py <= camera.height - 1):
                    raise BadRequest(f"pixel {pixel} outside image")
                result = semantics.select_by_click(
                    self.gaussians, self.field, camera, t, (px, py), theta)
            elif mode == "embedding":
                emb = payload.get("embedding")
                if not isinstance(emb, list) or not emb:
                    raise BadRequest("embedding mode needs a number list")
                q = np.asarray(emb, dtype=np.float64)
                if q.shape[0] != self.gaussians.feature_dim:
                    raise BadRequest(
                        f"embedding dim {q.shape[0]} != {self.gaussians.feature_dim}")
                result = semantics.select_by_embedding(self.gaussians, q, theta)
            else:
                raise BadRequest(f"unknown mode {mode!r}")

            token = hashlib.sha256(
                result.gaussian_ids.astype("<i8").tobytes()).hexdigest()[:16]
            with self._lock:
                self._selections[token] = {
                    "ids": result.gaussian_ids,
                    "camera": camera,
                    "mask_threshold": mask_threshold,
                    "theta": theta,
                    "t": t,
                }
            mask = semantics.render_segmentation_mask(
                self.gaussians, self.field, result, camera, t, mask_threshold)

        if result.count:
            hist, edges = np.histogram(result.scores, bins=20, range=(-1.0, 1.0))
        else:
            hist, edges = np.histogram([], bins=20, range=(-1.0, 1.0))
        qf = result.query_feature
        return {
            "count": int(result.count),
            "token": token,
            "t": t,
            "theta": theta,
            "query_feature": None if qf is None else [float(v) for v in qf],
            "histogram": {"edges": [float(v) for v in edges],
                          "counts": [int(v) for v in hist]},
            "mask_base64": base64.b64encode(_mask_png_bytes(mask)).decode("ascii"),
        }

    def timeline(self, params):
        token = params.get("selection_token", [None])[0]
        if token is None:
            raise BadRequest("selection_token required")
        with self._lock:
            entry = self._selections.get(token)
        if entry is None:
            return None  # 404
        t = self._time_of(params.get("t", ["0"])[0])
        result = semantics.SelectionResult(entry["ids"], None,
                                           np.zeros(len(entry["ids"])))
        with self._render_slots:
            mask = semantics.render_segmentation_mask(
                self.gaussians, self.field, result, entry["camera"], t,
                entry["mask_threshold"])
        return {
            "token": token,
            "t": t,
            "count": int(len(entry["ids"])),
            "mask_base64": base64.b64encode(_mask_png_bytes(mask)).decode("ascii"),
        }

    # -- plumbing ---------------------------------------------------------

    def make_server(self, host="127.0.0.1", port=0) -> ThreadingHTTPServer:
        service = self

        class Handler(BaseHTTPRequestHandler):
            def log_message(self, *args):
                pass

            def _send(self, status, body: bytes, content_type="application/json"):
                self.send_response(status)
                self.send_header("Content-Type", content_type)
                self.send_header("Content-Length", str(len(body)))
                self.send_header("Access-Control-Allow-Origin", "*")
                self.send_header("Access-Control-Allow-Headers", "Content-Type")
                self.send_header("Access-Control-Allow-Methods", "GET, POST, OPTIONS")
                self.end_headers()
                self.wfile.write(body)

            def _send_json(self, status, obj):
                self._send(status, json.dumps(obj).encode())

            def _fail(self, status, message):
                self._send_json(status, {"error": message})

            def do_OPTIONS(self):
                self._send(204, b"")

            def do_GET(self):
                url = urlparse(self.path)
                params = parse_qs(url.query)
                try:
                    if url.path == "/meta":
                        self._send_json(200, service.meta())
                    elif url.path == "/render":
                        self._send(200, service.render_view(params), "image/png")
                    elif url.path == "/timeline":
                        result = service.timeline(params)
                        if result is None:
                            self._fail(404, "unknown selection token")
                        else:
                            self._send_json(200, result)
                    else:
                        self._fail(404, f"no route {url.path}")
                except BadRequest as exc:
                    self._fail(400, str(exc))
                except DynsplatError as exc:
                    self._fail(400, f"{type(exc).__name__}: {exc}")

            def do_POST(self):
                url = urlparse(self.path)
                if url.path != "/select":
                    self._fail(404, f"no route {url.path}")
                    return
                try:
                    length = int(self.headers.get("Content-Length", "0"))
                    try:
                        payload = json.loads(self.rfile.read(length) or b"{}")
                    except json.JSONDecodeError as exc:
                        raise BadRequest(f"bad JSON body: {exc}")
                    self._send_json(200, service.select(payload))
                except EmptyPixel as exc:
                    self._fail(422, f"EmptyPixel: {exc}")
                except BadRequest as exc:
                    self._fail(400, str(exc))
                except DynsplatError as exc:
                    self._fail(400, f"{type(exc).__name__}: {exc}")

        return ThreadingHTTPServer((host, port), Handler)

    def serve_forever(self, host="127.0.0.1", port=8090):
        server = self.make_server(host, port)
        try:
            server.serve_forever()
        except KeyboardInterrupt:
            pass
        finally:
            server.server_close()
