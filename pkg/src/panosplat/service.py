"""Read-only HTTP render service for interactive roaming.

Endpoints::

    GET /scene/meta
        -> {"gaussian_count", "bbox": {"min", "max"}, "suggested_start_pose"}
    GET /render?qw&qx&qy&qz&tx&ty&tz&h&w[&fmt=png|jpeg][&quality=90]
        -> panorama bytes (PNG by default, byte-identical for equal inputs)

The scene is immutable after startup, so concurrent requests need no
locking; each request renders independently. Latency is logged per
request.
"""

import json
import logging
import os
import posixpath
import time
from http import HTTPStatus
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from urllib.parse import parse_qs, urlparse

import numpy as np

from .errors import PanoSplatError
from .geometry import PanoramaCamera
from .images import encode_jpeg, encode_png
from .renderer import RenderConfig, render

log = logging.getLogger("panosplat.service")

_POSE_KEYS = ("qw", "qx", "qy", "qz", "tx", "ty", "tz")
_STATIC_TYPES = {
    ".html": "text/html; charset=utf-8",
    ".js": "application/javascript",
    ".mjs": "application/javascript",
    ".css": "text/css",
    ".map": "application/json",
    ".json": "application/json",
    ".png": "image/png",
    ".ico": "image/x-icon",
}


class BadRequest(Exception):
    pass


def _float_param(query, key, default=None):
    if key not in query:
        if default is None:
            raise BadRequest(f"missing query parameter {key!r}")
        return default
    try:
        value = float(query[key][0])
    except ValueError:
        raise BadRequest(f"parameter {key!r} is not a number")
    if not np.isfinite(value):
        raise BadRequest(f"parameter {key!r} must be finite")
    return value


def parse_render_query(query, default_hw=(512, 1024)):
    """Extract (camera, fmt, quality) from a /render query dict."""
    pose = [_float_param(query, k) for k in _POSE_KEYS]
    q = np.array(pose[:4])
    if np.linalg.norm(q) < 1e-6:
        raise BadRequest("quaternion has near-zero norm")
    h = int(_float_param(query, "h", default_hw[0]))
    w = int(_float_param(query, "w", default_hw[1]))
    if h < 2 or w != 2 * h:
        raise BadRequest(f"resolution {w}x{h} must satisfy w = 2h, h >= 2")
    fmt = query.get("fmt", ["png"])[0].lower()
    if fmt not in ("png", "jpeg", "jpg"):
        raise BadRequest(f"unsupported fmt {fmt!r}")
    quality = int(_float_param(query, "quality", 90))
    try:
        cam = PanoramaCamera.from_quaternion(q, np.array(pose[4:]), h, w)
    except PanoSplatError as exc:
        raise BadRequest(str(exc))
    return cam, fmt, quality


def scene_meta(scene, camera_height=1.6):
    """Metadata for the viewer: count, bounds, a reasonable start pose."""
    if len(scene):
        lo = scene.positions.min(axis=0)
        hi = scene.positions.max(axis=0)
    else:
        lo = np.zeros(3)
        hi = np.zeros(3)
    center = 0.5 * (lo + hi)
    start = np.array([center[0], hi[1] - camera_height, center[2]])
    qw, qx, qy, qz = 1.0, 0.0, 0.0, 0.0
    return {
        "gaussian_count": int(len(scene)),
        "bbox": {"min": lo.tolist(), "max": hi.tolist()},
        "suggested_start_pose": {
            "qw": qw, "qx": qx, "qy": qy, "qz": qz,
            "tx": float(-start[0]), "ty": float(-start[1]),
            "tz": float(-start[2]),
        },
    }


def make_handler(scene, config, frontend_dir=None, camera_height=1.6):
    meta_blob = json.dumps(scene_meta(scene, camera_height)).encode()

    class Handler(BaseHTTPRequestHandler):
        protocol_version = "HTTP/1.1"

        def log_message(self, fmt, *args):
            log.info("%s %s", self.address_string(), fmt % args)

        def _reply(self, status, body, ctype):
            self.send_response(status)
            self.send_header("Content-Type", ctype)
            self.send_header("Content-Length", str(len(body)))
            self.end_headers()
            self.wfile.write(body)

        def _reply_error(self, status, message):
            body = json.dumps({"error": message}).encode()
            self._reply(status, body, "application/json")

        def _serve_static(self, path):
            if frontend_dir is None:
                self._reply_error(HTTPStatus.NOT_FOUND, "no frontend bundled")
                return
            rel = posixpath.normpath(path.lstrip("/")) or "index.html"
            if rel in (".", ""):
                rel = "index.html"
            full = os.path.join(frontend_dir, *rel.split("/"))
            if (not os.path.normpath(full).startswith(
                    os.path.normpath(frontend_dir))
                    or not os.path.isfile(full)):
                self._reply_error(HTTPStatus.NOT_FOUND, f"no such file {rel}")
                return
            ext = os.path.splitext(full)[1].lower()
            with open(full, "rb") as f:
                self._reply(HTTPStatus.OK, f.read(),
                            _STATIC_TYPES.get(ext, "application/octet-stream"))

        def do_GET(self):
            started = time.perf_counter()
            url = urlparse(self.path)
            try:
                if url.path == "/scene/meta":
                    self._reply(HTTPStatus.OK, meta_blob, "application/json")
                elif url.path == "/render":
                    query = parse_qs(url.query)
                    cam, fmt, quality = parse_render_query(query)
                    out = render(scene, cam, config)
                    if fmt == "png":
                        body, ctype = encode_png(out.color), "image/png"
                    else:
                        body = encode_jpeg(out.color, quality)
                        ctype = "image/jpeg"
                    self._reply(HTTPStatus.OK, body, ctype)
                else:
                    self._serve_static(url.path)
            except BadRequest as exc:
                self._reply_error(HTTPStatus.BAD_REQUEST, str(exc))
            except Exception as exc:  # pragma: no cover - defensive
                log.exception("request failed")
                self._reply_error(HTTPStatus.INTERNAL_SERVER_ERROR, str(exc))
            log.info("GET %s -> %.1f ms", self.path,
                     1e3 * (time.perf_counter() - started))

    return Handler


def make_server(scene, host="127.0.0.1", port=8000, config=None,
                frontend_dir=None, camera_height=1.6):
    """Build (not start) a threading HTTP server over an immutable scene."""
    handler = make_handler(scene, config or RenderConfig(), frontend_dir,
                           camera_height)
    return ThreadingHTTPServer((host, port), handler)
