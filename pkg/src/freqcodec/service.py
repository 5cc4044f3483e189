"""HTTP service exposing encode, scalable decode, and interactive ROI
enhancement.  Sessions live in memory behind an LRU cap; the model is
shared read-only across requests and each session serializes its own
enhancements with a per-session lock.

Endpoints (bodies are JSON unless noted):

  GET  /healthz
  POST /sessions                      image file bytes (PPM/PNG) -> session
  GET  /sessions/{id}                 stats
  POST /sessions/{id}/enhance         {"rois": [[x,y,w,h], ...]}
  GET  /sessions/{id}/image?mode=base|current|full     image bytes
  GET  /sessions/{id}/spectrum?mode=base|current|full  image bytes

Rate fields are bits per pixel; ``bpp_enh_sent`` counts serialized tile
bytes actually transferred, so re-requesting covered ROIs is free.
"""

from __future__ import annotations

import base64
import json
import re
import secrets
import threading
from collections import OrderedDict
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from pathlib import Path
from urllib.parse import parse_qs, urlparse

import numpy as np

from . import bitstream as BS
from . import codec
from . import imageio
from . import metrics
from .errors import FormatError
from .model import CodecModel

TILE_HEADER_BYTES = 8  # y0, x0, th, tw as u16


class Session:
    """One encoded image plus the enhancement tiles sent so far."""

    def __init__(self, sid: str, container: BS.Container, original: np.ndarray | None,
                 model: CodecModel, stats: dict):
        self.id = sid
        self.lock = threading.Lock()
        self.container = container
        self.original = original
        self.factor = model.cfg.downsampling
        header = container.header
        self.width = header.width
        self.height = header.height
        self.n_pixels = header.width * header.height
        self.bpp_base = stats["bpp_base"]
        self.bpp_enh_total = stats["bpp_enh"]
        self.bpp_enh_sent = 0.0
        self.rois: list[tuple[int, int, int, int]] = []
        self.mask = np.zeros((header.latent_h, header.latent_w), dtype=bool)
        self.tiles: list[BS.RoiTile] = []
        self.y_low, self.y_high = codec.decode_latents(container, model, "full")
        self.base_image = codec.synthesize_from_latents(
            self.y_low, np.zeros_like(self.y_high), model, (self.height, self.width))
        self.current_image = self.base_image
        self.full_image = codec.synthesize_from_latents(
            self.y_low, self.y_high, model, (self.height, self.width))

    def enhance(self, rois: list[tuple[int, int, int, int]], model: CodecModel) -> dict:
        """Merge new ROIs, send tiles for newly covered latent cells only."""
        BS.validate_rois(rois, self.width, self.height)
        factor = model.cfg.downsampling
        new_mask = self.mask | BS.rects_to_mask(rois, factor, *self.mask.shape)
        added = new_mask & ~self.mask
        delta_bytes = 0
        if added.any():
            for y0, x0, th, tw in BS.mask_to_tiles(added):
                sub = np.ascontiguousarray(self.y_high[:, y0 : y0 + th, x0 : x0 + tw])
                tile = BS.RoiTile(y0, x0, th, tw, BS.encode_chunk(sub, model.density_h))
                self.tiles.append(tile)
                delta_bytes += TILE_HEADER_BYTES + len(BS.pack_chunk(tile.chunk))
            self.mask = new_mask
            tiled = BS.Container(self.container.header, self.container.base, tuple(self.tiles))
            y_roi = BS.assemble_enhancement(tiled, model)
            self.current_image = codec.synthesize_from_latents(
                self.y_low, y_roi, model, (self.height, self.width))
        self.rois.extend(rois)
        delta_bpp = delta_bytes * 8 / self.n_pixels
        self.bpp_enh_sent += delta_bpp
        return {
            "bpp_enh_sent_delta": delta_bpp,
            "bpp_enh_sent": self.bpp_enh_sent,
            "cumulative_rois": [list(r) for r in self.rois],
        }

    def stats(self) -> dict:
        out = {
            "id": self.id,
            "width": self.width,
            "height": self.height,
            "factor": self.factor,
            "latent_h": int(self.mask.shape[0]),
            "latent_w": int(self.mask.shape[1]),
            "bpp_base": self.bpp_base,
            "bpp_enh_total": self.bpp_enh_total,
            "bpp_enh_sent": self.bpp_enh_sent,
            "bpp_total": self.bpp_base + self.bpp_enh_total,
            "rois": [list(r) for r in self.rois],
            "latent_tiles": [[t.y0, t.x0, t.th, t.tw] for t in self.tiles],
        }
        if self.original is not None:
            ref = self.original
            out["psnr_base"] = metrics.psnr(ref, imageio.to_float(self.base_image))
            out["psnr_current"] = metrics.psnr(ref, imageio.to_float(self.current_image))
            out["psnr_full"] = metrics.psnr(ref, imageio.to_float(self.full_image))
        return out

    def image(self, mode: str) -> np.ndarray:
        if mode == "base":
            return self.base_image
        if mode == "current":
            return self.current_image
        if mode == "full":
            return self.full_image
        raise ValueError(f"unknown mode {mode!r}")


class SessionStore:
    def __init__(self, cap: int = 32):
        self.cap = cap
        self._lock = threading.Lock()
        self._sessions: OrderedDict[str, Session] = OrderedDict()

    def add(self, session: Session) -> None:
        with self._lock:
            self._sessions[session.id] = session
            while len(self._sessions) > self.cap:
                self._sessions.popitem(last=False)

    def get(self, sid: str) -> Session | None:
        with self._lock:
            session = self._sessions.get(sid)
            if session is not None:
                self._sessions.move_to_end(sid)
            return session


class CodecService:
    """Request handling logic, kept separate from the HTTP plumbing."""

    def __init__(self, model: CodecModel, retain_originals: bool = True, session_cap: int = 32):
        self.model = model
        self.retain_originals = retain_originals
        self.store = SessionStore(session_cap)

    # Each handler returns (http_status, payload_dict | (content_type, bytes)).

    def create_session(self, body: bytes) -> tuple[int, dict]:
        try:
            img_u8 = imageio.decode_image_bytes(body)
        except FormatError as e:
            return 400, {"error": f"undecodable image: {e}"}
        img = imageio.to_float(img_u8)
        f = self.model.cfg.downsampling
        if img.shape[1] < f or img.shape[2] < f:
            return 400, {"error": f"image smaller than the {f}x downsampling factor"}
        container, stats = codec.encode_image(img, self.model)
        sid = secrets.token_hex(8)
        session = Session(sid, container, img if self.retain_originals else None,
                          self.model, stats)
        self.store.add(session)
        image_bytes, fmt = _encode_response_image(session.base_image)
        return 200, {
            "id": sid,
            "width": session.width,
            "height": session.height,
            "factor": self.model.cfg.downsampling,
            "latent_h": container.header.latent_h,
            "latent_w": container.header.latent_w,
            "bpp_base": session.bpp_base,
            "bpp_enh_total": session.bpp_enh_total,
            "image_b64": base64.b64encode(image_bytes).decode("ascii"),
            "image_format": fmt,
        }

    def enhance(self, sid: str, payload: dict) -> tuple[int, dict]:
        session = self.store.get(sid)
        if session is None:
            return 404, {"error": f"unknown session {sid}"}
        rois = payload.get("rois")
        if not isinstance(rois, list) or not rois:
            return 400, {"error": "body must carry a non-empty 'rois' list"}
        try:
            rects = [tuple(int(v) for v in r) for r in rois]
            if any(len(r) != 4 for r in rects):
                raise ValueError("each ROI must be [x, y, w, h]")
        except (TypeError, ValueError) as e:
            return 400, {"error": str(e)}
        with session.lock:
            try:
                result = session.enhance(rects, self.model)
            except ValueError as e:
                return 400, {"error": str(e)}
            image_bytes, fmt = _encode_response_image(session.current_image)
        result["image_b64"] = base64.b64encode(image_bytes).decode("ascii")
        result["image_format"] = fmt
        return 200, result

    def stats(self, sid: str) -> tuple[int, dict]:
        session = self.store.get(sid)
        if session is None:
            return 404, {"error": f"unknown session {sid}"}
        with session.lock:
            return 200, session.stats()

    def image(self, sid: str, mode: str) -> tuple[int, dict | tuple[str, bytes]]:
        session = self.store.get(sid)
        if session is None:
            return 404, {"error": f"unknown session {sid}"}
        try:
            with session.lock:
                img = session.image(mode)
        except ValueError as e:
            return 400, {"error": str(e)}
        data, fmt = _encode_response_image(img)
        return 200, (_CONTENT_TYPES[fmt], data)

    def spectrum_image(self, sid: str, mode: str) -> tuple[int, dict | tuple[str, bytes]]:
        session = self.store.get(sid)
        if session is None:
            return 404, {"error": f"unknown session {sid}"}
        try:
            with session.lock:
                img = session.image(mode)
        except ValueError as e:
            return 400, {"error": str(e)}
        spec = codec.spectrum(imageio.to_float(img))
        gray = imageio.to_uint8(np.repeat(spec[None], 3, axis=0))
        data, fmt = _encode_response_image(gray)
        return 200, (_CONTENT_TYPES[fmt], data)


_CONTENT_TYPES = {"png": "image/png", "ppm": "image/x-portable-pixmap"}


def _encode_response_image(img_u8: np.ndarray) -> tuple[bytes, str]:
    if imageio.png_available():
        return imageio.encode_png(img_u8), "png"
    return imageio.encode_ppm(img_u8), "ppm"


_ROUTES = [
    ("POST", re.compile(r"^/sessions$"), "create"),
    ("POST", re.compile(r"^/sessions/([0-9a-f]+)/enhance$"), "enhance"),
    ("GET", re.compile(r"^/sessions/([0-9a-f]+)$"), "stats"),
    ("GET", re.compile(r"^/sessions/([0-9a-f]+)/image$"), "image"),
    ("GET", re.compile(r"^/sessions/([0-9a-f]+)/spectrum$"), "spectrum"),
    ("GET", re.compile(r"^/healthz$"), "health"),
]

_STATIC_TYPES = {".html": "text/html", ".js": "text/javascript", ".css": "text/css",
                 ".map": "application/json", ".ico": "image/x-icon"}


def make_handler(service: CodecService, static_dir: str | None = None):
    class Handler(BaseHTTPRequestHandler):
        protocol_version = "HTTP/1.1"

        def log_message(self, fmt, *args):  # quiet by default
            pass

        def _send(self, status: int, content_type: str, body: bytes) -> None:
            self.send_response(status)
            self.send_header("Content-Type", content_type)
            self.send_header("Content-Length", str(len(body)))
            self.send_header("Access-Control-Allow-Origin", "*")
            self.end_headers()
            self.wfile.write(body)

        def _send_json(self, status: int, payload: dict) -> None:
            self._send(status, "application/json", json.dumps(payload).encode("utf-8"))

        def _dispatch(self, method: str) -> None:
            url = urlparse(self.path)
            for verb, pattern, name in _ROUTES:
                if verb != method:
                    continue
                match = pattern.match(url.path)
                if not match:
                    continue
                self._handle(name, match, url)
                return
            if method == "GET" and static_dir is not None:
                self._serve_static(url.path)
                return
            self._send_json(404, {"error": f"no route for {method} {url.path}"})

        def _handle(self, name: str, match, url) -> None:
            if name == "health":
                self._send_json(200, {"status": "ok"})
                return
            if name == "create":
                length = int(self.headers.get("Content-Length", 0))
                body = self.rfile.read(length)
                status, payload = service.create_session(body)
                self._send_json(status, payload)
                return
            sid = match.group(1)
            if name == "enhance":
                length = int(self.headers.get("Content-Length", 0))
                try:
                    payload = json.loads(self.rfile.read(length) or b"{}")
                except json.JSONDecodeError as e:
                    self._send_json(400, {"error": f"bad JSON: {e}"})
                    return
                status, result = service.enhance(sid, payload)
                self._send_json(status, result)
                return
            if name == "stats":
                status, result = service.stats(sid)
                self._send_json(status, result)
                return
            mode = parse_qs(url.query).get("mode", ["current"])[0]
            if name == "image":
                status, result = service.image(sid, mode)
            else:
                status, result = service.spectrum_image(sid, mode)
            if isinstance(result, dict):
                self._send_json(status, result)
            else:
                self._send(status, result[0], result[1])

        def _serve_static(self, path: str) -> None:
            root = Path(static_dir).resolve()
            rel = path.lstrip("/") or "index.html"
            target = (root / rel).resolve()
            if not target.is_relative_to(root) or not target.is_file():
                self._send_json(404, {"error": f"not found: {path}"})
                return
            ctype = _STATIC_TYPES.get(target.suffix, "application/octet-stream")
            self._send(200, ctype, target.read_bytes())

        def do_GET(self):
            self._dispatch("GET")

        def do_POST(self):
            self._dispatch("POST")

        def do_OPTIONS(self):
            self.send_response(204)
            self.send_header("Access-Control-Allow-Origin", "*")
            self.send_header("Access-Control-Allow-Methods", "GET, POST, OPTIONS")
            self.send_header("Access-Control-Allow-Headers", "Content-Type")
            self.send_header("Content-Length", "0")
            self.end_headers()

    return Handler


def create_server(model: CodecModel, host: str = "127.0.0.1", port: int = 8080,
                  static_dir: str | None = None, retain_originals: bool = True,
                  session_cap: int = 32) -> ThreadingHTTPServer:
    service = CodecService(model, retain_originals=retain_originals, session_cap=session_cap)
    server = ThreadingHTTPServer((host, port), make_handler(service, static_dir))
    server.codec_service = service  # for tests and introspection
    return server
