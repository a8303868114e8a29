"""HTTP/JSON service exposing the engine to the browser console and scripts.

Built on the standard library's threading HTTP server: engine calls are
read-only over the immutable volume, so concurrent requests need no
coordination beyond the session map's lock. Every response body is JSON
with a schema_version field; slices travel as row-major 8-bit grayscale
base64.
"""

import base64
import json
import mimetypes
import threading
from dataclasses import dataclass, field
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from pathlib import Path

from .evaluation import TrajectoryConfig, simulate_scan
from .geometry import GuidanceInstruction, Pose, transform_to_sp
from .registration import RegistrationConfig, register_slice
from .volume import SliceImage, Volume, dequantize_u8, quantize_u8, sample_slice

SCHEMA_VERSION = 1
DEFAULT_PORT = 8080
MAX_BODY_BYTES = 8 * 1024 * 1024
MAX_SLICE_SIZE = 1024
MAX_SIMULATE_STEPS = 200
MAX_SIMULATE_SIZE = 256


class RequestError(Exception):
    """Maps straight to an HTTP status with a JSON error body."""

    def __init__(self, status: int, message: str):
        super().__init__(message)
        self.status = status


@dataclass
class SessionState:
    """Per-client context the service tracks on request."""

    session_id: str
    volume_name: str
    pose: Pose | None = None
    sp_id: str | None = None
    last_guidance: GuidanceInstruction | None = None


@dataclass
class AppState:
    """Everything the handler needs; the volume and plane defs never mutate."""

    volume: Volume | None
    planes: dict
    reg_cfg: RegistrationConfig
    cors: bool = False
    static_dir: Path | None = None
    sessions: dict = field(default_factory=dict)
    lock: threading.Lock = field(default_factory=threading.Lock)

    def require_volume(self) -> Volume:
        if self.volume is None:
            raise RequestError(409, "no volume loaded")
        return self.volume

    def plane(self, sp_id):
        if not isinstance(sp_id, str) or sp_id not in self.planes:
            raise RequestError(
                400, f"unknown standard plane {sp_id!r}; available: {sorted(self.planes)}"
            )
        return self.planes[sp_id]

    def touch_session(self, body: dict, **updates) -> str | None:
        session_id = body.get("session_id")
        if session_id is None:
            return None
        if not isinstance(session_id, str) or not session_id:
            raise RequestError(400, "session_id must be a non-empty string")
        volume = self.require_volume()
        with self.lock:
            session = self.sessions.get(session_id)
            if session is None:
                session = SessionState(session_id=session_id, volume_name=volume.name)
                self.sessions[session_id] = session
            for name, value in updates.items():
                setattr(session, name, value)
        return session_id


def _parse_pose(value) -> Pose:
    if not isinstance(value, dict):
        raise RequestError(400, "pose must be an object with q and delta")
    try:
        return Pose.from_dict(value)
    except (KeyError, ValueError, TypeError) as exc:
        raise RequestError(400, f"malformed pose: {exc}") from None


def _int_in_range(body: dict, name: str, default: int, low: int, high: int) -> int:
    value = body.get(name, default)
    if not isinstance(value, int) or isinstance(value, bool) or not low <= value <= high:
        raise RequestError(400, f"{name} must be an integer in [{low}, {high}]")
    return value


def _slice_payload(image) -> dict:
    pixels = quantize_u8(image)
    h, w = pixels.shape
    return {
        "width": w,
        "height": h,
        "pixels_b64": base64.b64encode(pixels.tobytes()).decode("ascii"),
    }


def _handle_volume(app: AppState, body) -> dict:
    volume = app.require_volume()
    return {
        "name": volume.name,
        "dims": list(volume.dims),
        "standard_planes": [sp.to_dict() for sp in app.planes.values()],
    }


def _handle_slice(app: AppState, body: dict) -> dict:
    volume = app.require_volume()
    pose = _parse_pose(body.get("pose"))
    width = _int_in_range(body, "width", 160, 4, MAX_SLICE_SIZE)
    height = _int_in_range(body, "height", 160, 4, MAX_SLICE_SIZE)
    image = sample_slice(volume, pose, out_w=width, out_h=height)
    payload = _slice_payload(image)
    app.touch_session(body, pose=pose)
    return payload


def _decode_image(body: dict) -> SliceImage:
    width = _int_in_range(body, "width", -1, 4, MAX_SLICE_SIZE)
    height = _int_in_range(body, "height", -1, 4, MAX_SLICE_SIZE)
    encoded = body.get("pixels_b64")
    if not isinstance(encoded, str):
        raise RequestError(400, "pixels_b64 must be a base64 string")
    try:
        raw = base64.b64decode(encoded, validate=True)
    except Exception as exc:
        raise RequestError(400, f"pixels_b64 is not valid base64: {exc}") from None
    try:
        arr = dequantize_u8(raw, height, width)
    except ValueError as exc:
        raise RequestError(400, str(exc)) from None
    return SliceImage(intensities=arr)


def _handle_register(app: AppState, body: dict) -> dict:
    volume = app.require_volume()
    image = _decode_image(body)
    result = register_slice(volume, image, app.reg_cfg)
    app.touch_session(body, pose=result.pose)
    return result.to_dict()


def _handle_guidance(app: AppState, body: dict) -> dict:
    app.require_volume()
    pose = _parse_pose(body.get("pose"))
    sp = app.plane(body.get("sp_id"))
    instruction = transform_to_sp(pose, sp)
    app.touch_session(body, pose=pose, sp_id=sp.sp_id, last_guidance=instruction)
    return instruction.to_dict()


def _handle_simulate(app: AppState, body: dict) -> dict:
    volume = app.require_volume()
    sp = app.plane(body.get("sp_id"))
    seed = body.get("seed", 0)
    if not isinstance(seed, int) or isinstance(seed, bool):
        raise RequestError(400, "seed must be an integer")
    steps = _int_in_range(body, "steps", TrajectoryConfig().steps, 1, MAX_SIMULATE_STEPS)
    size = _int_in_range(body, "size", 160, 16, MAX_SIMULATE_SIZE)
    frame_noise = body.get("frame_noise", 0.0)
    if not isinstance(frame_noise, (int, float)) or isinstance(frame_noise, bool) or not 0.0 <= frame_noise <= 1.0:
        raise RequestError(400, "frame_noise must be a number in [0, 1]")
    cfg = TrajectoryConfig(steps=steps, rng_seed=seed, frame_noise=float(frame_noise))
    scan, poses = simulate_scan(volume, sp, cfg, size=size)
    return {
        "sp_id": scan.sp_id,
        "sp_index": scan.sp_index,
        "frame_count": len(scan),
        "width": size,
        "height": size,
        "probe_q": scan.probe_q.tolist(),
        "delta": [float(v) for v in sp.delta_sp],
        "frames": [
            base64.b64encode(quantize_u8(frame).tobytes()).decode("ascii")
            for frame in scan.frames
        ],
    }


_POST_ROUTES = {
    "/api/slice": _handle_slice,
    "/api/register": _handle_register,
    "/api/guidance": _handle_guidance,
    "/api/simulate": _handle_simulate,
}


def _build_handler(app: AppState):
    class Handler(BaseHTTPRequestHandler):
        protocol_version = "HTTP/1.1"

        def log_message(self, fmt, *args):
            pass

        def _send_json(self, status: int, payload: dict):
            payload = dict(payload)
            payload["schema_version"] = SCHEMA_VERSION
            body = json.dumps(payload).encode("utf-8")
            self.send_response(status)
            self.send_header("Content-Type", "application/json")
            self.send_header("Content-Length", str(len(body)))
            if app.cors:
                self.send_header("Access-Control-Allow-Origin", "*")
            self.end_headers()
            self.wfile.write(body)

        def _send_static(self, path: str):
            root = app.static_dir
            if root is None:
                self._send_json(404, {"error": f"unknown route {path}"})
                return
            relative = path.lstrip("/") or "index.html"
            target = (root / relative).resolve()
            if not str(target).startswith(str(root.resolve())) or not target.is_file():
                self._send_json(404, {"error": f"unknown route {path}"})
                return
            content = target.read_bytes()
            ctype = mimetypes.guess_type(target.name)[0] or "application/octet-stream"
            self.send_response(200)
            self.send_header("Content-Type", ctype)
            self.send_header("Content-Length", str(len(content)))
            if app.cors:
                self.send_header("Access-Control-Allow-Origin", "*")
            self.end_headers()
            self.wfile.write(content)

        def _read_body(self) -> dict:
            length = self.headers.get("Content-Length")
            try:
                length = int(length)
            except (TypeError, ValueError):
                raise RequestError(400, "Content-Length required") from None
            if not 0 <= length <= MAX_BODY_BYTES:
                raise RequestError(400, f"body too large (limit {MAX_BODY_BYTES} bytes)")
            raw = self.rfile.read(length)
            try:
                body = json.loads(raw.decode("utf-8"))
            except (UnicodeDecodeError, json.JSONDecodeError) as exc:
                raise RequestError(400, f"body is not valid JSON: {exc}") from None
            if not isinstance(body, dict):
                raise RequestError(400, "body must be a JSON object")
            return body

        def do_GET(self):
            try:
                if self.path == "/api/volume":
                    self._send_json(200, _handle_volume(app, None))
                elif self.path.startswith("/api/"):
                    raise RequestError(404, f"unknown route {self.path}")
                else:
                    self._send_static(self.path)
            except RequestError as exc:
                self._send_json(exc.status, {"error": str(exc)})
            except Exception as exc:
                self._send_json(500, {"error": f"internal error: {exc}"})

        def do_POST(self):
            try:
                handler = _POST_ROUTES.get(self.path)
                if handler is None:
                    raise RequestError(404, f"unknown route {self.path}")
                self._send_json(200, handler(app, self._read_body()))
            except RequestError as exc:
                self._send_json(exc.status, {"error": str(exc)})
            except Exception as exc:
                self._send_json(500, {"error": f"internal error: {exc}"})

        def do_OPTIONS(self):
            self.send_response(204)
            if app.cors:
                self.send_header("Access-Control-Allow-Origin", "*")
                self.send_header("Access-Control-Allow-Methods", "GET, POST, OPTIONS")
                self.send_header("Access-Control-Allow-Headers", "Content-Type")
            self.send_header("Content-Length", "0")
            self.end_headers()

    return Handler


def make_server(
    volume: Volume | None,
    standard_planes,
    host: str = "127.0.0.1",
    port: int = DEFAULT_PORT,
    cors: bool = False,
    static_dir=None,
    reg_cfg: RegistrationConfig = RegistrationConfig(),
) -> ThreadingHTTPServer:
    """Build the HTTP server without starting it; port 0 picks a free port."""
    app = AppState(
        volume=volume,
        planes={sp.sp_id: sp for sp in standard_planes},
        reg_cfg=reg_cfg,
        cors=cors,
        static_dir=Path(static_dir) if static_dir is not None else None,
    )
    server = ThreadingHTTPServer((host, port), _build_handler(app))
    server.app = app
    return server


def serve_forever(
    volume: Volume | None,
    standard_planes,
    host: str = "127.0.0.1",
    port: int = DEFAULT_PORT,
    cors: bool = False,
    static_dir=None,
    reg_cfg: RegistrationConfig = RegistrationConfig(),
) -> None:
    server = make_server(
        volume, standard_planes, host=host, port=port,
        cors=cors, static_dir=static_dir, reg_cfg=reg_cfg,
    )
    bound_host, bound_port = server.server_address[:2]
    print(f"serving on http://{bound_host}:{bound_port}")
    try:
        server.serve_forever()
    finally:
        server.server_close()
