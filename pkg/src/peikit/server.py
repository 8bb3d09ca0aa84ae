"""HTTP endpoints simulating encoder-as-a-service APIs.

Two endpoint kinds share one protocol family:

* encoder endpoint:  POST /v1/encode   {"images": [wire...], "request_id"?}
                     -> {"embeddings": [[...]], "billed": n}
* service endpoint:  POST /v1/predict  {"images": [...], "mode": "hard"|"soft"}
                     -> {"labels": [...]} | {"logits": [[...]]}
* both:              GET /v1/meter     -> {"queries": n, "cost": "x"}
                     GET /v1/info      -> shapes and names

Billing is per image, not per request.  A request that carries a
``request_id`` is idempotent: the first execution is cached, and a retry
with the same id replays the cached response without touching the meter.
Meter state is persisted through an append-only JSON-lines log (one
``{ts, endpoint, n}`` object per line) and restored on restart.

Error codes: 400 malformed payload, 403 disallowed mode, 404 unknown
route, 422 image shape mismatch.
"""

from __future__ import annotations

import json
import threading
import time
from decimal import Decimal
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from pathlib import Path

import numpy as np

from .core import HardLabel, SoftLogits
from .service import ServiceInstance
from .wire import decode_image
from .zoo import ToyEncoder


class MeterState:
    """Monotone per-endpoint query counter backed by an append-only log."""

    def __init__(self, endpoint: str, price_per_query="0",
                 log_path: str | Path | None = None):
        self.endpoint = endpoint
        self.price = Decimal(str(price_per_query))
        self.log_path = Path(log_path) if log_path else None
        self._count = 0
        self._lock = threading.Lock()
        if self.log_path and self.log_path.exists():
            for line in self.log_path.read_text().splitlines():
                if not line.strip():
                    continue
                rec = json.loads(line)
                if rec.get("endpoint") == endpoint:
                    self._count += int(rec["n"])

    def add(self, n: int) -> int:
        with self._lock:
            self._count += n
            if self.log_path:
                rec = {"ts": time.time(), "endpoint": self.endpoint, "n": n}
                with open(self.log_path, "a") as fh:
                    fh.write(json.dumps(rec) + "\n")
            return self._count

    @property
    def queries(self) -> int:
        with self._lock:
            return self._count

    def cost(self) -> Decimal:
        return self.queries * self.price

    def snapshot(self) -> dict:
        return {"queries": self.queries, "cost": str(self.cost())}


class HttpError(Exception):
    def __init__(self, status: int, code: str, message: str):
        super().__init__(message)
        self.status = status
        self.code = code


class _App:
    """One bound endpoint: routing, dedup cache, meter, failure injection."""

    def __init__(self, name: str, meter: MeterState, failure_injector=None):
        self.name = name
        self.meter = meter
        self.failure_injector = failure_injector
        self._cache: dict[str, bytes] = {}
        self._cache_lock = threading.Lock()

    # subclasses provide: routes() -> {path: handler(body) -> dict}, info() -> dict

    def handle_post(self, path: str, body: dict) -> tuple[bytes, bool]:
        """Returns (response bytes, drop_response flag)."""
        handler = self.routes().get(path)
        if handler is None:
            raise HttpError(404, "not-found", f"unknown route {path}")
        request_id = body.get("request_id")
        if request_id is not None and not isinstance(request_id, str):
            raise HttpError(400, "bad-request-id", "request_id must be a string")

        if request_id is not None:
            with self._cache_lock:
                cached = self._cache.get(request_id)
            if cached is not None:
                return cached, self._should_drop(request_id, path, replay=True)

        payload = json.dumps(handler(body)).encode()
        if request_id is not None:
            with self._cache_lock:
                self._cache[request_id] = payload
        return payload, self._should_drop(request_id, path, replay=False)

    def handle_get(self, path: str) -> bytes:
        if path == "/v1/meter":
            return json.dumps(self.meter.snapshot()).encode()
        if path == "/v1/info":
            return json.dumps(self.info()).encode()
        raise HttpError(404, "not-found", f"unknown route {path}")

    def _should_drop(self, request_id, path, replay: bool) -> bool:
        if self.failure_injector is None:
            return False
        return bool(self.failure_injector(request_id, path, replay))

    @staticmethod
    def _decode_images(body: dict, expected_shape) -> np.ndarray:
        if not isinstance(body, dict) or "images" not in body:
            raise HttpError(400, "malformed", "body must carry an 'images' list")
        items = body["images"]
        if not isinstance(items, list) or not items:
            raise HttpError(400, "malformed", "'images' must be a nonempty list")
        decoded = []
        for i, item in enumerate(items):
            try:
                img = decode_image(item)
            except ValueError as exc:
                raise HttpError(400, "malformed", f"image {i}: {exc}") from None
            if img.shape != tuple(expected_shape):
                raise HttpError(422, "shape-mismatch",
                                f"image {i} has shape {list(img.shape)}, "
                                f"endpoint expects {list(expected_shape)}")
            decoded.append(img)
        return np.stack(decoded)


class EncoderApp(_App):
    def __init__(self, encoder: ToyEncoder, meter: MeterState, failure_injector=None):
        super().__init__(encoder.name, meter, failure_injector)
        self.encoder = encoder

    def routes(self):
        return {"/v1/encode": self._encode}

    def info(self):
        return {"kind": "encoder", "name": self.encoder.name,
                "input_shape": list(self.encoder.input_shape),
                "embedding_dim": self.encoder.embedding_dim}

    def _encode(self, body: dict) -> dict:
        batch = self._decode_images(body, self.encoder.input_shape)
        embeddings = self.encoder.encode_batch(batch)
        billed = self.meter.add(len(batch))
        return {"embeddings": [[float(v) for v in row] for row in embeddings],
                "billed": len(batch), "total_billed": billed}


class PredictApp(_App):
    def __init__(self, service: ServiceInstance, meter: MeterState,
                 failure_injector=None):
        super().__init__(service.name, meter, failure_injector)
        self.service = service

    def routes(self):
        return {"/v1/predict": self._predict}

    def info(self):
        return {"kind": "service", "name": self.service.name,
                "input_shape": list(self.service.input_shape),
                "classes": self.service.classes,
                "output_mode": self.service.output_mode}

    def _predict(self, body: dict) -> dict:
        mode = body.get("mode", "hard")
        if mode not in ("hard", "soft"):
            raise HttpError(400, "malformed", f"unknown mode {mode!r}")
        if not self.service.allows(mode):
            raise HttpError(403, "mode-forbidden",
                            "this service only returns hard labels")
        # a defended service resizes internally, so accept any spatial size
        expected = None if self.service.transform is not None \
            else self.service.input_shape
        if expected is None:
            items = body.get("images")
            if not isinstance(items, list) or not items:
                raise HttpError(400, "malformed", "'images' must be a nonempty list")
            try:
                batch = np.stack([decode_image(it) for it in items])
            except ValueError as exc:
                raise HttpError(400, "malformed", str(exc)) from None
        else:
            batch = self._decode_images(body, expected)
        outputs = self.service.predict(batch, mode)
        self.meter.add(len(batch))
        if mode == "hard":
            return {"labels": [o.label for o in outputs
                               if isinstance(o, HardLabel)]}
        return {"logits": [[float(v) for v in o.logits] for o in outputs
                           if isinstance(o, SoftLogits)]}


class _Handler(BaseHTTPRequestHandler):
    protocol_version = "HTTP/1.1"
    app: _App = None  # bound per server below

    def log_message(self, fmt, *args):  # quiet by default
        pass

    def _reply(self, status: int, payload: bytes):
        self.send_response(status)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(payload)))
        self.end_headers()
        self.wfile.write(payload)

    def _reply_error(self, err: HttpError):
        body = json.dumps({"error": err.code, "message": str(err)}).encode()
        self._reply(err.status, body)

    def do_GET(self):
        try:
            self._reply(200, self.app.handle_get(self.path))
        except HttpError as err:
            self._reply_error(err)

    def do_POST(self):
        try:
            length = int(self.headers.get("Content-Length", 0))
            raw = self.rfile.read(length)
            try:
                body = json.loads(raw)
            except json.JSONDecodeError as exc:
                raise HttpError(400, "malformed", f"invalid JSON: {exc}") from None
            payload, drop = self.app.handle_post(self.path, body)
            if drop:
                # simulate a transport fault after the work was done
                self.connection.close()
                return
            self._reply(200, payload)
        except HttpError as err:
            self._reply_error(err)
        except Exception as exc:  # noqa: BLE001
            self._reply_error(HttpError(500, "internal", repr(exc)))


class ServerHandle:
    def __init__(self, app: _App, host: str = "127.0.0.1", port: int = 0):
        handler = type("BoundHandler", (_Handler,), {"app": app})
        self.app = app
        self.httpd = ThreadingHTTPServer((host, port), handler)
        self.httpd.daemon_threads = True
        self.thread = threading.Thread(target=self.httpd.serve_forever,
                                       name=f"peikit-{app.name}", daemon=True)
        self.thread.start()

    @property
    def url(self) -> str:
        host, port = self.httpd.server_address[:2]
        return f"http://{host}:{port}"

    @property
    def meter(self) -> MeterState:
        return self.app.meter

    def close(self):
        self.httpd.shutdown()
        self.httpd.server_close()
        self.thread.join(timeout=5)

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def serve_encoder(encoder: ToyEncoder, host: str = "127.0.0.1", port: int = 0,
                  price_per_query="0", log_path=None,
                  failure_injector=None) -> ServerHandle:
    meter = MeterState(encoder.name, price_per_query, log_path)
    return ServerHandle(EncoderApp(encoder, meter, failure_injector), host, port)


def serve_service(service: ServiceInstance, host: str = "127.0.0.1",
                  port: int = 0, price_per_query="0", log_path=None,
                  failure_injector=None) -> ServerHandle:
    meter = MeterState(service.name, price_per_query, log_path)
    return ServerHandle(PredictApp(service, meter, failure_injector), host, port)
