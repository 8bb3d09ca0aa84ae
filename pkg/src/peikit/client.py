"""Wire clients conforming to the in-process query interfaces.

A remote encoder exposes encode/encode_batch exactly like a local handle,
so the synthesis loop cannot tell the transports apart.  Retries are
idempotent: every logical request carries a fresh request id that is kept
across retries, and the server deduplicates on it, so a retried timeout
never double-bills.
"""

from __future__ import annotations

import time
import uuid

import numpy as np
import requests

from .core import BehaviorValue, HardLabel, SoftLogits
from .errors import TransportFailure
from .wire import encode_image

DEFAULT_RETRIES = 3
DEFAULT_BACKOFF = 0.05


class _RemoteBase:
    def __init__(self, base_url: str, retries: int = DEFAULT_RETRIES,
                 backoff: float = DEFAULT_BACKOFF, timeout: float = 60.0):
        self.base_url = base_url.rstrip("/")
        self.retries = retries
        self.backoff = backoff
        self.timeout = timeout
        self.session = requests.Session()
        info = self._get("/v1/info")
        self.name = info["name"]
        self.input_shape = tuple(info["input_shape"])
        self._info = info

    def _get(self, path: str) -> dict:
        try:
            resp = self.session.get(self.base_url + path, timeout=self.timeout)
        except requests.RequestException as exc:
            raise TransportFailure(f"GET {path} failed: {exc}") from exc
        resp.raise_for_status()
        return resp.json()

    def _post(self, path: str, body: dict) -> dict:
        """POST with bounded retries; the request id survives retries."""
        body = dict(body)
        body["request_id"] = str(uuid.uuid4())
        last_error = None
        for attempt in range(self.retries + 1):
            try:
                resp = self.session.post(self.base_url + path, json=body,
                                         timeout=self.timeout)
            except requests.RequestException as exc:
                last_error = exc
                time.sleep(self.backoff * (2 ** attempt))
                continue
            if resp.status_code != 200:
                detail = resp.json() if resp.content else {}
                raise TransportFailure(
                    f"POST {path} -> HTTP {resp.status_code}: "
                    f"{detail.get('error', '?')}: {detail.get('message', '')}")
            return resp.json()
        raise TransportFailure(
            f"POST {path} exhausted {self.retries} retries: {last_error}")

    def meter(self) -> dict:
        return self._get("/v1/meter")


class RemoteEncoder(_RemoteBase):
    """Encoder handle backed by a /v1/encode endpoint."""

    def __init__(self, base_url: str, **kw):
        super().__init__(base_url, **kw)
        if self._info.get("kind") != "encoder":
            raise TransportFailure(f"{base_url} is not an encoder endpoint")
        self.embedding_dim = int(self._info["embedding_dim"])

    def encode(self, x: np.ndarray) -> np.ndarray:
        return self.encode_batch(np.asarray(x)[np.newaxis])[0]

    def encode_batch(self, batch: np.ndarray) -> np.ndarray:
        batch = np.asarray(batch, dtype=np.float32)
        payload = {"images": [encode_image(img) for img in batch]}
        out = self._post("/v1/encode", payload)
        return np.asarray(out["embeddings"], dtype=np.float32)


class RemoteService(_RemoteBase):
    """Service handle backed by a /v1/predict endpoint."""

    def __init__(self, base_url: str, **kw):
        super().__init__(base_url, **kw)
        if self._info.get("kind") != "service":
            raise TransportFailure(f"{base_url} is not a service endpoint")
        self.output_mode = self._info["output_mode"]
        self.classes = int(self._info["classes"])

    def allows(self, mode: str) -> bool:
        return mode == "hard" or self.output_mode == "soft"

    @property
    def query_count(self) -> int:
        return int(self.meter()["queries"])

    def predict(self, batch: np.ndarray, mode: str | None = None) -> list[BehaviorValue]:
        mode = mode or "hard"
        batch = np.asarray(batch, dtype=np.float32)
        if batch.ndim == 3:
            batch = batch[np.newaxis]
        payload = {"images": [encode_image(img) for img in batch], "mode": mode}
        out = self._post("/v1/predict", payload)
        if mode == "hard":
            return [HardLabel(int(v)) for v in out["labels"]]
        return [SoftLogits(np.asarray(row, dtype=np.float32))
                for row in out["logits"]]
