"""The targeted downstream service: head composed over a hidden encoder.

A service only exposes ``predict``; callers never see the encoder or the
head.  Every queried image bumps the query counter exactly once, defense
transforms included.  ``output_mode`` caps disclosure: a "hard" service
refuses soft-logit queries the way a label-only API would.
"""

from __future__ import annotations

import threading
from typing import Callable

import numpy as np

from .core import BehaviorValue, HardLabel, SoftLogits
from .head import DownstreamHead
from .zoo import ToyEncoder

Transform = Callable[[np.ndarray], np.ndarray]


class ServiceInstance:
    def __init__(self, name: str, encoder: ToyEncoder, head: DownstreamHead,
                 output_mode: str = "hard",
                 transform: Transform | None = None):
        if output_mode not in ("hard", "soft"):
            raise ValueError(f"output_mode must be 'hard' or 'soft', got {output_mode!r}")
        if head.input_dim != encoder.embedding_dim:
            raise ValueError("head input width does not match encoder dim")
        self.name = name
        self.encoder = encoder
        self.head = head
        self.output_mode = output_mode
        self.transform = transform
        self._queries = 0
        self._lock = threading.Lock()

    @property
    def input_shape(self) -> tuple[int, int, int]:
        return self.encoder.input_shape

    @property
    def classes(self) -> int:
        return self.head.classes

    @property
    def query_count(self) -> int:
        return self._queries

    def allows(self, mode: str) -> bool:
        return mode == "hard" or self.output_mode == "soft"

    def with_transform(self, transform: Transform) -> "ServiceInstance":
        """Same encoder and head behind a preprocessing transform, fresh counter."""
        return ServiceInstance(self.name, self.encoder, self.head,
                               self.output_mode, transform)

    def predict(self, batch: np.ndarray, mode: str | None = None) -> list[BehaviorValue]:
        mode = mode or self.output_mode
        if mode not in ("hard", "soft"):
            raise ValueError(f"unknown mode {mode!r}")
        if not self.allows(mode):
            raise PermissionError(f"service {self.name!r} only serves hard labels")
        batch = np.asarray(batch, dtype=np.float32)
        if batch.ndim == 3:
            batch = batch[np.newaxis]
        if self.transform is not None:
            batch = np.stack([self.transform(img) for img in batch])
        if batch.shape[1:] != self.input_shape:
            raise ValueError(f"batch shape {batch.shape[1:]} does not match "
                             f"service input {self.input_shape}")
        with self._lock:
            self._queries += len(batch)
        logits = self.head.logits(self.encoder.encode_batch(batch))
        if mode == "soft":
            return [SoftLogits(row.copy()) for row in logits]
        return [HardLabel(int(k)) for k in np.argmax(logits, axis=1)]


def service_predict(service: ServiceInstance, batch: np.ndarray,
                    mode: str | None = None) -> list[BehaviorValue]:
    return service.predict(batch, mode)
