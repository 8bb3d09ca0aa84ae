"""Toy encoder family used as stand-ins for public pre-trained encoders.

Four architectures with genuinely different embedding geometry, so that a
sample optimized to match a target embedding under one encoder looks like
noise to the others:

* ``LinearProject``   e = W x                      (random projection)
* ``PatchProject``    e = tanh(V p(x))             (patch means, projected)
* ``RandomConv``      e = U avgpool(relu(conv(x))) (fixed seeded stencils)
* ``FourierFeature``  e = sqrt(2/d) [cos(w_i.x), sin(w_i.x)]  (paired rows)

Every weight is drawn from the encoder seed in a fixed order, so encode is
a pure deterministic function.  Inputs only need to be finite: optimization
probes legitimately lie outside [0, 1].
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import squared_embedding_loss
from .seeds import rng_from_seed

ARCHITECTURES = ("LinearProject", "PatchProject", "RandomConv", "FourierFeature")


@dataclass(frozen=True)
class ToyEncoderSpec:
    name: str
    architecture: str
    seed: int
    input_shape: tuple[int, int, int]  # (H, W, C)
    embedding_dim: int

    def to_json(self) -> dict:
        return {
            "name": self.name,
            "architecture": self.architecture,
            "seed": self.seed,
            "input_shape": list(self.input_shape),
            "embedding_dim": self.embedding_dim,
        }

    @staticmethod
    def from_json(obj: dict) -> "ToyEncoderSpec":
        return ToyEncoderSpec(
            name=obj["name"],
            architecture=obj["architecture"],
            seed=int(obj["seed"]),
            input_shape=tuple(obj["input_shape"]),
            embedding_dim=int(obj["embedding_dim"]),
        )


class ToyEncoder:
    """Base query interface: ``encode`` one image or ``encode_batch`` many."""

    def __init__(self, spec: ToyEncoderSpec):
        self.spec = spec
        self.input_shape = spec.input_shape
        self.embedding_dim = spec.embedding_dim

    @property
    def name(self) -> str:
        return self.spec.name

    def encode(self, x: np.ndarray) -> np.ndarray:
        return self.encode_batch(x[np.newaxis])[0]

    def encode_batch(self, batch: np.ndarray) -> np.ndarray:
        batch = np.asarray(batch, dtype=np.float32)
        if batch.ndim != 4 or batch.shape[1:] != self.input_shape:
            raise ValueError(f"{self.name}: batch shape {batch.shape} does not "
                             f"match input shape {self.input_shape}")
        out = self._encode_batch(batch)
        return np.ascontiguousarray(out, dtype=np.float32)

    def _encode_batch(self, batch: np.ndarray) -> np.ndarray:
        raise NotImplementedError


class LinearProject(ToyEncoder):
    def __init__(self, spec: ToyEncoderSpec):
        super().__init__(spec)
        n = int(np.prod(spec.input_shape))
        rng = rng_from_seed(spec.seed)
        self.weight = (rng.standard_normal((spec.embedding_dim, n))
                       / np.sqrt(n)).astype(np.float32)

    def _encode_batch(self, batch):
        flat = batch.reshape(batch.shape[0], -1)
        return flat @ self.weight.T

    def analytic_loss_gradient(self, x: np.ndarray, target: np.ndarray) -> np.ndarray:
        """Exact input-space gradient of the squared embedding loss.

        For e(x) = W x the loss ||W x - t||^2 has gradient 2 W^T (W x - t),
        returned in the image shape.  Serves as the oracle for validating
        the zeroth-order estimator.
        """
        flat = np.asarray(x, dtype=np.float32).reshape(-1)
        residual = self.weight.astype(np.float64) @ flat.astype(np.float64)
        residual -= np.asarray(target, dtype=np.float64)
        grad = 2.0 * (self.weight.astype(np.float64).T @ residual)
        return grad.reshape(self.input_shape)


class PatchProject(ToyEncoder):
    """Per-patch channel means through a tanh-squashed random projection."""

    GRID = 4

    def __init__(self, spec: ToyEncoderSpec):
        super().__init__(spec)
        h, w, c = spec.input_shape
        if h % self.GRID or w % self.GRID:
            raise ValueError(f"PatchProject needs H, W divisible by {self.GRID}")
        n_feat = self.GRID * self.GRID * c
        rng = rng_from_seed(spec.seed)
        self.weight = (rng.standard_normal((spec.embedding_dim, n_feat))
                       * 3.0 / np.sqrt(n_feat)).astype(np.float32)

    def _encode_batch(self, batch):
        b, (h, w, c) = batch.shape[0], self.input_shape
        g = self.GRID
        patches = batch.reshape(b, g, h // g, g, w // g, c).mean(axis=(2, 4))
        feats = patches.reshape(b, -1)
        return np.tanh(feats @ self.weight.T)


class RandomConv(ToyEncoder):
    """Fixed 3x3 stencils, ReLU, average pooling, random readout."""

    KERNELS = 8
    POOL_GRID = 6

    def __init__(self, spec: ToyEncoderSpec):
        super().__init__(spec)
        h, w, c = spec.input_shape
        if h - 2 < self.POOL_GRID or w - 2 < self.POOL_GRID:
            raise ValueError("RandomConv input too small for 3x3 conv + pooling")
        rng = rng_from_seed(spec.seed)
        self.kernels = (rng.standard_normal((self.KERNELS, 3, 3, c))
                        / np.sqrt(9 * c)).astype(np.float32)
        self.bias = (rng.standard_normal(self.KERNELS) * 0.1).astype(np.float32)
        n_feat = self.POOL_GRID * self.POOL_GRID * self.KERNELS
        self.readout = (rng.standard_normal((spec.embedding_dim, n_feat))
                        * 2.0 / np.sqrt(n_feat)).astype(np.float32)

    def _encode_batch(self, batch):
        windows = np.lib.stride_tricks.sliding_window_view(batch, (3, 3), axis=(1, 2))
        # windows: (B, H-2, W-2, C, 3, 3); kernels: (K, 3, 3, C)
        conv = np.einsum("bhwcij,kijc->bhwk", windows, self.kernels,
                         optimize=True) + self.bias
        act = np.maximum(conv, 0.0)
        g = self.POOL_GRID
        hh, ww = act.shape[1], act.shape[2]
        ph, pw = hh // g, ww // g
        act = act[:, : g * ph, : g * pw]
        pooled = act.reshape(act.shape[0], g, ph, g, pw, self.KERNELS).mean(axis=(2, 4))
        feats = pooled.reshape(act.shape[0], -1)
        return feats @ self.readout.T


class FourierFeature(ToyEncoder):
    """Random Fourier features without phase offsets.

    e(x) = sqrt(2/d) * [cos(w_1.x), sin(w_1.x), ..., cos(w_{d/2}.x), sin(w_{d/2}.x)]

    with rows w_i ~ N(0, (2/sqrt(n))^2 I).  The zero image therefore maps to
    sqrt(2/d) * (1, 0, 1, 0, ...).
    """

    FREQ_SCALE = 2.0

    def __init__(self, spec: ToyEncoderSpec):
        super().__init__(spec)
        if spec.embedding_dim % 2:
            raise ValueError("FourierFeature needs an even embedding dim")
        n = int(np.prod(spec.input_shape))
        rng = rng_from_seed(spec.seed)
        self.freqs = (rng.standard_normal((spec.embedding_dim // 2, n))
                      * self.FREQ_SCALE / np.sqrt(n)).astype(np.float32)

    def _encode_batch(self, batch):
        flat = batch.reshape(batch.shape[0], -1)
        phases = flat @ self.freqs.T
        scale = np.sqrt(2.0 / self.embedding_dim)
        out = np.empty((batch.shape[0], self.embedding_dim), dtype=np.float32)
        out[:, 0::2] = scale * np.cos(phases)
        out[:, 1::2] = scale * np.sin(phases)
        return out


_BUILDERS = {
    "LinearProject": LinearProject,
    "PatchProject": PatchProject,
    "RandomConv": RandomConv,
    "FourierFeature": FourierFeature,
}


def build_encoder(spec: ToyEncoderSpec) -> ToyEncoder:
    if spec.architecture not in _BUILDERS:
        raise ValueError(f"unknown architecture {spec.architecture!r}; "
                         f"expected one of {sorted(_BUILDERS)}")
    if spec.embedding_dim < 2:
        raise ValueError("embedding_dim must be >= 2")
    if len(spec.input_shape) != 3 or min(spec.input_shape) < 1:
        raise ValueError(f"invalid input shape {spec.input_shape}")
    return _BUILDERS[spec.architecture](spec)


def analytic_gradient(encoder: ToyEncoder, x: np.ndarray,
                      target: np.ndarray) -> np.ndarray:
    """Exact gradient of the squared embedding loss; LinearProject only."""
    if not hasattr(encoder, "analytic_loss_gradient"):
        raise NotImplementedError(
            f"analytic gradient unsupported for {encoder.spec.architecture}")
    return encoder.analytic_loss_gradient(x, target)


def embedding_loss_to_target(encoder: ToyEncoder, x: np.ndarray,
                             target: np.ndarray) -> float:
    return squared_embedding_loss(encoder.encode(x), target)
