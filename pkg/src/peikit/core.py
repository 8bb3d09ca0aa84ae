"""Shared numeric primitives: images, embeddings, service behaviors.

Images are numpy float32 arrays of shape (H, W, C), row-major.  Arrays that
cross a "clamped" boundary (dataset images, objective samples, finished
attack samples) must lie in [0, 1]; probe tensors fed to encoders during
gradient estimation may hold any finite real and are deliberately left
unclamped.  Embeddings are 1-D float32 vectors of fixed length per encoder.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .seeds import rng_from_seed


# ---------------------------------------------------------------------------
# value checks


def as_image(x: np.ndarray) -> np.ndarray:
    """Validate an image array: 3-D float32, finite entries."""
    x = np.asarray(x, dtype=np.float32)
    if x.ndim != 3:
        raise ValueError(f"image must have shape (H, W, C), got {x.shape}")
    if not np.all(np.isfinite(x)):
        raise ValueError("image contains NaN or infinite entries")
    return x


def require_unit_range(x: np.ndarray, what: str = "image") -> np.ndarray:
    if x.min() < 0.0 or x.max() > 1.0:
        raise ValueError(f"{what} must lie in [0, 1], got range "
                         f"[{x.min():.4g}, {x.max():.4g}]")
    return x


# ---------------------------------------------------------------------------
# service behaviors

@dataclass(frozen=True)
class HardLabel:
    label: int


@dataclass(frozen=True)
class SoftLogits:
    logits: np.ndarray  # (K,) float32

    def argmax(self) -> int:
        return int(np.argmax(self.logits))


@dataclass(frozen=True)
class Score:
    """Scalar behavior value in [0, 1]."""

    value: float

    def __post_init__(self):
        if not 0.0 <= self.value <= 1.0:
            raise ValueError(f"score must lie in [0, 1], got {self.value}")


BehaviorValue = HardLabel | SoftLogits | Score


def behavior_label(v: BehaviorValue) -> int:
    """Reduce a behavior value to a class label (soft outputs via argmax)."""
    if isinstance(v, HardLabel):
        return v.label
    if isinstance(v, SoftLogits):
        return v.argmax()
    raise TypeError(f"cannot reduce {type(v).__name__} to a label")


# Similarity functions map a pair of behavior values into [0, 1].  A callable
# carrying ``symmetric = True`` promises order independence, which lets the
# symmetrize wrapper skip the double evaluation.


# ---------------------------------------------------------------------------
# numerics


def sample_unit_sphere(dim: int, seed: int) -> np.ndarray:
    """Uniform draw from the unit sphere S^(dim-1), Gaussian-normalized.

    Degenerate Gaussian draws (all entries rounding to zero) are resampled;
    under PCG64 this effectively never triggers but keeps the unit-norm
    contract unconditional.
    """
    if dim < 1:
        raise ValueError(f"dim must be >= 1, got {dim}")
    rng = rng_from_seed(seed)
    while True:
        v = rng.standard_normal(dim)
        norm = np.linalg.norm(v)
        if norm > 0.0:
            return (v / norm).astype(np.float32)


def squared_embedding_loss(a: np.ndarray, b: np.ndarray) -> float:
    """Squared L2 distance between two embeddings of equal dimension."""
    a = np.asarray(a)
    b = np.asarray(b)
    if a.shape != b.shape:
        raise ValueError(f"embedding dims differ: {a.shape} vs {b.shape}")
    d = a.astype(np.float64) - b.astype(np.float64)
    return float(np.dot(d, d))


def linf_normalize(v: np.ndarray) -> np.ndarray:
    """v / max|v|; the zero vector maps to itself (skip-update convention)."""
    v = np.asarray(v)
    if np.any(np.isnan(v)):
        raise ValueError("cannot normalize a vector containing NaN")
    m = np.max(np.abs(v))
    if m == 0.0:
        return np.zeros_like(v)
    return v / m
