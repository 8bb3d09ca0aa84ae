"""Synthetic downstream datasets.

Two generator families:

* ``Shapes``   one class-determined geometric figure per image (shape type
  and hue fixed by the class, position/size/color jittered per sample) on a
  dim noisy background.  Used as the downstream task data.
* ``Textures`` band-limited noise whose radial frequency band is fixed by
  the class.  Distribution-shifted from Shapes; used as surrogate data for
  the model stealing case study.

Generation is a pure function of (spec, split, index): sample i of the test
split always uses global index train_size + i, so splits are disjoint by
construction and regeneration is reproducible sample by sample.
"""

from __future__ import annotations

import colorsys
from dataclasses import dataclass

import numpy as np

from .seeds import derive_seed, rng_from_seed

GENERATORS = ("Shapes", "Textures")
_SHAPE_KINDS = ("disc", "square", "triangle", "ring", "cross")


@dataclass(frozen=True)
class DatasetSpec:
    generator: str
    classes: int
    train_size: int
    test_size: int
    image_shape: tuple[int, int, int]
    seed: int

    def __post_init__(self):
        if self.generator not in GENERATORS:
            raise ValueError(f"unknown generator {self.generator!r}")
        if self.classes < 2:
            raise ValueError("need at least 2 classes")

    def to_json(self) -> dict:
        return {
            "generator": self.generator,
            "classes": self.classes,
            "train_size": self.train_size,
            "test_size": self.test_size,
            "image_shape": list(self.image_shape),
            "seed": self.seed,
        }

    @staticmethod
    def from_json(obj: dict) -> "DatasetSpec":
        return DatasetSpec(
            generator=obj["generator"],
            classes=int(obj["classes"]),
            train_size=int(obj["train_size"]),
            test_size=int(obj["test_size"]),
            image_shape=tuple(obj["image_shape"]),
            seed=int(obj["seed"]),
        )


def class_label(index: int, classes: int) -> int:
    # round-robin labels: balanced within +/-1 for any sample count
    return index % classes


def generate_sample(spec: DatasetSpec, index: int) -> tuple[np.ndarray, int]:
    label = class_label(index, spec.classes)
    rng = rng_from_seed(derive_seed(spec.seed, ("sample", index)))
    if spec.generator == "Shapes":
        img = _render_shape(spec.image_shape, label, spec.classes, rng)
    else:
        img = _render_texture(spec.image_shape, label, spec.classes, rng)
    return img.astype(np.float32), label


def generate_split(spec: DatasetSpec, split: str) -> tuple[np.ndarray, np.ndarray]:
    """Return (images, labels) for 'train' or 'test' as stacked arrays."""
    if split == "train":
        base, count = 0, spec.train_size
    elif split == "test":
        base, count = spec.train_size, spec.test_size
    else:
        raise ValueError(f"unknown split {split!r}")
    images = np.empty((count, *spec.image_shape), dtype=np.float32)
    labels = np.empty(count, dtype=np.int64)
    for i in range(count):
        images[i], labels[i] = generate_sample(spec, base + i)
    return images, labels


def generate_dataset(spec: DatasetSpec) -> list[tuple[np.ndarray, int]]:
    """Training split as a list of (image, label) pairs."""
    images, labels = generate_split(spec, "train")
    return list(zip(images, (int(y) for y in labels)))


# ---------------------------------------------------------------------------
# Shapes


def _hsv(h, s, v):
    return np.array(colorsys.hsv_to_rgb(h % 1.0, s, v), dtype=np.float32)


def _smoothstep(d, width=1.5):
    # signed distance in pixels -> coverage in [0, 1]
    return np.clip(0.5 - d / width, 0.0, 1.0)


def _render_shape(shape, label, classes, rng):
    h, w, c = shape
    kind = _SHAPE_KINDS[label % len(_SHAPE_KINDS)]
    hue = label / classes + rng.uniform(-0.03, 0.03)
    fg = _hsv(hue, 0.85 + rng.uniform(-0.1, 0.1), 0.9 + rng.uniform(-0.1, 0.05))
    bg = _hsv(rng.uniform(0.0, 1.0), 0.15, 0.25 + rng.uniform(-0.05, 0.05))

    img = np.empty((h, w, 3), dtype=np.float32)
    img[:] = bg
    img += rng.normal(0.0, 0.02, size=(h, w, 3)).astype(np.float32)

    yy, xx = np.mgrid[0:h, 0:w].astype(np.float32)
    cy = h / 2 + rng.uniform(-0.12, 0.12) * h
    cx = w / 2 + rng.uniform(-0.12, 0.12) * w
    r = min(h, w) * (0.28 + rng.uniform(-0.05, 0.05))
    dy, dx = yy - cy, xx - cx

    if kind == "disc":
        dist = np.hypot(dy, dx) - r
    elif kind == "square":
        dist = np.maximum(np.abs(dy), np.abs(dx)) - r
    elif kind == "triangle":
        # downward-pointing equilateral-ish triangle from three half-planes
        d1 = -dy - r * 0.8
        d2 = 0.5 * dy + 0.87 * dx - r * 0.8
        d3 = 0.5 * dy - 0.87 * dx - r * 0.8
        dist = np.maximum(np.maximum(d1, d2), d3)
    elif kind == "ring":
        dist = np.abs(np.hypot(dy, dx) - r) - r * 0.35
    else:  # cross
        arm = r * 0.4
        bar_h = np.maximum(np.abs(dy) - arm, np.abs(dx) - r)
        bar_v = np.maximum(np.abs(dx) - arm, np.abs(dy) - r)
        dist = np.minimum(bar_h, bar_v)

    cover = _smoothstep(dist)[:, :, np.newaxis]
    img = (1.0 - cover) * img + cover * fg
    img = np.clip(img, 0.0, 1.0)
    if c == 1:
        img = img.mean(axis=2, keepdims=True)
    elif c != 3:
        raise ValueError(f"Shapes supports 1 or 3 channels, got {c}")
    return img


# ---------------------------------------------------------------------------
# Textures


def _render_texture(shape, label, classes, rng):
    h, w, c = shape
    fy = np.fft.fftfreq(h)[:, np.newaxis]
    fx = np.fft.fftfreq(w)[np.newaxis, :]
    radius = np.hypot(fy, fx) / 0.5  # 1.0 at Nyquist
    lo = 0.08 + 0.72 * label / classes
    band = (radius >= lo) & (radius < lo + 0.22)

    img = np.empty((h, w, c), dtype=np.float32)
    for ch in range(c):
        spectrum = rng.standard_normal((h, w)) + 1j * rng.standard_normal((h, w))
        field = np.fft.ifft2(spectrum * band).real
        span = field.max() - field.min()
        if span < 1e-12:
            field = np.zeros_like(field) + 0.5
        else:
            field = (field - field.min()) / span
        img[:, :, ch] = field
    return img
