"""Lossy-compression preprocessing defense and the resize bypass.

The codec keeps the part of JPEG that actually blunts adversarial pixel
patterns: per-channel 8x8 block DCT, quantization against the standard
luminance table scaled by the usual quality mapping, dequantization, and
the inverse transform.  Entropy coding is omitted (it is lossless and
irrelevant to the defense).  The DC coefficient is quantized with unit
step regardless of quality so constant blocks survive any setting; the
quality knob only sharpens AC quantization, which is where the defense
bites.  Values are processed on the 0..255 scale, level-shifted by 128.

The bypass upscales finished attack samples before submission so their
local structure survives the service-side recompression.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.fft

from .service import ServiceInstance
from .synthesis import AttackSampleSet

BLOCK = 8

# standard luminance quantization table (quality 50 baseline)
BASE_TABLE = np.array([
    [16, 11, 10, 16, 24, 40, 51, 61],
    [12, 12, 14, 19, 26, 58, 60, 55],
    [14, 13, 16, 24, 40, 57, 69, 56],
    [14, 17, 22, 29, 51, 87, 80, 62],
    [18, 22, 37, 56, 68, 109, 103, 77],
    [24, 35, 55, 64, 81, 104, 113, 92],
    [49, 64, 78, 87, 103, 121, 120, 101],
    [72, 92, 95, 98, 112, 100, 103, 99],
], dtype=np.float64)


@dataclass(frozen=True)
class CodecConfig:
    quality: int = 30

    def __post_init__(self):
        if not 1 <= self.quality <= 100:
            raise ValueError(f"quality must be in [1, 100], got {self.quality}")

    def quantization_table(self) -> np.ndarray:
        """Standard quality scaling: 5000/q below 50, 200-2q above, floor 1."""
        q = self.quality
        scale = 5000.0 / q if q < 50 else 200.0 - 2.0 * q
        table = np.floor((BASE_TABLE * scale + 50.0) / 100.0)
        table = np.maximum(table, 1.0)
        table[0, 0] = 1.0  # unit DC step: block means survive every quality
        return table


@dataclass(frozen=True)
class ResizeSpec:
    height: int
    width: int
    interpolation: str = "nearest"

    def __post_init__(self):
        if self.height < 1 or self.width < 1:
            raise ValueError("resize target must be at least 1x1")
        if self.interpolation not in ("nearest", "bilinear"):
            raise ValueError(f"unknown interpolation {self.interpolation!r}")


def _to_blocks(channel: np.ndarray) -> np.ndarray:
    h, w = channel.shape
    return channel.reshape(h // BLOCK, BLOCK, w // BLOCK, BLOCK).transpose(0, 2, 1, 3)


def _from_blocks(blocks: np.ndarray) -> np.ndarray:
    bh, bw = blocks.shape[:2]
    return blocks.transpose(0, 2, 1, 3).reshape(bh * BLOCK, bw * BLOCK)


def lossy_roundtrip(image: np.ndarray, config: CodecConfig) -> np.ndarray:
    """Compress-decompress one [0, 1] image; shape is preserved.

    Edges are replicate-padded up to block multiples and cropped back after
    the inverse transform.
    """
    img = np.asarray(image, dtype=np.float32)
    if img.ndim != 3:
        raise ValueError(f"expected (H, W, C), got {img.shape}")
    h, w, channels = img.shape
    pad_h = (-h) % BLOCK
    pad_w = (-w) % BLOCK
    if pad_h or pad_w:
        img = np.pad(img, ((0, pad_h), (0, pad_w), (0, 0)), mode="edge")

    table = config.quantization_table()
    out = np.empty_like(img, dtype=np.float64)
    for c in range(channels):
        shifted = img[:, :, c].astype(np.float64) * 255.0 - 128.0
        blocks = _to_blocks(shifted)
        coeffs = scipy.fft.dctn(blocks, axes=(-2, -1), norm="ortho")
        coeffs = np.round(coeffs / table) * table
        restored = scipy.fft.idctn(coeffs, axes=(-2, -1), norm="ortho")
        out[:, :, c] = (_from_blocks(restored) + 128.0) / 255.0
    out = np.clip(out[:h, :w, :], 0.0, 1.0)
    return out.astype(np.float32)


def resize(image: np.ndarray, spec: ResizeSpec) -> np.ndarray:
    """Resample an (H, W, C) image to the target shape.

    nearest uses the floor source-index mapping, so integer upscales
    replicate pixels exactly and an upscale-then-downscale by the same
    factor is the identity.  bilinear uses corner-aligned coordinates,
    which reproduces images that are affine in the pixel coordinates
    exactly (constants included).
    """
    img = np.asarray(image, dtype=np.float32)
    if img.ndim != 3:
        raise ValueError(f"expected (H, W, C), got {img.shape}")
    h_in, w_in, _ = img.shape
    h_out, w_out = spec.height, spec.width

    if spec.interpolation == "nearest":
        rows = np.minimum((np.arange(h_out) * h_in) // h_out, h_in - 1)
        cols = np.minimum((np.arange(w_out) * w_in) // w_out, w_in - 1)
        return img[rows][:, cols]

    def axis_coords(n_out, n_in):
        if n_out == 1:
            return np.full(1, (n_in - 1) / 2.0)
        return np.arange(n_out) * (n_in - 1) / (n_out - 1)

    ry = axis_coords(h_out, h_in)
    rx = axis_coords(w_out, w_in)
    y0 = np.clip(np.floor(ry).astype(int), 0, h_in - 1)
    x0 = np.clip(np.floor(rx).astype(int), 0, w_in - 1)
    y1 = np.minimum(y0 + 1, h_in - 1)
    x1 = np.minimum(x0 + 1, w_in - 1)
    wy = (ry - y0).astype(np.float32)[:, None, None]
    wx = (rx - x0).astype(np.float32)[None, :, None]

    top = img[y0][:, x0] * (1 - wx) + img[y0][:, x1] * wx
    bottom = img[y1][:, x0] * (1 - wx) + img[y1][:, x1] * wx
    return (top * (1 - wy) + bottom * wy).astype(np.float32)


def psnr(a: np.ndarray, b: np.ndarray, peak: float = 1.0) -> float:
    mse = float(np.mean((np.asarray(a, np.float64) - np.asarray(b, np.float64)) ** 2))
    if mse == 0.0:
        return float("inf")
    return 10.0 * np.log10(peak * peak / mse)


def wrap_service_with_defense(service: ServiceInstance,
                              config: CodecConfig) -> ServiceInstance:
    """Service variant that recompresses every query before encoding.

    Inputs of any spatial size are first resampled (bilinear) to the
    service's native shape, then round-tripped through the codec.  The
    query counter semantics are unchanged; the wrapped service starts its
    own counter.
    """
    native = service.input_shape
    to_native = ResizeSpec(native[0], native[1], "bilinear")

    def transform(img: np.ndarray) -> np.ndarray:
        if img.shape != native:
            img = resize(img, to_native)
        return lossy_roundtrip(img, config)

    return service.with_transform(transform)


def bypass_resize(samples: AttackSampleSet, spec: ResizeSpec) -> AttackSampleSet:
    """Upscale every attack sample; the manifest records the transformation."""
    resized = {key: resize(img, spec) for key, img in samples.samples.items()}
    original_shape = tuple(samples.config.image_shape)
    return AttackSampleSet(
        config=samples.config,
        candidate_names=list(samples.candidate_names),
        objectives=samples.objectives,
        samples=resized,
        loss_traces=dict(samples.loss_traces),
        master_seed=samples.master_seed,
        bypass={
            "original_shape": list(original_shape),
            "resized_shape": [spec.height, spec.width, original_shape[2]],
            "interpolation": spec.interpolation,
        },
    )
