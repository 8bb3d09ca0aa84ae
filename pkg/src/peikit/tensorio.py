"""Binary tensor file format and PNG export.

Layout (all integers little-endian):

    bytes 0..3   magic "PEIT"
    bytes 4..5   format version (u16), currently 1
    bytes 6..7   rank (u16)
    then         rank dims, u32 each
    then         payload: float32 IEEE-754 little-endian, row-major

The format is used for every tensor artifact the toolkit persists (images,
embeddings, head weights).  PNG export is for human inspection only: values
are clamped to [0, 1] and scaled to 8 bits, so it is lossy by design.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

MAGIC = b"PEIT"
VERSION = 1


def save_tensor(path: str | Path, array: np.ndarray) -> None:
    arr = np.ascontiguousarray(array, dtype="<f4")
    header = MAGIC + struct.pack("<HH", VERSION, arr.ndim)
    header += struct.pack(f"<{arr.ndim}I", *arr.shape)
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(arr.tobytes(order="C"))


def load_tensor(path: str | Path) -> np.ndarray:
    with open(path, "rb") as fh:
        blob = fh.read()
    if blob[:4] != MAGIC:
        raise ValueError(f"{path}: bad magic {blob[:4]!r}, expected {MAGIC!r}")
    version, rank = struct.unpack_from("<HH", blob, 4)
    if version != VERSION:
        raise ValueError(f"{path}: unsupported format version {version}")
    dims = struct.unpack_from(f"<{rank}I", blob, 8)
    offset = 8 + 4 * rank
    count = int(np.prod(dims)) if rank else 1
    payload = blob[offset:]
    if len(payload) != 4 * count:
        raise ValueError(f"{path}: payload holds {len(payload) // 4} floats, "
                         f"dims {dims} require {count}")
    data = np.frombuffer(payload, dtype="<f4", count=count)
    return data.reshape(dims).copy()


def export_png(path: str | Path, image: np.ndarray) -> None:
    """Write an (H, W, C) image as 8-bit PNG, clamping values to [0, 1]."""
    from PIL import Image

    img = np.asarray(image, dtype=np.float32)
    if img.ndim != 3 or img.shape[2] not in (1, 3):
        raise ValueError(f"PNG export needs (H, W, 1) or (H, W, 3), got {img.shape}")
    u8 = np.round(np.clip(img, 0.0, 1.0) * 255.0).astype(np.uint8)
    if u8.shape[2] == 1:
        Image.fromarray(u8[:, :, 0], mode="L").save(path)
    else:
        Image.fromarray(u8, mode="RGB").save(path)
