"""Transport encoding for image tensors.

Images travel as base64 of raw little-endian float32, row-major, beside an
explicit shape triple.  A binary payload (rather than a PNG or pixel list)
keeps out-of-range probe values and float precision bit-exact across the
wire, which the equivalence guarantees depend on.
"""

from __future__ import annotations

import base64

import numpy as np


def encode_image(array: np.ndarray) -> dict:
    arr = np.ascontiguousarray(array, dtype="<f4")
    if arr.ndim != 3:
        raise ValueError(f"expected (H, W, C), got shape {arr.shape}")
    return {
        "shape": [int(d) for d in arr.shape],
        "data": base64.b64encode(arr.tobytes(order="C")).decode("ascii"),
    }


def decode_image(obj: dict) -> np.ndarray:
    if not isinstance(obj, dict) or "shape" not in obj or "data" not in obj:
        raise ValueError("wire image needs 'shape' and 'data' fields")
    shape = tuple(int(d) for d in obj["shape"])
    if len(shape) != 3 or min(shape) < 1:
        raise ValueError(f"bad wire image shape {shape}")
    try:
        raw = base64.b64decode(obj["data"], validate=True)
    except Exception as exc:
        raise ValueError(f"invalid base64 payload: {exc}") from None
    count = int(np.prod(shape))
    if len(raw) != 4 * count:
        raise ValueError(f"payload holds {len(raw) // 4} floats, shape {shape} "
                         f"requires {count}")
    data = np.frombuffer(raw, dtype="<f4", count=count)
    if not np.all(np.isfinite(data)):
        raise ValueError("wire image contains non-finite values")
    return data.reshape(shape).copy()
