"""Deterministic seed derivation.

Every random stream in the toolkit is derived from a single 64-bit master
seed plus a label path such as ``("cand", 3, "obj", 1, "rep", 0)``.  Derived
seeds are a pure function of (master, path), so any unit of work owns an
independent stream and results do not depend on scheduling or parallelism.

Do NOT use Python's built-in hash() here: it is salted per process.  The
chain below is a fixed FNV-1a fold, documented so it can be recomputed by
hand:

* state starts at the FNV-1a 64-bit offset basis ``14695981039346656037``,
* the 8 little-endian bytes of the master seed are folded in first,
* each label is folded as a tag byte (``0x73`` for strings, ``0x69`` for
  ints), then its payload (UTF-8 bytes / 8 little-endian bytes), then a
  ``0xff`` separator byte,
* folding a byte b is ``state = ((state ^ b) * 1099511628211) mod 2**64``.

Distinct label paths collide with probability ~2**-64 per pair.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

_FNV_OFFSET = 14695981039346656037
_FNV_PRIME = 1099511628211
_MASK64 = (1 << 64) - 1

Label = str | int


def _fold(state: int, data: bytes) -> int:
    for b in data:
        state = ((state ^ b) * _FNV_PRIME) & _MASK64
    return state


def derive_seed(master_seed: int, path: tuple[Label, ...] | list[Label]) -> int:
    """Derive a 64-bit seed from the master seed and a non-empty label path."""
    if len(path) == 0:
        raise ValueError("seed path must be non-empty")
    state = _fold(_FNV_OFFSET, int(master_seed).to_bytes(8, "little"))
    for label in path:
        if isinstance(label, bool) or not isinstance(label, (str, int)):
            raise TypeError(f"seed labels must be str or int, got {label!r}")
        if isinstance(label, str):
            state = _fold(state, b"s" + label.encode("utf-8") + b"\xff")
        else:
            if not 0 <= label < (1 << 64):
                raise ValueError(f"integer labels must fit in 64 bits, got {label}")
            state = _fold(state, b"i" + int(label).to_bytes(8, "little") + b"\xff")
    return state


@dataclass(frozen=True)
class SeedSpec:
    """Master seed plus a base path; child specs extend the path."""

    master_seed: int
    path: tuple[Label, ...] = ()

    def child(self, *labels: Label) -> "SeedSpec":
        return SeedSpec(self.master_seed, self.path + tuple(labels))

    def seed(self, *labels: Label) -> int:
        return derive_seed(self.master_seed, self.path + tuple(labels))

    def rng(self, *labels: Label) -> np.random.Generator:
        return rng_from_seed(self.seed(*labels))


def rng_from_seed(seed: int) -> np.random.Generator:
    """PCG64 generator for a derived 64-bit seed."""
    return np.random.Generator(np.random.PCG64(seed))
