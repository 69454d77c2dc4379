"""Flat parameter vectors, named segment views, and seeded random generation.

Everything downstream (optimizers, ODE solver, benchmark problems) operates on
ParamVector: a 1-D float64 array plus an ordered named-segment layout. The Rng
here is counter-based (SplitMix64) so a given seed produces the same draw
stream on every platform; reproducibility of whole experiments hangs on it.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np


class NonFiniteError(ValueError):
    """A vector that must be finite contains NaN or Inf (corrupted state)."""


@dataclass(frozen=True)
class Segment:
    name: str
    offset: int
    length: int


class ParamVector:
    """Flat float64 parameter vector with named, contiguous segments.

    Segments must be disjoint, contiguous, and cover [0, len(data)) exactly.
    Values are treated as immutable once shared; arithmetic helpers return
    new vectors and preserve the layout of their first argument.
    """

    __slots__ = ("data", "segments")

    def __init__(self, data, segments: Sequence[Segment] | None = None):
        arr = np.asarray(data, dtype=np.float64)
        if arr.ndim != 1:
            arr = arr.ravel()
        self.data = arr
        if segments is None:
            segments = (Segment("theta", 0, arr.size),)
        self.segments = tuple(segments)
        self._validate()

    def _validate(self):
        offset = 0
        names = set()
        for seg in self.segments:
            if seg.name in names:
                raise ValueError(f"duplicate segment name {seg.name!r}")
            names.add(seg.name)
            if seg.offset != offset or seg.length < 0:
                raise ValueError(
                    f"segment {seg.name!r} at offset {seg.offset} breaks contiguous "
                    f"coverage (expected offset {offset})"
                )
            offset += seg.length
        if offset != self.data.size:
            raise ValueError(
                f"segments cover [0, {offset}) but data has length {self.data.size}"
            )

    @classmethod
    def from_arrays(cls, named: Iterable[tuple[str, np.ndarray]]) -> "ParamVector":
        """Build a vector by concatenating named arrays (each is flattened)."""
        parts, segments, offset = [], [], 0
        for name, arr in named:
            flat = np.asarray(arr, dtype=np.float64).ravel()
            parts.append(flat)
            segments.append(Segment(name, offset, flat.size))
            offset += flat.size
        return cls(np.concatenate(parts) if parts else np.empty(0), segments)

    @classmethod
    def zeros(cls, n: int) -> "ParamVector":
        return cls(np.zeros(n))

    def segment(self, name: str) -> np.ndarray:
        for seg in self.segments:
            if seg.name == name:
                return self.data[seg.offset : seg.offset + seg.length]
        raise KeyError(name)

    def with_data(self, data) -> "ParamVector":
        """Same layout, new values. Cheap: skips full re-validation."""
        arr = np.asarray(data, dtype=np.float64)
        if arr.size != self.data.size:
            raise ValueError(f"length mismatch: {arr.size} vs {self.data.size}")
        out = object.__new__(ParamVector)
        out.data = arr
        out.segments = self.segments
        return out

    def copy(self) -> "ParamVector":
        return self.with_data(self.data.copy())

    def __len__(self) -> int:
        return self.data.size

    def __repr__(self) -> str:
        segs = ", ".join(f"{s.name}[{s.length}]" for s in self.segments)
        return f"ParamVector(n={self.data.size}, segments=({segs}))"


def l2_norm(v) -> float:
    """Euclidean norm. Raises NonFiniteError on NaN/Inf input."""
    data = v.data if isinstance(v, ParamVector) else np.asarray(v, dtype=np.float64)
    if not np.isfinite(data).all():
        raise NonFiniteError("non-finite values in vector passed to l2_norm")
    return float(math.sqrt(np.dot(data, data)))


def axpby(a: float, x: ParamVector, b: float, y: ParamVector) -> ParamVector:
    """Elementwise a*x + b*y; layout of x is preserved."""
    if len(x) != len(y):
        raise ValueError(f"length mismatch: {len(x)} vs {len(y)}")
    return x.with_data(a * x.data + b * y.data)


# SplitMix64 (Steele, Lea & Flood 2014; constants from the reference
# implementation). Counter-based: draw i is a pure function of (seed, i),
# which makes vectorized generation trivial and streams platform-stable.
_GAMMA = 0x9E3779B97F4A7C15
_MIX1 = 0xBF58476D1CE4E5B9
_MIX2 = 0x94D049BB133111EB
_MASK64 = (1 << 64) - 1
_INV_2_53 = 1.0 / (1 << 53)


def _mix64_int(z: int) -> int:
    """Scalar SplitMix64 finalizer on Python ints (used for seed derivation)."""
    z &= _MASK64
    z = ((z ^ (z >> 30)) * _MIX1) & _MASK64
    z = ((z ^ (z >> 27)) * _MIX2) & _MASK64
    return z ^ (z >> 31)


def _mix64(z: np.ndarray) -> np.ndarray:
    # uint64 arithmetic wraps mod 2^64, which is exactly what SplitMix64 needs
    z = (z ^ (z >> np.uint64(30))) * np.uint64(_MIX1)
    z = (z ^ (z >> np.uint64(27))) * np.uint64(_MIX2)
    return z ^ (z >> np.uint64(31))


class Rng:
    """Deterministic counter-based random generator.

    Identical seed implies an identical stream of draws regardless of
    platform: the algorithm and all constants are fixed here.
    """

    def __init__(self, seed: int):
        self.seed = int(seed) & _MASK64
        self.counter = 0

    def _raw(self, n: int) -> np.ndarray:
        """Next n raw 64-bit words."""
        idx = np.arange(self.counter + 1, self.counter + n + 1, dtype=np.uint64)
        self.counter += n
        state = np.uint64(self.seed) + idx * np.uint64(_GAMMA)
        return _mix64(state)

    def uniform(self, n: int) -> np.ndarray:
        """n doubles in [0, 1)."""
        return (self._raw(n) >> np.uint64(11)).astype(np.float64) * _INV_2_53

    def normal(self, n: int, mean: float = 0.0, std: float = 1.0) -> np.ndarray:
        """n independent normal draws via Box-Muller."""
        if std < 0:
            raise ValueError("std must be >= 0")
        half = (n + 1) // 2
        # u1 in (0, 1] keeps log() finite
        u1 = ((self._raw(half) >> np.uint64(11)).astype(np.float64) + 1.0) * _INV_2_53
        u2 = (self._raw(half) >> np.uint64(11)).astype(np.float64) * _INV_2_53
        r = np.sqrt(-2.0 * np.log(u1))
        theta = (2.0 * np.pi) * u2
        z = np.concatenate([r * np.cos(theta), r * np.sin(theta)])[:n]
        return mean + std * z

    def permutation(self, n: int) -> np.ndarray:
        """Uniform random permutation of range(n)."""
        return np.argsort(self._raw(n), kind="stable")

    def derive(self, label: str) -> "Rng":
        """Independent child stream, deterministic in (seed, label)."""
        h = 0xCBF29CE484222325  # FNV-1a 64-bit offset basis
        for byte in label.encode("utf-8"):
            h = ((h ^ byte) * 0x100000001B3) & _MASK64
        return Rng(_mix64_int(self.seed ^ h))


def gaussian_fill(rng: Rng, n: int, mean: float = 0.0, std: float = 1.0) -> ParamVector:
    """ParamVector of n normal draws; deterministic for a fixed rng state."""
    if n < 1:
        raise ValueError("n must be >= 1")
    if std < 0:
        raise ValueError("std must be >= 0")
    return ParamVector(rng.normal(n, mean, std))
