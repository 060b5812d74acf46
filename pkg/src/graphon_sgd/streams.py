"""Counter-based random streams.

Every random number is a pure function of ``(seed, key words...)``, so a
simulation that asks for the normal variate of coordinate ``(i, j)`` at step
``k`` gets the same value no matter in which order (or on which thread) the
coordinates are visited. Words are folded in with the SplitMix64 finaliser;
uniforms take the top 53 bits and normals come from Box-Muller on two lanes.
"""
from __future__ import annotations

import zlib

import numpy as np

_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_S30, _S27, _S31, _S11 = (np.uint64(s) for s in (30, 27, 31, 11))
_LANE2 = np.uint64(0xD1B54A32D192ED03)
_TWO_M53 = 2.0 ** -53


def _mix(z):
    with np.errstate(over="ignore"):
        z = (z ^ (z >> _S30)) * _M1
        z = (z ^ (z >> _S27)) * _M2
        return z ^ (z >> _S31)


def _word(w) -> np.ndarray:
    if isinstance(w, str):
        w = zlib.crc32(w.encode()) | (1 << 40)
    a = np.asarray(w)
    if a.dtype.kind == "i":
        a = a.astype(np.int64).view(np.uint64) if a.ndim else np.uint64(int(a) & 0xFFFFFFFFFFFFFFFF)
    elif a.dtype.kind == "u":
        a = a.astype(np.uint64)
    else:
        raise TypeError(f"stream key words must be ints or strings, got {a.dtype}")
    return a


class Stream:
    """A keyed family of random numbers.

    ``Stream(seed).child("noise", i, j)`` narrows the key; integer array words
    broadcast, giving one independent sub-stream per element.
    """

    __slots__ = ("seed", "_state")

    def __init__(self, seed: int, _state=None):
        self.seed = int(seed)
        if _state is None:
            with np.errstate(over="ignore"):
                _state = _mix(np.uint64(self.seed & 0xFFFFFFFFFFFFFFFF) + _GOLDEN)
        self._state = _state

    def __repr__(self):
        shape = np.shape(self._state)
        return f"Stream(seed={self.seed}{', shape=' + str(shape) if shape else ''})"

    def child(self, *words) -> "Stream":
        h = self._state
        with np.errstate(over="ignore"):
            for w in words:
                h = _mix(h ^ _mix(_word(w) + _GOLDEN))
        return Stream(self.seed, h)

    def _bits(self, words, lane):
        with np.errstate(over="ignore"):
            h = self.child(*words)._state
            if lane:
                h = _mix(h ^ _LANE2)
        return h

    def uniform(self, *words) -> np.ndarray:
        """Uniforms on the open interval (0, 1)."""
        h = self._bits(words, 0)
        return ((h >> _S11).astype(np.float64) + 0.5) * _TWO_M53

    def normal(self, *words) -> np.ndarray:
        h1 = self._bits(words, 0)
        with np.errstate(over="ignore"):
            h2 = _mix(h1 ^ _LANE2)
        u1 = ((h1 >> _S11).astype(np.float64) + 0.5) * _TWO_M53
        u2 = ((h2 >> _S11).astype(np.float64) + 0.5) * _TWO_M53
        return np.sqrt(-2.0 * np.log(u1)) * np.cos(2.0 * np.pi * u2)

    def generator(self) -> np.random.Generator:
        """Sequential numpy generator for draws where order is fixed anyway."""
        if np.ndim(self._state):
            raise ValueError("generator() needs a scalar stream")
        return np.random.Generator(np.random.PCG64(np.random.SeedSequence(int(self._state))))


def as_stream(rng) -> Stream:
    if isinstance(rng, Stream):
        return rng
    if isinstance(rng, (int, np.integer)):
        return Stream(int(rng))
    raise TypeError("rng must be an int seed or a Stream")
