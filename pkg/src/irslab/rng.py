"""Counter-based random numbers keyed by ``(seed, stream_id, counter)``.

Each draw is a pure function of its three coordinates: a stream key is
derived from ``(seed, stream_id)`` and the ``counter``-th uniform is two
rounds of the SplitMix64 finaliser applied to the keyed counter. No state
is carried between calls, so results are independent of evaluation order
and of how trials are split across workers.
"""
from __future__ import annotations

from dataclasses import dataclass

import numba
import numpy as np

_MASK64 = (1 << 64) - 1


@numba.njit(inline="always")
def _mix(z):
    z = (z ^ (z >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)
    z = (z ^ (z >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)
    return z ^ (z >> np.uint64(31))


@numba.njit(inline="always")
def _stream_key(seed, stream):
    k0 = _mix(_mix(seed ^ np.uint64(0x243F6A8885A308D3)) + stream * np.uint64(0x9E3779B97F4A7C15))
    k1 = _mix(k0 ^ np.uint64(0x13198A2E03707344))
    return k0, k1


@numba.njit(inline="always")
def _uniform(k0, k1, counter):
    u = _mix(_mix(k0 ^ (counter * np.uint64(0xD1B54A32D192ED03))) + k1)
    # 53 high bits, centred in their bin: strictly inside (0, 1)
    return (np.float64(u >> np.uint64(11)) + 0.5) * 1.1102230246251565e-16


@numba.njit(nogil=True, cache=True)
def _uniform_block(seed, streams, offset, count, out):
    for r in range(streams.shape[0]):
        k0, k1 = _stream_key(seed, streams[r])
        for j in range(count):
            out[r, j] = _uniform(k0, k1, np.uint64(offset + j))


@numba.njit(nogil=True, cache=True)
def _complex_normal_block(seed, streams, offset, count, out):
    two_pi = 2.0 * np.pi
    for r in range(streams.shape[0]):
        k0, k1 = _stream_key(seed, streams[r])
        for j in range(count):
            c = np.uint64(offset + 2 * j)
            u1 = _uniform(k0, k1, c)
            u2 = _uniform(k0, k1, c + np.uint64(1))
            # complex Box-Muller: |z|^2 ~ Exp(1), uniform phase
            rad = np.sqrt(-np.log(u1))
            out[r, j] = complex(rad * np.cos(two_pi * u2), rad * np.sin(two_pi * u2))


def _as_streams(stream_ids) -> np.ndarray:
    return np.ascontiguousarray(np.asarray(stream_ids, dtype=np.int64).astype(np.uint64).ravel())


def uniforms(seed: int, stream_ids, offset: int, count: int) -> np.ndarray:
    """Uniforms on (0, 1) for counters ``offset .. offset+count-1``.

    Returns an array of shape ``(len(stream_ids), count)``.
    """
    streams = _as_streams(stream_ids)
    out = np.empty((streams.size, count), dtype=np.float64)
    _uniform_block(np.uint64(seed & _MASK64), streams, offset, count, out)
    return out


def complex_normals(seed: int, stream_ids, offset: int, count: int) -> np.ndarray:
    """Standard circularly symmetric complex Gaussians, CN(0, 1).

    Normal ``j`` consumes counters ``offset + 2j`` and ``offset + 2j + 1``.
    """
    streams = _as_streams(stream_ids)
    out = np.empty((streams.size, count), dtype=np.complex128)
    _complex_normal_block(np.uint64(seed & _MASK64), streams, offset, count, out)
    return out


@dataclass(frozen=True)
class RngStream:
    """One reproducible substream: a seed plus a stream id (the trial index)."""

    seed: int
    stream_id: int

    def uniforms(self, offset: int, count: int) -> np.ndarray:
        return uniforms(self.seed, [self.stream_id], offset, count)[0]

    def complex_normals(self, offset: int, count: int) -> np.ndarray:
        return complex_normals(self.seed, [self.stream_id], offset, count)[0]
