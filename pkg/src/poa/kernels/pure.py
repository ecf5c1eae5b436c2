"""Pure-Python keystream kernels (hashlib SHA3 + NumPy Box-Muller).

Block layout: block ``k`` of sub-stream ``j`` is
``SHA3-256(seed || LE64((j << 32) | k))`` read as four little-endian
unsigned 64-bit words. Each word ``w`` maps to ``u = ((w >> 11) + 0.5) / 2^53``
in (0, 1); consecutive pairs feed Box-Muller, emitted in block-then-pair
order. Excess values of the final block are discarded, which gives the
prefix property: the first n samples never depend on the requested count.
"""

import hashlib
import struct

import numpy as np

_TWO_PI = 2.0 * np.pi
_INV_2_53 = 2.0 ** -53

MAX_SUBSTREAM = 2 ** 32 - 1


def _counter(substream: int, block: int) -> int:
    if not 0 <= substream <= MAX_SUBSTREAM:
        raise ValueError(f"substream out of range: {substream}")
    return (substream << 32) | block


def keystream_words(seed: bytes, substream: int, start_block: int, nblocks: int) -> np.ndarray:
    """Raw keystream as uint64 words, 4 per block."""
    if len(seed) != 32:
        raise ValueError("seed must be exactly 32 bytes")
    out = np.empty(nblocks * 4, dtype="<u8")
    sha3 = hashlib.sha3_256
    pack = struct.Struct("<Q").pack
    base = _counter(substream, start_block)
    for i in range(nblocks):
        digest = sha3(seed + pack(base + i)).digest()
        out[4 * i : 4 * i + 4] = np.frombuffer(digest, dtype="<u8")
    return out.astype(np.uint64, copy=False)


def _to_uniform(words: np.ndarray) -> np.ndarray:
    return ((words >> np.uint64(11)).astype(np.float64) + 0.5) * _INV_2_53


def uniforms(seed: bytes, count: int, substream: int = 0) -> np.ndarray:
    """Deterministic uniforms in (0, 1), one per keystream word."""
    if count < 0:
        raise ValueError("count must be >= 0")
    nblocks = -(-count // 4)
    words = keystream_words(seed, substream, 0, nblocks)
    return _to_uniform(words)[:count]


def _box_muller(u: np.ndarray) -> np.ndarray:
    radius = np.sqrt(-2.0 * np.log(u[0::2]))
    angle = _TWO_PI * u[1::2]
    out = np.empty(u.size, dtype=np.float64)
    out[0::2] = radius * np.cos(angle)
    out[1::2] = radius * np.sin(angle)
    return out


def gaussians(seed: bytes, count: int, substream: int = 0) -> np.ndarray:
    """Deterministic standard-normal samples."""
    if count < 0:
        raise ValueError("count must be >= 0")
    nblocks = -(-count // 4)
    words = keystream_words(seed, substream, 0, nblocks)
    return _box_muller(_to_uniform(words))[:count]


def gaussian_rows(seed: bytes, first_substream: int, nrows: int, count: int) -> np.ndarray:
    """Matrix of samples; row i comes from sub-stream first_substream + i."""
    out = np.empty((nrows, count), dtype=np.float64)
    for i in range(nrows):
        out[i] = gaussians(seed, count, first_substream + i)
    return out


def gaussian_dot(seed: bytes, first_substream: int, nrows: int, w: np.ndarray) -> np.ndarray:
    """Dot product of each sample row with ``w`` without materialising rows.

    Equivalent to ``gaussian_rows(...) @ w`` up to summation order.
    """
    w = np.ascontiguousarray(w, dtype=np.float64)
    out = np.empty(nrows, dtype=np.float64)
    for i in range(nrows):
        out[i] = float(np.dot(gaussians(seed, w.size, first_substream + i), w))
    return out
