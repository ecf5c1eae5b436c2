"""Wire-contract DRBG: how a 32-byte seed becomes a starting point.

Block ``k`` is ``SHA3-256(seed || LE64(k))``; each block yields four
little-endian 64-bit words, each word maps to ``((w >> 11) + 0.5) / 2^53``,
and consecutive uniform pairs feed Box-Muller (cos first, then sin). This
is the protocol-level definition shared with clients: one seed, one
starting point, on both sides of the wire.
"""

import hashlib
import struct

import numpy as np

_INV_2_53 = 2.0 ** -53
_TWO_PI = 2.0 * np.pi


def keystream_words(seed: bytes, nblocks: int) -> np.ndarray:
    if len(seed) != 32:
        raise ValueError("seed must be exactly 32 bytes")
    out = np.empty(nblocks * 4, dtype="<u8")
    pack = struct.Struct("<Q").pack
    for k in range(nblocks):
        digest = hashlib.sha3_256(seed + pack(k)).digest()
        out[4 * k : 4 * k + 4] = np.frombuffer(digest, dtype="<u8")
    return out


def gaussians(seed: bytes, count: int) -> np.ndarray:
    nblocks = -(-count // 4)
    words = keystream_words(seed, nblocks)
    u = ((words >> np.uint64(11)).astype(np.float64) + 0.5) * _INV_2_53
    radius = np.sqrt(-2.0 * np.log(u[0::2]))
    angle = _TWO_PI * u[1::2]
    out = np.empty(u.size)
    out[0::2] = radius * np.cos(angle)
    out[1::2] = radius * np.sin(angle)
    return out[:count]
