"""Latent and image containers plus the POAL file format.

POAL layout: magic ``POAL``, version byte 0x01, dtype tag (0x01 = f32 LE),
u8 ndim, LE32 dims, then raw row-major data. Values round-trip through
float32, which is the interchange precision of the wire protocol.
"""

import hashlib
import struct
from dataclasses import dataclass

import numpy as np

from poa.errors import DomainError, ProtocolVersionMismatch, ShapeMismatch

POAL_MAGIC = b"POAL"
POAL_VERSION = 1
POAL_DTYPE_F32 = 1

_IMAGE_TAG = b"POAI"  # digest-only serialization tag for pixel payloads


def _check_grid(shape, data: np.ndarray, what: str):
    shape = tuple(int(v) for v in shape)
    if len(shape) != 3 or any(v < 1 for v in shape):
        raise DomainError(f"{what} shape must be three positive integers")
    data = np.ascontiguousarray(data, dtype=np.float64).reshape(-1)
    if data.size != shape[0] * shape[1] * shape[2]:
        raise ShapeMismatch(f"{what} data length {data.size} != prod{shape}")
    if not np.all(np.isfinite(data)):
        raise DomainError(f"{what} entries must all be finite")
    return shape, data


@dataclass
class Latent:
    """Flattened latent vector with its (channels, height, width) shape."""

    shape: tuple
    data: np.ndarray

    def __post_init__(self):
        self.shape, self.data = _check_grid(self.shape, self.data, "latent")

    @property
    def d(self) -> int:
        return self.data.size

    def grid(self) -> np.ndarray:
        return self.data.reshape(self.shape)

    @classmethod
    def from_grid(cls, arr: np.ndarray) -> "Latent":
        arr = np.asarray(arr, dtype=np.float64)
        return cls(shape=arr.shape, data=arr.reshape(-1))


@dataclass
class Image:
    """Pixel grid produced by decoding a latent (channels, height, width)."""

    shape: tuple
    data: np.ndarray

    def __post_init__(self):
        self.shape, self.data = _check_grid(self.shape, self.data, "image")

    @property
    def npixels(self) -> int:
        return self.data.size

    def grid(self) -> np.ndarray:
        return self.data.reshape(self.shape)

    @classmethod
    def from_grid(cls, arr: np.ndarray) -> "Image":
        arr = np.asarray(arr, dtype=np.float64)
        return cls(shape=arr.shape, data=arr.reshape(-1))


def poal_bytes(latent: Latent) -> bytes:
    header = POAL_MAGIC + bytes([POAL_VERSION, POAL_DTYPE_F32, len(latent.shape)])
    dims = b"".join(struct.pack("<I", v) for v in latent.shape)
    return header + dims + latent.data.astype("<f4").tobytes()


def parse_poal(blob: bytes) -> Latent:
    if len(blob) < 7 or blob[:4] != POAL_MAGIC:
        raise ProtocolVersionMismatch("not a POAL payload")
    version, dtype, ndim = blob[4], blob[5], blob[6]
    if version != POAL_VERSION:
        raise ProtocolVersionMismatch(f"unsupported POAL version {version}")
    if dtype != POAL_DTYPE_F32:
        raise ProtocolVersionMismatch(f"unsupported dtype tag {dtype}")
    if ndim != 3:
        raise ProtocolVersionMismatch(f"latents are 3-d, got ndim={ndim}")
    off = 7 + 4 * ndim
    if len(blob) < off:
        raise ProtocolVersionMismatch("truncated POAL header")
    dims = struct.unpack("<" + "I" * ndim, blob[7:off])
    expected = int(np.prod(dims))
    payload = blob[off:]
    if len(payload) != expected * 4:
        raise ProtocolVersionMismatch(
            f"payload length {len(payload)} != 4*{expected} for dims {dims}"
        )
    data = np.frombuffer(payload, dtype="<f4").astype(np.float64)
    return Latent(shape=dims, data=data)


def write_poal(path, latent: Latent) -> None:
    with open(path, "wb") as fh:
        fh.write(poal_bytes(latent))


def read_poal(path) -> Latent:
    with open(path, "rb") as fh:
        return parse_poal(fh.read())


def latent_digest(latent: Latent) -> bytes:
    return hashlib.sha3_256(poal_bytes(latent)).digest()


def image_digest(image: Image) -> bytes:
    header = _IMAGE_TAG + bytes([len(image.shape)])
    dims = b"".join(struct.pack("<I", v) for v in image.shape)
    return hashlib.sha3_256(header + dims + image.data.astype("<f4").tobytes()).digest()
