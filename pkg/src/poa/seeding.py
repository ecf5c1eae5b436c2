"""Binding of identity and generation parameters to deterministic randomness.

An author's 32-byte identity keys an HMAC-SHA3-256 over the canonical
encoding of the generation parameters ``<m, e, r>``. The resulting 32-byte
seed drives a counter-mode SHA3 stream expanded into standard-normal draws
(Box-Muller), so every starting point is a pure function of
``(identity, m, embedding digest, free bits)``.

Everything here is stateless and safe for concurrent use. Independent
consumers get independent sub-streams by counter-range partitioning, so
results never depend on scheduling.
"""

import hashlib
import hmac
import json
import os
import struct
from dataclasses import dataclass
from typing import Optional

import numpy as np

from poa import kernels
from poa.errors import DomainError

KAPPA_MAGIC = b"POAv1"
HASH_NAME = "HMAC-SHA3-256"

# Type alias: a 32-byte seed value.
Seed32 = bytes


def _require_bytes(value: bytes, size: int, what: str) -> None:
    if not isinstance(value, (bytes, bytearray)) or len(value) != size:
        raise DomainError(f"{what} must be exactly {size} bytes")


@dataclass(frozen=True)
class Identity:
    """A registered author: 32 opaque key bytes plus display metadata."""

    id_bytes: bytes
    label: str
    registered_at: str

    def __post_init__(self):
        _require_bytes(self.id_bytes, 32, "id_bytes")

    @property
    def id_hex(self) -> str:
        return self.id_bytes.hex()


@dataclass(frozen=True)
class MetaParams:
    """Generator meta-parameters (the ``m`` of the parameter triple)."""

    scheduler: str = "ddim"
    timesteps: int = 10
    latent_shape: tuple = (4, 16, 16)
    model_tag: str = "toy-householder-v1"

    def __post_init__(self):
        if self.timesteps < 1:
            raise DomainError("timesteps must be >= 1")
        shape = tuple(int(v) for v in self.latent_shape)
        if len(shape) != 3 or any(v < 1 for v in shape):
            raise DomainError("latent_shape must be three positive integers")
        object.__setattr__(self, "latent_shape", shape)

    @property
    def latent_size(self) -> int:
        c, h, w = self.latent_shape
        return c * h * w

    def to_dict(self) -> dict:
        return {
            "scheduler": self.scheduler,
            "timesteps": self.timesteps,
            "latent_shape": list(self.latent_shape),
            "model_tag": self.model_tag,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "MetaParams":
        return cls(
            scheduler=d["scheduler"],
            timesteps=int(d["timesteps"]),
            latent_shape=tuple(d["latent_shape"]),
            model_tag=d["model_tag"],
        )

    def canonical_json(self) -> bytes:
        """Canonical text form: sorted keys, no insignificant whitespace, UTF-8."""
        return canonical_json_bytes(self.to_dict())


def canonical_json_bytes(obj) -> bytes:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), ensure_ascii=False).encode("utf-8")


@dataclass(frozen=True)
class Kappa:
    """Generation parameters ``<m, e, r>`` with the embedding held by digest."""

    m: MetaParams
    e_digest: bytes
    r: bytes
    e_ref: Optional[str] = None

    def __post_init__(self):
        _require_bytes(self.e_digest, 32, "e_digest")
        _require_bytes(self.r, 16, "r")

    def to_dict(self) -> dict:
        return {
            "m": self.m.to_dict(),
            "e_digest_hex": self.e_digest.hex(),
            "e_ref": self.e_ref,
            "r_hex": self.r.hex(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Kappa":
        return cls(
            m=MetaParams.from_dict(d["m"]),
            e_digest=bytes.fromhex(d["e_digest_hex"]),
            r=bytes.fromhex(d["r_hex"]),
            e_ref=d.get("e_ref"),
        )


def canonical_kappa_bytes(kappa: Kappa) -> bytes:
    """Fixed byte encoding of the parameter triple fed to the PRF.

    Layout: ``"POAv1" || LE32(len(m_json)) || m_json || e_digest || r`` with
    ``m_json`` the canonical JSON of the meta record. Deterministic and
    injective for well-formed inputs.
    """
    m_json = kappa.m.canonical_json()
    return KAPPA_MAGIC + struct.pack("<I", len(m_json)) + m_json + kappa.e_digest + kappa.r


def derive_seed(identity: Identity, kappa: Kappa) -> Seed32:
    """HMAC-SHA3-256 keyed by the identity over the canonical parameters."""
    return hmac.new(identity.id_bytes, canonical_kappa_bytes(kappa), hashlib.sha3_256).digest()


def expand_block(seed: Seed32, counter: int) -> bytes:
    """Single 32-byte keystream block: ``SHA3-256(seed || LE64(counter))``.

    Bulk expansion goes through :mod:`poa.kernels`; this scalar form is the
    defining equation (the kernels are tested against it).
    """
    _require_bytes(seed, 32, "seed")
    if not 0 <= counter < 2 ** 64:
        raise DomainError("counter must fit in 64 bits")
    return hashlib.sha3_256(bytes(seed) + struct.pack("<Q", counter)).digest()


def substream_seed(seed: Seed32, index: int) -> Seed32:
    """Fresh 32-byte seed for consumers that need a seed, not a sub-stream."""
    return expand_block(seed, index)


def sample_gaussian(seed: Seed32, count: int, substream: int = 0) -> np.ndarray:
    """Deterministic N(0, 1) draws from the seed's keystream.

    Each 32-byte block yields four little-endian 64-bit words; word ``w``
    maps to ``u = ((w >> 11) + 0.5) / 2^53`` and consecutive pairs feed
    Box-Muller. Output order is block-then-pair, so any prefix is stable
    under a larger ``count``.
    """
    _require_bytes(seed, 32, "seed")
    if count < 1:
        raise DomainError("count must be >= 1")
    return kernels.gaussians(bytes(seed), count, substream)


def sample_uniform(seed: Seed32, count: int, substream: int = 0) -> np.ndarray:
    """Deterministic U(0, 1) draws: the word-to-uniform map without Box-Muller."""
    _require_bytes(seed, 32, "seed")
    if count < 1:
        raise DomainError("count must be >= 1")
    return kernels.uniforms(bytes(seed), count, substream)


def fresh_entropy() -> bytes:
    return os.urandom(32)
