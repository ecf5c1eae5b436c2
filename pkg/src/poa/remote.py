"""HTTP client for generator backends speaking the shared wire protocol.

Endpoints: ``GET /info``, ``POST /generate``, ``POST /encode``,
``POST /distort``. Latents travel as base64 POAL payloads; the generate
request carries the meta record, the embedding digest, and the 32-byte
seed in hex. The serving side derives the starting point from the seed
with the same counter-mode DRBG this package uses, so one seed means one
latent on both sides of the wire.
"""

import base64
from typing import Optional

import requests

from poa.errors import BackendError, ProtocolVersionMismatch, Transport
from poa.latent import Image, Latent, parse_poal, poal_bytes
from poa.seeding import MetaParams, Seed32, substream_seed

PROTO = "poa/1"
DEFAULT_TIMEOUT = 120.0


class RemoteBackend:
    """Client-side view of a generation service."""

    supports_pixel_transform = False

    def __init__(self, endpoint: str, timeout: float = DEFAULT_TIMEOUT,
                 session: Optional[requests.Session] = None):
        self.endpoint = endpoint.rstrip("/")
        self.timeout = timeout
        self.session = session or requests.Session()
        self.tag = self.endpoint

    def _post(self, path: str, payload: dict) -> dict:
        try:
            resp = self.session.post(self.endpoint + path, json=payload, timeout=self.timeout)
        except requests.RequestException as exc:
            raise Transport(f"POST {path} failed: {exc}") from exc
        if resp.status_code != 200:
            raise BackendError(f"backend returned {resp.status_code} for {path}: {resp.text[:200]}")
        return resp.json()

    def _get(self, path: str) -> dict:
        try:
            resp = self.session.get(self.endpoint + path, timeout=self.timeout)
        except requests.RequestException as exc:
            raise Transport(f"GET {path} failed: {exc}") from exc
        if resp.status_code != 200:
            raise BackendError(f"backend returned {resp.status_code} for {path}")
        return resp.json()

    def info(self) -> dict:
        info = self._get("/info")
        if info.get("proto") != PROTO:
            raise ProtocolVersionMismatch(f"backend speaks {info.get('proto')!r}, want {PROTO!r}")
        return info

    def generate(self, m: MetaParams, e_digest: bytes, seed: Seed32) -> Latent:
        payload = {
            "proto": PROTO,
            "m": m.to_dict(),
            "e_digest": e_digest.hex(),
            "seed": bytes(seed).hex(),
        }
        reply = self._post("/generate", payload)
        latent = _decode_latent(reply)
        if tuple(latent.shape) != tuple(m.latent_shape):
            raise ProtocolVersionMismatch(
                f"backend produced shape {latent.shape}, requested {tuple(m.latent_shape)}"
            )
        return latent

    def encode_png(self, png_bytes: bytes) -> Latent:
        reply = self._post("/encode", {"image_png_b64": base64.b64encode(png_bytes).decode()})
        return _decode_latent(reply)

    def distort_png(self, png_bytes: bytes, kind: str, param) -> bytes:
        reply = self._post(
            "/distort",
            {"image_png_b64": base64.b64encode(png_bytes).decode(), "kind": kind, "param": param},
        )
        try:
            return base64.b64decode(reply["image_png_b64"])
        except KeyError as exc:
            raise ProtocolVersionMismatch("distort reply missing image_png_b64") from exc

    def encode(self, image: Image, m: Optional[MetaParams] = None) -> Latent:
        raise BackendError(
            "remote encoding works on PNG payloads; use encode_png with real image bytes"
        )


def remote_generate(endpoint: str, m: MetaParams, e_digest: bytes, seed: Seed32) -> Latent:
    return RemoteBackend(endpoint).generate(m, e_digest, seed)


def remote_encode(endpoint: str, image_bytes: bytes) -> Latent:
    return RemoteBackend(endpoint).encode_png(image_bytes)


def _decode_latent(reply: dict) -> Latent:
    try:
        blob = base64.b64decode(reply["latent_b64"])
    except KeyError as exc:
        raise ProtocolVersionMismatch("reply missing latent_b64") from exc
    return parse_poal(blob)


def latent_to_b64(latent: Latent) -> str:
    return base64.b64encode(poal_bytes(latent)).decode()


def pa_sample_seed(pa_seed: bytes, index: int) -> Seed32:
    """Per-sample seed for adjudicating over the wire.

    The wire protocol transports one 32-byte seed per generation, so the
    adjudicator's sub-stream construction is replaced by hashed per-sample
    seeds when the backend is remote.
    """
    return substream_seed(pa_seed, index)
