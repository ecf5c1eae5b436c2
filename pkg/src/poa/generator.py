"""Generator backends: the deterministic toy-DDIM surrogate and its codec.

The surrogate realizes ``L_m(e, s)``: a DDIM loop whose per-step noise
predictor is an embedding-keyed affine map (three Householder reflections,
a diagonal scaling in [0.9, 1.1], and a small additive bias). The whole
pipeline is therefore affine in the starting point, which the adjudicator
exploits: ``transfer_map`` exposes the composed ``(G, c)`` with
``L = G s + c`` so bulk scoring collapses to dot products. The step-wise
path and the composed path agree to float round-off and are cross-checked
in the test suite.

The toy decoder/encoder pair is an exactly invertible stand-in for a VAE:
nearest-neighbour upscale plus a unit-DC 3x3 binomial smoothing, inverted
on the latent grid through the separable per-axis operator.
"""

import hashlib
import math
from dataclasses import dataclass
from typing import Optional, Union

import numpy as np

from poa import kernels
from poa.errors import DomainError, InvalidAlpha, ShapeMismatch
from poa.latent import Image, Latent, parse_poal, poal_bytes
from poa.seeding import MetaParams, Seed32, sample_gaussian

BETA_START = 1e-4
BETA_END = 2e-2

# Sub-stream namespaces of the predictor keystream. Reflections use
# 3*t + j directly; the diagonal and bias streams live in high ranges.
_NS_DIAG = 1 << 24
_NS_BIAS = 1 << 25
_NS_EMBED = 1 << 26

EMBED_CONDITIONING_LEN = 64


@dataclass(frozen=True)
class Schedule:
    """Cumulative-product alpha sequence of a linear-beta DDIM schedule."""

    alphas_bar: np.ndarray

    def __post_init__(self):
        ab = np.asarray(self.alphas_bar, dtype=np.float64)
        if ab.ndim != 1 or ab.size < 1:
            raise DomainError("alphas_bar must be a nonempty vector")
        if np.any(ab <= 0) or np.any(ab >= 1):
            raise InvalidAlpha("alphas_bar entries must lie in (0, 1)")
        if ab.size > 1 and np.any(np.diff(ab) >= 0):
            raise InvalidAlpha("alphas_bar must be strictly decreasing")
        object.__setattr__(self, "alphas_bar", ab)


def make_schedule(timesteps: int) -> Schedule:
    if timesteps < 1:
        raise DomainError("timesteps must be >= 1")
    betas = np.linspace(BETA_START, BETA_END, timesteps)
    return Schedule(alphas_bar=np.cumprod(1.0 - betas))


def ddim_step(x_t: Latent, eps: Latent, alpha_t: float, alpha_prev: float) -> Latent:
    """One deterministic denoising update from noise level alpha_t to alpha_prev."""
    if x_t.shape != eps.shape:
        raise ShapeMismatch("x_t and eps shapes differ")
    if not (0.0 < alpha_t < 1.0 and 0.0 < alpha_prev < 1.0):
        raise InvalidAlpha("alphas must lie in (0, 1)")
    if alpha_prev < alpha_t:
        raise InvalidAlpha("alpha_prev must be >= alpha_t")
    out = _ddim_step_arr(x_t.data, eps.data, alpha_t, alpha_prev)
    return Latent(shape=x_t.shape, data=out)


def _ddim_step_arr(x, eps, alpha_t, alpha_prev):
    pred_x0 = (x - math.sqrt(1.0 - alpha_t) * eps) / math.sqrt(alpha_t)
    return math.sqrt(alpha_prev) * pred_x0 + math.sqrt(1.0 - alpha_prev) * eps


@dataclass(frozen=True)
class Embedding:
    """Embedding handle: its digest keys the surrogate; ``expanded`` is a
    digest-derived conditioning vector."""

    digest: bytes
    expanded: np.ndarray

    def __post_init__(self):
        if len(self.digest) != 32:
            raise DomainError("embedding digest must be 32 bytes")


def embedding_from_bytes(raw: bytes) -> Embedding:
    digest = hashlib.sha3_256(raw).digest()
    return embedding_from_digest(digest)


def embedding_from_digest(digest: bytes) -> Embedding:
    expanded = kernels.gaussians(digest, EMBED_CONDITIONING_LEN, _NS_EMBED)
    return Embedding(digest=digest, expanded=expanded)


def embedding_bytes_from_prompt(prompt: str) -> bytes:
    """Toy prompt embedding serialized as f32-LE with a shape header.

    Stand-in for a text encoder: 64 keystream gaussians keyed by the
    prompt text, packed in the POAL container (ndim = 3 as 1x1x64).
    """
    key = hashlib.sha3_256(b"poa-prompt:" + prompt.encode("utf-8")).digest()
    vec = kernels.gaussians(key, EMBED_CONDITIONING_LEN, 0)
    return poal_bytes(Latent(shape=(1, 1, EMBED_CONDITIONING_LEN), data=vec))


def embedding_from_prompt(prompt: str) -> Embedding:
    return embedding_from_bytes(embedding_bytes_from_prompt(prompt))


# ---------------------------------------------------------------------------
# Surrogate model.


class SurrogateModel:
    """Deterministic embedding-conditioned DDIM surrogate for one ``m``."""

    # Transfer maps are d x d; keep only a few per model.
    _TRANSFER_CACHE_MAX = 4
    _TABLES_CACHE_MAX = 16

    def __init__(self, m: MetaParams):
        self.m = m
        self.schedule = make_schedule(m.timesteps)
        self.d = m.latent_size
        self._tables = {}
        self._transfer = {}

    def _predictor_seed(self, e_digest: bytes) -> bytes:
        return hashlib.sha3_256(self.m.canonical_json() + e_digest).digest()

    def predictor_tables(self, e_digest: bytes):
        """Unit reflection vectors, diagonal gains and bias vectors per step."""
        cached = self._tables.get(e_digest)
        if cached is not None:
            return cached
        seed = self._predictor_seed(e_digest)
        T, d = self.m.timesteps, self.d
        vecs = np.empty((T, 3, d))
        for t in range(T):
            for j in range(3):
                v = kernels.gaussians(seed, d, 3 * t + j)
                vecs[t, j] = v / np.linalg.norm(v)
        diags = np.empty((T, d))
        biases = np.empty((T, d))
        for t in range(T):
            diags[t] = 0.9 + 0.2 * kernels.uniforms(seed, d, _NS_DIAG + t)
            biases[t] = kernels.gaussians(seed, d, _NS_BIAS + t)
        tables = (vecs, diags, biases)
        if len(self._tables) >= self._TABLES_CACHE_MAX:
            self._tables.pop(next(iter(self._tables)))
        self._tables[e_digest] = tables
        return tables

    def _step_coeffs(self):
        ab = self.schedule.alphas_bar
        T = ab.size
        coeffs = []
        for t in range(T - 1, -1, -1):
            alpha_t = ab[t]
            alpha_prev = ab[t - 1] if t > 0 else 1.0 - 1e-12
            a = math.sqrt(alpha_prev / alpha_t)
            b = math.sqrt(1.0 - alpha_prev) - a * math.sqrt(1.0 - alpha_t)
            coeffs.append((t, a, b))
        return coeffs

    def predict_eps(self, e_digest: bytes, x: np.ndarray, t: int) -> np.ndarray:
        vecs, diags, biases = self.predictor_tables(e_digest)
        y = x.copy()
        for j in range(3):
            v = vecs[t, j]
            y -= 2.0 * np.dot(v, y) * v
        return diags[t] * y + 0.1 * biases[t]

    def generate(self, e_digest: bytes, start: np.ndarray) -> np.ndarray:
        """Step-wise DDIM loop from the starting point (reference path)."""
        if start.size != self.d:
            raise ShapeMismatch(f"starting point has {start.size} entries, want {self.d}")
        x = np.array(start, dtype=np.float64)
        for t, a, b in self._step_coeffs():
            eps = self.predict_eps(e_digest, x, t)
            x = a * x + b * eps
        return x

    def transfer_map(self, e_digest: bytes):
        """Composed affine map: ``generate(s) == G @ s + c`` up to round-off."""
        cached = self._transfer.get(e_digest)
        if cached is not None:
            return cached
        vecs, diags, biases = self.predictor_tables(e_digest)
        G = np.eye(self.d)
        c = np.zeros(self.d)
        for t, a, b in self._step_coeffs():
            RG = G.copy()
            Rc = c.copy()
            for j in range(3):
                v = vecs[t, j]
                RG -= np.outer(2.0 * v, v @ RG)
                Rc -= 2.0 * np.dot(v, Rc) * v
            RG *= diags[t][:, None]
            Rc = diags[t] * Rc
            G = a * G + b * RG
            c = a * c + b * (Rc + 0.1 * biases[t])
        if len(self._transfer) >= self._TRANSFER_CACHE_MAX:
            self._transfer.pop(next(iter(self._transfer)))
        self._transfer[e_digest] = (G, c)
        return G, c

    def generate_batch(self, e_digest: bytes, starts: np.ndarray) -> np.ndarray:
        G, c = self.transfer_map(e_digest)
        return starts @ G.T + c


_model_cache = {}


def get_model(m: MetaParams) -> SurrogateModel:
    key = m.canonical_json()
    model = _model_cache.get(key)
    if model is None:
        model = SurrogateModel(m)
        _model_cache[key] = model
    return model


def surrogate_generate(m: MetaParams, e: Union[Embedding, bytes], s: Latent) -> Latent:
    digest = e.digest if isinstance(e, Embedding) else e
    if tuple(s.shape) != tuple(m.latent_shape):
        raise ShapeMismatch(f"starting shape {s.shape} != m.latent_shape {m.latent_shape}")
    out = get_model(m).generate(digest, s.data)
    return Latent(shape=m.latent_shape, data=out)


# ---------------------------------------------------------------------------
# Toy codec: exactly invertible upscale + smoothing.

_SMOOTH_1D = np.array([0.25, 0.5, 0.25])


def _smooth_axis(arr: np.ndarray, axis: int) -> np.ndarray:
    """3-tap binomial smoothing with replicate-edge padding along ``axis``."""
    arr = np.moveaxis(arr, axis, -1)
    pad = np.concatenate([arr[..., :1], arr, arr[..., -1:]], axis=-1)
    out = 0.25 * pad[..., :-2] + 0.5 * pad[..., 1:-1] + 0.25 * pad[..., 2:]
    return np.moveaxis(out, -1, axis)


def _axis_operator(n: int, upscale: int) -> np.ndarray:
    """Per-axis latent-grid operator of blockmean(smooth(replicate(.)))."""
    M = np.zeros((n, n))
    for i in range(n):
        e = np.zeros((1, n))
        e[0, i] = 1.0
        px = np.repeat(e, upscale, axis=-1)
        sm = _smooth_axis(px, -1)
        M[:, i] = sm.reshape(n, upscale).mean(axis=1)
    return M


_axis_op_cache = {}


def _axis_inverse(n: int, upscale: int) -> np.ndarray:
    key = (n, upscale)
    inv = _axis_op_cache.get(key)
    if inv is None:
        inv = np.linalg.inv(_axis_operator(n, upscale))
        _axis_op_cache[key] = inv
    return inv


def decode_grid(lat: np.ndarray, upscale: int, smoothing: bool = True) -> np.ndarray:
    """Array form of the decoder; leading dimensions are batch."""
    img = np.repeat(np.repeat(lat, upscale, axis=-2), upscale, axis=-1)
    if smoothing:
        img = _smooth_axis(_smooth_axis(img, -2), -1)
    return img


def encode_grid(img: np.ndarray, upscale: int, smoothing: bool = True) -> np.ndarray:
    """Array form of the encoder: block-mean then exact inverse smoothing."""
    h, w = img.shape[-2] // upscale, img.shape[-1] // upscale
    bm = img.reshape(img.shape[:-2] + (h, upscale, w, upscale)).mean(axis=(-3, -1))
    if not smoothing:
        return bm
    Mh_inv = _axis_inverse(h, upscale)
    Mw_inv = _axis_inverse(w, upscale)
    return np.einsum("ij,...jk,lk->...il", Mh_inv, bm, Mw_inv)


def toy_decode(latent: Latent, upscale: int, smoothing: bool = True) -> Image:
    if upscale < 1:
        raise DomainError("upscale must be >= 1")
    return Image.from_grid(decode_grid(latent.grid(), upscale, smoothing))


def toy_encode(image: Image, latent_shape, smoothing: bool = True) -> Latent:
    c, h, w = latent_shape
    ic, ih, iw = image.shape
    if ic != c or ih % h or iw % w or ih // h != iw // w:
        raise ShapeMismatch(f"image {image.shape} incompatible with latent {tuple(latent_shape)}")
    upscale = ih // h
    return Latent.from_grid(encode_grid(image.grid(), upscale, smoothing))


# ---------------------------------------------------------------------------
# Backend: the object the adjudicator and CLI talk to.


class SurrogateBackend:
    """Local backend bundling the surrogate model and the toy codec."""

    tag = "surrogate"
    supports_pixel_transform = True
    # The generation map is affine in the starting point, so bulk scoring
    # may go through transfer(); backends without this structure must
    # leave it False and be sampled one generation at a time.
    has_affine_form = True

    def __init__(self, default_m: Optional[MetaParams] = None, upscale: int = 4):
        self.default_m = default_m or MetaParams()
        if upscale < 1:
            raise DomainError("upscale must be >= 1")
        self.upscale = upscale

    def info(self) -> dict:
        return {
            "latent_shape": list(self.default_m.latent_shape),
            "model_tag": self.default_m.model_tag,
            "proto": "poa/1",
        }

    def generate(self, m: MetaParams, e_digest: bytes, seed: Seed32) -> Latent:
        start = sample_gaussian(seed, m.latent_size)
        out = get_model(m).generate(e_digest, start)
        return Latent(shape=m.latent_shape, data=out)

    def generate_from_start(self, m: MetaParams, e_digest: bytes, start: np.ndarray) -> np.ndarray:
        return get_model(m).generate(e_digest, start)

    def generate_batch_from_starts(self, m: MetaParams, e_digest: bytes,
                                   starts: np.ndarray) -> np.ndarray:
        return get_model(m).generate_batch(e_digest, starts)

    def transfer(self, m: MetaParams, e_digest: bytes):
        return get_model(m).transfer_map(e_digest)

    def encode(self, image: Image, m: Optional[MetaParams] = None) -> Latent:
        m = m or self.default_m
        return toy_encode(image, m.latent_shape)

    def decode(self, latent: Latent) -> Image:
        return toy_decode(latent, self.upscale)


def roundtrip_poal(latent: Latent) -> Latent:
    """Interchange-precision copy (f32): what a wire transfer preserves."""
    return parse_poal(poal_bytes(latent))
