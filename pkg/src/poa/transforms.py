"""Pixel-domain distortions, invertible affine warps, and the worst-case
norm-bounded perturbation of the similarity score.

The affine linear part is parameterized as
``scale * Sh(shear/2) @ R(rot) @ Sh(shear/2)`` (a symmetric shear split),
which makes the five-parameter family closed under exact inversion:
negating the angles and inverting the scale inverts the linear part, and
the translation maps through the inverse matrix.
"""

import math
from dataclasses import dataclass

import numpy as np

from poa.errors import DomainError, SingularTransform, ZeroLatent
from poa.latent import Image, Latent
from poa.seeding import Seed32, sample_gaussian, sample_uniform

AFFINE_SCALE_RANGE = (0.98, 1.02)
AFFINE_TRANSLATE_RANGE = (-0.02, 0.02)
AFFINE_ROT_RANGE = (-3.0, 3.0)
AFFINE_SHEAR_RANGE = (-2.0, 2.0)


def add_gaussian_noise(image: Image, sigma2: float, noise_seed: Seed32) -> Image:
    if sigma2 < 0:
        raise DomainError("sigma2 must be >= 0")
    if sigma2 == 0:
        return Image(shape=image.shape, data=image.data.copy())
    noise = sample_gaussian(noise_seed, image.npixels)
    return Image(shape=image.shape, data=image.data + math.sqrt(sigma2) * noise)


def quantize(image: Image, levels: int) -> Image:
    """Uniform mid-rise quantization over the image's value range.

    Values already lying on a uniform `levels`-point grid are returned
    unchanged, which makes the operation a projection (idempotent).
    """
    if levels < 2:
        raise DomainError("levels must be >= 2")
    x = image.data
    lo, hi = float(np.min(x)), float(np.max(x))
    if hi == lo:
        return Image(shape=image.shape, data=x.copy())
    if _on_uniform_grid(x, lo, hi, levels):
        return Image(shape=image.shape, data=x.copy())
    width = (hi - lo) / levels
    bins = np.clip(np.floor((x - lo) / width), 0, levels - 1)
    return Image(shape=image.shape, data=lo + (bins + 0.5) * width)


def _on_uniform_grid(x: np.ndarray, lo: float, hi: float, levels: int) -> bool:
    if levels < 2:
        return False
    step = (hi - lo) / (levels - 1)
    pos = (x - lo) / step
    return bool(np.all(np.abs(pos - np.round(pos)) < 1e-9))


@dataclass(frozen=True)
class AffineParams:
    """Perceptual-preserving alignment map. Translations are fractions of
    the image dimensions; angles are degrees."""

    scale: float = 1.0
    tx: float = 0.0
    ty: float = 0.0
    rot_deg: float = 0.0
    shear_deg: float = 0.0

    def __post_init__(self):
        if not all(
            math.isfinite(v) for v in (self.scale, self.tx, self.ty, self.rot_deg, self.shear_deg)
        ):
            raise DomainError("affine parameters must be finite")
        if abs(self.scale) < 1e-12 or abs(self.shear_deg) >= 90.0:
            raise SingularTransform("induced matrix is singular")

    @property
    def is_identity(self) -> bool:
        return (
            self.scale == 1.0
            and self.tx == 0.0
            and self.ty == 0.0
            and self.rot_deg == 0.0
            and self.shear_deg == 0.0
        )

    def matrix(self) -> np.ndarray:
        th = math.radians(self.rot_deg)
        k = math.tan(math.radians(self.shear_deg) / 2.0)
        shear = np.array([[1.0, k], [0.0, 1.0]])
        rot = np.array([[math.cos(th), -math.sin(th)], [math.sin(th), math.cos(th)]])
        return self.scale * (shear @ rot @ shear)

    def to_dict(self) -> dict:
        return {
            "scale": self.scale,
            "tx": self.tx,
            "ty": self.ty,
            "rot_deg": self.rot_deg,
            "shear_deg": self.shear_deg,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "AffineParams":
        return cls(
            scale=float(d.get("scale", 1.0)),
            tx=float(d.get("tx", 0.0)),
            ty=float(d.get("ty", 0.0)),
            rot_deg=float(d.get("rot_deg", 0.0)),
            shear_deg=float(d.get("shear_deg", 0.0)),
        )

    @classmethod
    def identity(cls) -> "AffineParams":
        return cls()


def warp_grid(arr: np.ndarray, params: AffineParams) -> np.ndarray:
    """Bilinear warp about the image center with edge clamping.

    ``out(o) = in(M (o - c) + c + t)``: the parameters describe the source
    sampling map, so composing a warp with the warp of the inverted
    parameters is the identity up to interpolation error. Leading axes of
    ``arr`` are batch; the last two are (row, col).
    """
    H, W = arr.shape[-2], arr.shape[-1]
    M = params.matrix()
    if abs(np.linalg.det(M)) < 1e-12:
        raise SingularTransform("affine matrix not invertible")
    cy, cx = (H - 1) / 2.0, (W - 1) / 2.0
    ys, xs = np.mgrid[0:H, 0:W]
    dx, dy = xs - cx, ys - cy
    src_x = M[0, 0] * dx + M[0, 1] * dy + cx + params.tx * W
    src_y = M[1, 0] * dx + M[1, 1] * dy + cy + params.ty * H
    src_x = np.clip(src_x, 0.0, W - 1.0)
    src_y = np.clip(src_y, 0.0, H - 1.0)
    x0 = np.floor(src_x).astype(np.intp)
    y0 = np.floor(src_y).astype(np.intp)
    x1 = np.minimum(x0 + 1, W - 1)
    y1 = np.minimum(y0 + 1, H - 1)
    fx = src_x - x0
    fy = src_y - y0
    flat = arr.reshape(-1, H, W)
    top = (1.0 - fx) * flat[:, y0, x0] + fx * flat[:, y0, x1]
    bot = (1.0 - fx) * flat[:, y1, x0] + fx * flat[:, y1, x1]
    out = (1.0 - fy) * top + fy * bot
    return out.reshape(arr.shape)


def affine_warp(image: Image, params: AffineParams) -> Image:
    return Image.from_grid(warp_grid(image.grid(), params))


def invert_affine(params: AffineParams, width: int = 1, height: int = 1) -> AffineParams:
    """Parameters of the exact inverse map.

    The linear part inverts inside the family (symmetric shear split); the
    translation needs the pixel dimensions only to stay expressed as
    fractions, so callers warping the same-size grid may keep the defaults.
    """
    M = params.matrix()
    if abs(np.linalg.det(M)) < 1e-12:
        raise SingularTransform("affine matrix not invertible")
    Minv = np.linalg.inv(M)
    t = np.array([params.tx * width, params.ty * height])
    t_inv = -Minv @ t
    return AffineParams(
        scale=1.0 / params.scale,
        tx=float(t_inv[0]) / width,
        ty=float(t_inv[1]) / height,
        rot_deg=-params.rot_deg,
        shear_deg=-params.shear_deg,
    )


def sample_affine(seed: Seed32) -> AffineParams:
    """Random perceptual-preserving transform from the seed's keystream."""
    u = sample_uniform(seed, 5)

    def _span(lohi, v):
        return lohi[0] + (lohi[1] - lohi[0]) * v

    return AffineParams(
        scale=_span(AFFINE_SCALE_RANGE, u[0]),
        tx=_span(AFFINE_TRANSLATE_RANGE, u[1]),
        ty=_span(AFFINE_TRANSLATE_RANGE, u[2]),
        rot_deg=_span(AFFINE_ROT_RANGE, u[3]),
        shear_deg=_span(AFFINE_SHEAR_RANGE, u[4]),
    )


def worst_case_perturbation(latent: Latent, eps: float, p: float) -> Latent:
    """The ``v`` minimizing ``L . v`` over the lp ball of radius eps.

    For finite ``p > 1`` with Holder conjugate ``q = p / (p - 1)``:
    ``v_i = -eps * sign(L_i) |L_i|^(q-1) / ||L||_q^(q-1)``, attaining
    ``L . v = -eps ||L||_q``. ``p = 1`` concentrates mass on one
    max-magnitude coordinate (q = inf); ``p = inf`` is the signed
    elementwise limit (q = 1).
    """
    if eps < 0:
        raise DomainError("eps must be >= 0")
    if p < 1:
        raise DomainError("p must be >= 1")
    L = latent.data
    if not np.any(L != 0):
        raise ZeroLatent("perturbation undefined for the zero latent")
    v = np.zeros_like(L)
    if eps == 0:
        return Latent(shape=latent.shape, data=v)
    if p == 1:
        idx = int(np.argmax(np.abs(L)))
        v[idx] = -eps * math.copysign(1.0, L[idx])
    elif math.isinf(p):
        v = -eps * np.sign(L)
    else:
        q = p / (p - 1.0)
        mag = np.abs(L)
        norm_q = float(np.sum(mag ** q)) ** (1.0 / q)
        v = -eps * np.sign(L) * (mag / norm_q) ** (q - 1.0)
    return Latent(shape=latent.shape, data=v)
