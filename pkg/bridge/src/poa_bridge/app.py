"""FastAPI application implementing the generator wire protocol.

Endpoints: ``GET /info``, ``POST /generate``, ``POST /encode``,
``POST /distort``, plus ``POST /embedding`` for registering raw embedding
bytes by digest. Latents travel as base64 POAL payloads (f32 LE)."""

import base64
import hashlib
import struct
from contextlib import asynccontextmanager

import numpy as np
from fastapi import FastAPI, HTTPException
from pydantic import BaseModel

from poa_bridge.model import distort_gauss, distort_jpeg, load_model

PROTO = "poa/1"
POAL_MAGIC = b"POAL"
POAL_VERSION = 1
POAL_DTYPE_F32 = 1


def latent_to_poal(latent: np.ndarray) -> bytes:
    shape = latent.shape
    header = POAL_MAGIC + bytes([POAL_VERSION, POAL_DTYPE_F32, len(shape)])
    dims = b"".join(struct.pack("<I", int(v)) for v in shape)
    return header + dims + latent.astype("<f4").tobytes()


class GenerateRequest(BaseModel):
    proto: str
    m: dict
    e_digest: str
    seed: str


class EncodeRequest(BaseModel):
    image_png_b64: str


class DistortRequest(BaseModel):
    image_png_b64: str
    kind: str
    param: float


class EmbeddingRequest(BaseModel):
    e_b64: str
    digest: str


def create_app(model_kind: str = "auto") -> FastAPI:
    @asynccontextmanager
    async def lifespan(app: FastAPI):
        app.state.model = load_model(model_kind)
        yield

    app = FastAPI(title="poa-bridge", lifespan=lifespan)
    app.state.model = None
    app.state.embeddings = {}

    def _model():
        if app.state.model is None:
            raise HTTPException(status_code=503, detail="model is still loading")
        return app.state.model

    @app.get("/info")
    def info():
        model = _model()
        return {
            "latent_shape": list(model.latent_shape),
            "model_tag": model.model_tag,
            "proto": PROTO,
        }

    @app.post("/generate")
    def generate(req: GenerateRequest):
        model = _model()
        if req.proto != PROTO:
            raise HTTPException(status_code=400, detail=f"unsupported proto {req.proto!r}")
        try:
            seed = bytes.fromhex(req.seed)
            e_digest = bytes.fromhex(req.e_digest)
        except ValueError as exc:
            raise HTTPException(status_code=400, detail=f"bad hex field: {exc}") from exc
        if len(seed) != 32 or len(e_digest) != 32:
            raise HTTPException(status_code=400, detail="seed and e_digest must be 32 bytes")
        shape = req.m.get("latent_shape")
        if shape is not None and tuple(shape) != tuple(model.latent_shape):
            raise HTTPException(
                status_code=400,
                detail=f"model serves latent shape {list(model.latent_shape)}, not {shape}",
            )
        latent = model.generate(e_digest, seed)
        return {"latent_b64": base64.b64encode(latent_to_poal(latent)).decode()}

    @app.post("/encode")
    def encode(req: EncodeRequest):
        model = _model()
        try:
            png = base64.b64decode(req.image_png_b64)
            latent = model.encode_png(png)
        except Exception as exc:
            raise HTTPException(status_code=400, detail=f"encode failed: {exc}") from exc
        return {"latent_b64": base64.b64encode(latent_to_poal(latent)).decode()}

    @app.post("/distort")
    def distort(req: DistortRequest):
        try:
            png = base64.b64decode(req.image_png_b64)
            if req.kind == "jpeg":
                out = distort_jpeg(png, int(req.param))
            elif req.kind == "gauss":
                out = distort_gauss(png, float(req.param))
            else:
                raise ValueError(f"unknown distortion kind {req.kind!r}")
        except ValueError as exc:
            raise HTTPException(status_code=400, detail=str(exc)) from exc
        return {"image_png_b64": base64.b64encode(out).decode()}

    @app.post("/embedding")
    def register_embedding(req: EmbeddingRequest):
        raw = base64.b64decode(req.e_b64)
        digest = hashlib.sha3_256(raw).hexdigest()
        if digest != req.digest.lower():
            raise HTTPException(status_code=400, detail="digest does not match payload")
        app.state.embeddings[digest] = raw
        return {"stored": True, "digest": digest, "n_bytes": len(raw)}

    return app


app = create_app()
