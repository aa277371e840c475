"""HTTP embedding service.

POST /embed  {"names": [...]}  ->  {"dim": int, "vectors": [[...], ...]}
GET  /health                   ->  {"dim": int, "model_id": str}

Vectors are parallel to names and unit-normalized. The model is loaded
once and shared read-only; request handling is stateless.
"""

from __future__ import annotations

from fastapi import FastAPI, HTTPException
from pydantic import BaseModel, field_validator

from .encoders import Encoder

DEFAULT_MAX_BATCH = 256


class EmbedRequest(BaseModel):
    names: list[str]

    @field_validator("names")
    @classmethod
    def names_non_empty(cls, names: list[str]) -> list[str]:
        if not names:
            raise ValueError("names must be non-empty")
        if any(not n for n in names):
            raise ValueError("names must not contain empty strings")
        return names


def create_app(encoder: Encoder, max_batch: int = DEFAULT_MAX_BATCH) -> FastAPI:
    app = FastAPI(title="embed-bridge")

    @app.get("/health")
    def health() -> dict:
        return {"dim": encoder.dim, "model_id": encoder.model_id}

    @app.post("/embed")
    def embed(request: EmbedRequest) -> dict:
        if len(request.names) > max_batch:
            raise HTTPException(
                status_code=413,
                detail=f"batch of {len(request.names)} exceeds limit {max_batch}",
            )
        vectors = encoder.encode(request.names)
        return {"dim": encoder.dim, "vectors": vectors.tolist()}

    return app
