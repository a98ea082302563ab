"""The /embed HTTP service.

Protocol: POST /embed with {"texts": [string, ...]} returns 200 with
{"model": str, "dim": int, "embeddings": [[float, ...], ...]}; an empty
texts list is a 400; inference failures surface as 500 with a JSON error
body.  Responses are deterministic per input text.
"""

from __future__ import annotations

from dataclasses import dataclass

from fastapi import FastAPI
from fastapi.responses import JSONResponse
from pydantic import BaseModel

from .models import Encoder, load_encoder

__all__ = ["ProviderConfig", "create_app", "serve"]


@dataclass(frozen=True)
class ProviderConfig:
    model: str | None = None
    batch_size: int = 32
    addr: str = "127.0.0.1:8441"


class EmbedRequest(BaseModel):
    texts: list[str]


def create_app(config: ProviderConfig = ProviderConfig(), encoder: Encoder | None = None) -> FastAPI:
    encoder = encoder or load_encoder(config.model)
    app = FastAPI(title="csd-embedder", version="0.1.0")

    @app.post("/embed")
    def embed(request: EmbedRequest):
        if not request.texts:
            return JSONResponse(status_code=400, content={"error": "texts must be non-empty"})
        try:
            vectors = encoder.encode(request.texts, batch_size=config.batch_size)
        except Exception as exc:  # inference failure -> JSON 500
            return JSONResponse(status_code=500, content={"error": str(exc)})
        return {
            "model": encoder.name,
            "dim": encoder.dim,
            "embeddings": [[float(v) for v in row] for row in vectors],
        }

    return app


def serve(config: ProviderConfig) -> None:
    import uvicorn

    host, _, port = config.addr.rpartition(":")
    uvicorn.run(create_app(config), host=host or "127.0.0.1", port=int(port))
