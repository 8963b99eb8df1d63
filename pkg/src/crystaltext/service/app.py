"""The read-only HTTP API over a trained model, index, and atlas.

All endpoints are pure reads of immutable state loaded at startup, so
identical requests return identical bodies and requests may be served
concurrently without locking. Scores are rounded to six decimals in
payloads only.
"""

from __future__ import annotations

import json
import logging
import time

from fastapi import FastAPI, HTTPException, Request
from fastapi.middleware.cors import CORSMiddleware

from ..encoders import encode_text, tokenize
from ..errors import EmptyText
from ..retrieval import query as index_query
from .schemas import (
    ClustersResponse,
    HealthResponse,
    HeatmapRequest,
    HeatmapResponse,
    MapResponse,
    SearchHit,
    SearchRequest,
    StructureResponse,
)
from .state import ServiceState

access_logger = logging.getLogger("crystaltext.access")


def create_app(state: ServiceState | None = None) -> FastAPI:
    """Build the app; with state=None every data endpoint answers 503."""
    app = FastAPI(title="crystaltext", docs_url="/docs")
    app.state.service_state = state

    origins = state.cors_origins if state else ["http://localhost:5173"]
    app.add_middleware(
        CORSMiddleware,
        allow_origins=origins,
        allow_methods=["GET", "POST"],
        allow_headers=["*"],
    )

    @app.middleware("http")
    async def access_log(request: Request, call_next):
        started = time.monotonic()
        response = await call_next(request)
        access_logger.info(
            json.dumps(
                {
                    "method": request.method,
                    "path": request.url.path,
                    "status": response.status_code,
                    "ms": round((time.monotonic() - started) * 1000.0, 3),
                },
                sort_keys=True,
            )
        )
        return response

    def require_state() -> ServiceState:
        current = app.state.service_state
        if current is None:
            raise HTTPException(status_code=503, detail="index not loaded yet")
        return current

    def require_atlas(current: ServiceState) -> dict:
        if current.atlas is None:
            raise HTTPException(status_code=409, detail="atlas not built")
        return current.atlas

    def embed_query(current: ServiceState, text: str):
        if not text.strip():
            raise HTTPException(status_code=400, detail="query must be nonempty")
        if not tokenize(text, current.model.text.config.vocab_size):
            raise HTTPException(status_code=422, detail="query has no usable tokens")
        return encode_text(text, current.model.text)

    @app.get("/health", response_model=HealthResponse)
    def health():
        current = require_state()
        return HealthResponse(
            status="ok",
            model_checksum=current.model_checksum,
            n_structures=current.index.n,
        )

    @app.post("/search", response_model=list[SearchHit])
    def search(body: SearchRequest):
        current = require_state()
        if not 1 <= body.k <= current.index.n:
            raise HTTPException(
                status_code=400, detail=f"k must be in [1, {current.index.n}]"
            )
        q = embed_query(current, body.query)
        hits = index_query(current.index, q, body.k)
        return [
            SearchHit(id=i, title=current.index.title(i), score=round(score, 6))
            for i, score in hits
        ]

    @app.get("/map", response_model=MapResponse)
    def get_map():
        current = require_state()
        return MapResponse(**require_atlas(current))

    @app.post("/heatmap", response_model=HeatmapResponse)
    def heatmap(body: HeatmapRequest):
        current = require_state()
        atlas = require_atlas(current)
        q = embed_query(current, body.query)
        scores = {i: float(s) for i, s in zip(current.index.ids, current.index.matrix @ q)}
        values = [round(max(-1.0, min(1.0, scores[p["id"]])), 6) for p in atlas["points"]]
        return HeatmapResponse(values=values)

    @app.get("/structure/{structure_id}", response_model=StructureResponse)
    def structure(structure_id: str):
        current = require_state()
        meta = current.index.metadata.get(structure_id)
        if meta is None or "structure" not in meta:
            raise HTTPException(status_code=404, detail=f"unknown structure {structure_id!r}")
        doc = meta["structure"]
        return StructureResponse(
            id=structure_id,
            title=meta.get("title", ""),
            lattice=doc["lattice"],
            sites=doc["sites"],
        )

    @app.get("/clusters", response_model=ClustersResponse)
    def clusters():
        current = require_state()
        atlas = require_atlas(current)
        return ClustersResponse(clusters=atlas["clusters"], jsd=atlas["jsd"])

    # EmptyText can only escape embed_query if tokenization raced; map it anyway
    @app.exception_handler(EmptyText)
    async def empty_text_handler(request: Request, exc: EmptyText):
        from fastapi.responses import JSONResponse

        return JSONResponse(status_code=422, content={"detail": str(exc)})

    return app
