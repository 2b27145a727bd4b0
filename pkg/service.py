""" HTTP front end for the ask pipeline.

POST /v1/ask        {"query": "..."} -> {"answer": ..., "trace_id": ..., "rounds": [{"round": 1, "rating": 4}]}
GET  /v1/trace/{id} -> the stored trace
GET  /healthz       -> {"status": "ok", "version": ...}

Each request runs its own pipeline and stores its own trace; nothing is shared between
requests except the read-only index snapshot and the trace directory.
"""
from typing import List
import uvicorn
from fastapi import FastAPI, HTTPException, Request, status
from fastapi.concurrency import run_in_threadpool
from fastapi.encoders import jsonable_encoder
from fastapi.exceptions import RequestValidationError
from fastapi.responses import JSONResponse
from loguru import logger
from pydantic import BaseModel, Field
from config import VERSION, AppConfig, build_pipeline_deps
from gateway import BackendUnavailableError
from orchestrator import PipelineConfig, PipelineDeps, PipelineError, run_pipeline
from trace_store import TraceNotFoundError, TraceStore
from vector_index import EmbeddingUnavailableError


class AskRequest(BaseModel):
    query: str = Field(..., min_length=1)


class RoundRating(BaseModel):
    round: int
    rating: int


class AskResponse(BaseModel):
    answer: str
    trace_id: str
    rounds: List[RoundRating]


def _caused_by_unavailable_backend(exc: BaseException) -> bool:
    while exc is not None:
        if isinstance(exc, (BackendUnavailableError, EmbeddingUnavailableError)):
            return True
        exc = exc.__cause__
    return False


def create_app(deps: PipelineDeps, pipeline_config: PipelineConfig, store: TraceStore) -> FastAPI:
    app = FastAPI(title="bioflow", version=VERSION)

    @app.exception_handler(RequestValidationError)
    async def malformed_body(_request: Request, exc: RequestValidationError):
        return JSONResponse(status_code=status.HTTP_400_BAD_REQUEST, content={"detail": jsonable_encoder(exc.errors())})

    @app.get("/healthz")
    def healthz():
        return {"status": "ok", "version": VERSION}

    @app.post("/v1/ask", response_model=AskResponse)
    async def ask(request: AskRequest):
        if not request.query.strip():
            raise HTTPException(status_code=status.HTTP_400_BAD_REQUEST, detail="query must be non-empty")
        try:
            trace = await run_in_threadpool(run_pipeline, request.query, pipeline_config, deps)
        except PipelineError as exc:
            if exc.trace.rounds:
                await run_in_threadpool(store.store_trace, exc.trace)
            if _caused_by_unavailable_backend(exc):
                logger.warning("BACKEND UNAVAILABLE: {}", exc)
                raise HTTPException(status_code=status.HTTP_503_SERVICE_UNAVAILABLE, detail=str(exc))
            logger.error("PIPELINE FAILED: {}", exc)
            raise HTTPException(status_code=status.HTTP_500_INTERNAL_SERVER_ERROR, detail=str(exc))

        trace_id = await run_in_threadpool(store.store_trace, trace)
        return AskResponse(
            answer=trace.final_answer,
            trace_id=trace_id,
            rounds=[RoundRating(round=r.round, rating=r.self_rating) for r in trace.rounds],
        )

    @app.get("/v1/trace/{trace_id}")
    def get_trace(trace_id: str):
        try:
            return store.load_raw(trace_id)
        except TraceNotFoundError:
            raise HTTPException(status_code=status.HTTP_404_NOT_FOUND, detail=f"unknown trace {trace_id}")

    return app


def serve(config: AppConfig) -> None:
    """ Loads the index and backends (failing before binding if they are missing) and
    runs the service with uvicorn. """
    deps = build_pipeline_deps(config)
    app = create_app(deps, config.pipeline, TraceStore(config.paths.traces))
    logger.info("SERVING ON {}:{}", config.host, config.port)
    uvicorn.run(app, host=config.host, port=config.port)
