"""HTTP service: public search/visualization plus token-gated admin routes
over the stores and the task pipeline."""

from __future__ import annotations

import os
from dataclasses import dataclass

import numpy as np
from fastapi import Depends, FastAPI, Header, HTTPException, Query, Request
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import JSONResponse
from pydantic import BaseModel, Field

from . import embedding
from .auth import InvalidToken, issue_token, verify_token
from .errors import (
    Base64Error,
    DecodeError,
    DuplicatePending,
    IllegalTransition,
    PerplexityOutOfRange,
    SchemaViolation,
    UnknownNamespace,
    UnknownTask,
    UnsupportedFormat,
)
from .metadata_store import MetadataStore
from .pipeline import Pipeline
from .reduction import tsne
from .vector_store import VectorStore

MAX_VISUALIZE_POINTS = 2000


@dataclass
class ServiceContext:
    vectors: VectorStore
    metadata: MetadataStore
    pipeline: Pipeline
    secret: str
    admin_user: str
    admin_pass: str
    cors_origins: list[str] | None = None

    @classmethod
    def from_env(cls, vectors, metadata, pipeline):
        return cls(
            vectors=vectors,
            metadata=metadata,
            pipeline=pipeline,
            secret=os.environ.get("UNVD_SECRET", ""),
            admin_user=os.environ.get("UNVD_ADMIN_USER", "admin"),
            admin_pass=os.environ.get("UNVD_ADMIN_PASS", ""),
            cors_origins=[os.environ["UNVD_CORS_ORIGIN"]]
            if "UNVD_CORS_ORIGIN" in os.environ
            else ["*"],
        )


class SearchRequest(BaseModel):
    image_base64: str
    top_k: int = Field(default=10, ge=1, le=100)
    namespace: str = "main"


class VisualizeRequest(BaseModel):
    vector_ids: list[str] | None = None
    vectors: list[list[float]] | None = None
    namespace: str = "main"
    perplexity: float | None = None
    seed: int = 0


class LoginRequest(BaseModel):
    username: str
    password: str


class EnqueueRequest(BaseModel):
    chain: str = "ethereum"
    address: str


def create_app(ctx: ServiceContext) -> FastAPI:
    app = FastAPI(title="unvd", docs_url=None, redoc_url=None)
    app.add_middleware(
        CORSMiddleware,
        allow_origins=ctx.cors_origins or ["*"],
        allow_methods=["*"],
        allow_headers=["*"],
    )

    embedder = embedding.EmbedderDescriptor()

    def require_auth(authorization: str = Header(default="")) -> str:
        if not authorization.startswith("Bearer "):
            raise HTTPException(status_code=401, detail="missing bearer token")
        if not ctx.secret:
            raise HTTPException(status_code=401, detail="auth not configured")
        try:
            return verify_token(authorization[len("Bearer "):], ctx.secret)
        except InvalidToken as e:
            raise HTTPException(status_code=401, detail=str(e)) from e

    @app.exception_handler(Exception)
    async def on_unexpected(request: Request, exc: Exception):
        # malformed inputs must never surface as 5xx
        return JSONResponse(status_code=400, content={"detail": f"{type(exc).__name__}: {exc}"})

    @app.post("/search")
    def search(req: SearchRequest):
        try:
            vec = embedding.embed_base64(req.image_base64)
        except (Base64Error, UnsupportedFormat, DecodeError) as e:
            raise HTTPException(status_code=400, detail=str(e)) from e
        try:
            results = ctx.vectors.query(req.namespace, vec, req.top_k)
        except UnknownNamespace as e:
            raise HTTPException(status_code=404, detail=f"unknown namespace: {e}") from e
        return {
            "results": [
                {"id": r.id, "distance": r.distance, "metadata": r.metadata}
                for r in results
            ],
            "embedder": {
                "name": embedder.name,
                "dimension": embedder.dimension,
                "version": embedder.version,
            },
        }

    @app.post("/visualize")
    def visualize(req: VisualizeRequest):
        if req.vector_ids:
            ids = req.vector_ids
            rows = []
            for vid in ids:
                try:
                    rec = ctx.vectors.fetch(req.namespace, vid)
                except UnknownNamespace as e:
                    raise HTTPException(status_code=404, detail=str(e)) from e
                if rec is None:
                    raise HTTPException(status_code=404, detail=f"unknown id: {vid}")
                rows.append(rec.vector)
            X = np.stack(rows).astype(np.float64)
        elif req.vectors:
            ids = [str(i) for i in range(len(req.vectors))]
            try:
                X = np.asarray(req.vectors, dtype=np.float64)
            except ValueError as e:
                raise HTTPException(status_code=422, detail=f"ragged vectors: {e}") from e
            if X.ndim != 2:
                raise HTTPException(status_code=422, detail="vectors must be a 2-D array")
        else:
            raise HTTPException(status_code=422, detail="vector_ids or vectors required")
        n = X.shape[0]
        if n < 4:
            raise HTTPException(status_code=422, detail="at least 4 vectors required")
        if n > MAX_VISUALIZE_POINTS:
            raise HTTPException(status_code=422, detail=f"at most {MAX_VISUALIZE_POINTS} vectors")
        perplexity = req.perplexity if req.perplexity is not None else min(15.0, (n - 1) / 3)
        try:
            Y = tsne(X, perplexity=perplexity, seed=req.seed)
        except PerplexityOutOfRange as e:
            raise HTTPException(status_code=422, detail=str(e)) from e
        return {
            "points": [[float(x), float(y)] for x, y in Y],
            "ids": ids,
            "seed": req.seed,
        }

    @app.post("/auth/login")
    def login(req: LoginRequest):
        if not ctx.secret or req.username != ctx.admin_user or req.password != ctx.admin_pass:
            raise HTTPException(status_code=401, detail="bad credentials")
        return {"token": issue_token(req.username, ctx.secret)}

    @app.post("/admin/enqueue")
    def enqueue(req: EnqueueRequest, subject: str = Depends(require_auth)):
        try:
            task_id = ctx.pipeline.enqueue_contract(req.chain, req.address)
        except DuplicatePending as e:
            raise HTTPException(status_code=409, detail=str(e)) from e
        except SchemaViolation as e:
            raise HTTPException(status_code=422, detail=str(e)) from e
        return {"task_id": task_id}

    @app.get("/admin/tasks")
    def list_tasks(
        status: str | None = None,
        cursor: int = Query(default=0, ge=0),
        limit: int = Query(default=50, ge=1, le=1000),
        subject: str = Depends(require_auth),
    ):
        tasks = ctx.metadata.list_tasks(status=status)
        page = tasks[cursor : cursor + limit]
        next_cursor = cursor + limit if cursor + limit < len(tasks) else None
        return {
            "tasks": [
                {
                    "task_id": t.task_id,
                    "kind": t.kind,
                    "status": t.status,
                    "attempts": t.attempts,
                    "last_error": t.last_error,
                    "payload": t.payload,
                }
                for t in page
            ],
            "next_cursor": next_cursor,
        }

    @app.post("/admin/tasks/{task_id}/retry")
    def retry(task_id: str, subject: str = Depends(require_auth)):
        try:
            task = ctx.pipeline.retry_task(task_id)
        except UnknownTask as e:
            raise HTTPException(status_code=404, detail=str(e)) from e
        except IllegalTransition as e:
            raise HTTPException(status_code=409, detail=str(e)) from e
        return {"task_id": task.task_id, "status": task.status}

    @app.get("/admin/analytics")
    def analytics(subject: str = Depends(require_auth)):
        summary = ctx.metadata.analytics_summary(vector_count=ctx.vectors.total_count())
        stats = ctx.pipeline.stats
        summary["workers"] = {
            "processed": stats.processed,
            "succeeded": stats.succeeded,
            "failed": stats.failed,
            "per_kind": dict(stats.per_kind),
            "throughput": stats.throughput(),
        }
        return summary

    return app
