"""HTTP inference API over a loaded checkpoint.

Stateless apart from the engine's bounded context cache; every endpoint is a
pure function of (checkpoint, request, seed). Requests without a seed draw
one from a server RNG (non-deterministic mode).
"""

from __future__ import annotations

import threading

import numpy as np
from fastapi import FastAPI, HTTPException, Request
from fastapi.exceptions import RequestValidationError
from fastapi.responses import JSONResponse, PlainTextResponse
from pydantic import BaseModel, Field

from .engine import Engine

MAX_SAMPLES = 10_000


class ObservationBody(BaseModel):
    x: list[list[float]] = Field(..., description="[[x, y], ...] pairs")
    lam: float = Field(..., alias="lambda")
    n_samples: int = 100
    seed: int | None = None

    model_config = {"populate_by_name": True}


class ModelPosteriorBody(ObservationBody):
    constrained: bool = True


class ParamPosteriorBody(ObservationBody):
    mask: list[int]


class PredictiveBody(ObservationBody):
    mode: str = "global"
    mask: list[int] | None = None


def _extract_y(body: ObservationBody, n_points: int) -> np.ndarray:
    rows = body.x
    if len(rows) != n_points:
        raise HTTPException(
            400, f"x must contain {n_points} [x, y] pairs, got {len(rows)}"
        )
    if any(len(r) != 2 for r in rows):
        raise HTTPException(400, "each x entry must be an [x, y] pair")
    return np.asarray([r[1] for r in rows], dtype=np.float64)


def _check_common(body: ObservationBody):
    if not 0.0 <= body.lam <= 1.0:
        raise HTTPException(422, f"lambda must lie in [0, 1], got {body.lam}")
    if body.n_samples < 0:
        raise HTTPException(400, "n_samples must be nonnegative")
    if body.n_samples > MAX_SAMPLES:
        raise HTTPException(400, f"n_samples capped at {MAX_SAMPLES}")


def create_app(engine: Engine | None, seed=None) -> FastAPI:
    app = FastAPI(title="joint posterior service")
    state = {"engine": engine}
    server_rng = np.random.default_rng(seed)
    rng_lock = threading.Lock()

    def get_engine() -> Engine:
        if state["engine"] is None:
            raise HTTPException(503, "checkpoint not loaded")
        return state["engine"]

    def resolve_seed(body_seed):
        if body_seed is not None:
            return int(body_seed)
        with rng_lock:
            return int(server_rng.integers(2**31))

    @app.exception_handler(Exception)
    async def on_error(request: Request, exc: Exception):
        return JSONResponse(status_code=500, content={"detail": str(exc)})

    @app.exception_handler(RequestValidationError)
    async def on_bad_body(request: Request, exc: RequestValidationError):
        # malformed bodies are 400; 422 is reserved for lambda range errors
        return JSONResponse(status_code=400, content={"detail": exc.errors()})

    @app.get("/healthz", response_class=PlainTextResponse)
    def healthz():
        return "ok"

    @app.get("/v1/metadata")
    def metadata():
        return get_engine().metadata()

    @app.post("/v1/model_posterior")
    def model_posterior(body: ModelPosteriorBody):
        eng = get_engine()
        _check_common(body)
        y = _extract_y(body, eng.task.n_points)
        return eng.model_posterior(
            y, body.lam, body.n_samples, constrained=body.constrained,
            seed=resolve_seed(body.seed),
        )

    @app.post("/v1/param_posterior")
    def param_posterior(body: ParamPosteriorBody):
        eng = get_engine()
        _check_common(body)
        y = _extract_y(body, eng.task.n_points)
        if len(body.mask) != eng.task.C:
            raise HTTPException(
                400, f"mask must have {eng.task.C} bits, got {len(body.mask)}"
            )
        if any(b not in (0, 1) for b in body.mask):
            raise HTTPException(400, "mask bits must be 0 or 1")
        try:
            return eng.param_posterior(
                y, body.mask, body.lam, body.n_samples,
                seed=resolve_seed(body.seed),
            )
        except ValueError as e:
            raise HTTPException(400, str(e)) from e

    @app.post("/v1/predictive")
    def predictive(body: PredictiveBody):
        eng = get_engine()
        _check_common(body)
        if body.mode not in ("global", "local"):
            raise HTTPException(400, f"unknown mode {body.mode!r}")
        if body.mode == "local" and body.mask is None:
            raise HTTPException(400, "local mode requires a mask")
        if body.mask is not None and len(body.mask) != eng.task.C:
            raise HTTPException(
                400, f"mask must have {eng.task.C} bits, got {len(body.mask)}"
            )
        y = _extract_y(body, eng.task.n_points)
        try:
            return eng.predictive(
                y, body.lam, body.mode, body.n_samples, bits=body.mask,
                seed=resolve_seed(body.seed),
            )
        except ValueError as e:
            raise HTTPException(400, str(e)) from e

    return app
