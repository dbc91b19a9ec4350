"""FastAPI app exposing the experiment runners.

All endpoints are stateless pure compute: POST a flat ExperimentConfig, get
back a summary plus artifact text. Library errors map onto a uniform 400
payload whose error_kind ("config" or "numerical") thin clients translate
into exit codes.
"""

from __future__ import annotations

from fastapi import FastAPI, Request
from fastapi.exceptions import RequestValidationError
from fastapi.responses import JSONResponse
from pydantic import ValidationError

from .. import __version__
from ..config import ExperimentConfig
from ..errors import AbCacheError, DomainError, NumericalError, SpacingError
from . import runner
from .schemas import (
    BenchResponse,
    ConvergenceResponse,
    CurveResponse,
    ErrorPayload,
    HealthResponse,
    SampleResponse,
    WeightsResponse,
)


def _error_kind(exc: Exception) -> str:
    if isinstance(exc, (DomainError, SpacingError, NumericalError)):
        return "numerical"
    return "config"


def create_app() -> FastAPI:
    app = FastAPI(title="abcache", version=__version__)

    @app.exception_handler(AbCacheError)
    async def _library_error(request: Request, exc: AbCacheError):
        payload = ErrorPayload(error_kind=_error_kind(exc), message=str(exc))
        return JSONResponse(status_code=400, content=payload.model_dump())

    @app.exception_handler(RequestValidationError)
    async def _request_error(request: Request, exc: RequestValidationError):
        payload = ErrorPayload(error_kind="config", message=str(exc))
        return JSONResponse(status_code=400, content=payload.model_dump())

    @app.exception_handler(ValidationError)
    async def _validation_error(request: Request, exc: ValidationError):
        payload = ErrorPayload(error_kind="config", message=str(exc))
        return JSONResponse(status_code=400, content=payload.model_dump())

    @app.get("/health", response_model=HealthResponse)
    def health() -> HealthResponse:
        return HealthResponse(status="ok", version=__version__)

    @app.get("/v1/weights/{order}", response_model=WeightsResponse)
    def weights(order: int) -> WeightsResponse:
        return runner.weight_table(order)

    @app.post("/v1/sample", response_model=SampleResponse)
    def sample(config: ExperimentConfig) -> SampleResponse:
        return runner.run_sample(config, baseline=False)

    @app.post("/v1/baseline", response_model=SampleResponse)
    def baseline(config: ExperimentConfig) -> SampleResponse:
        return runner.run_sample(config, baseline=True)

    @app.post("/v1/convergence", response_model=ConvergenceResponse)
    def convergence(config: ExperimentConfig) -> ConvergenceResponse:
        return runner.run_convergence(config)

    @app.post("/v1/scale-factor", response_model=CurveResponse)
    def scale_factor(config: ExperimentConfig) -> CurveResponse:
        return runner.run_scale_factor(config)

    @app.post("/v1/similarity", response_model=CurveResponse)
    def similarity(config: ExperimentConfig) -> CurveResponse:
        return runner.run_similarity(config)

    @app.post("/v1/bench", response_model=BenchResponse)
    def bench(config: ExperimentConfig) -> BenchResponse:
        return runner.run_bench(config)

    return app
