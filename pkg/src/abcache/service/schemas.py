"""Pydantic request/response models for the experiment service.

Requests are the flat ExperimentConfig; responses carry a structured summary
plus ready-to-write CSV text so thin clients never re-derive artifacts.
"""

from __future__ import annotations

from typing import Literal

from pydantic import BaseModel


class HealthResponse(BaseModel):
    status: Literal["ok"]
    version: str


class ErrorPayload(BaseModel):
    error_kind: Literal["config", "numerical"]
    message: str


class RunSummary(BaseModel):
    kind: Literal["sample", "baseline"]
    mode: str
    order: int
    interval: int
    n_steps: int
    seed: int
    n_network_evals: int
    n_extrapolations: int
    eval_speedup: float
    projected_speedup: float
    x_final_norm: float
    endpoint_error: float | None = None


class SampleResponse(BaseModel):
    summary: RunSummary
    trajectory_csv: str


class WeightsResponse(BaseModel):
    order: int
    fractions: list[str]
    floats: list[float]
    text: str


class OrderEstimatePayload(BaseModel):
    h_values: list[float]
    errors: list[float]
    pair_orders: list[float]
    mean_order: float
    spread: float


class ConvergenceResponse(BaseModel):
    order: int
    mode: str
    window: list[float]
    synthetic: bool
    estimate: OrderEstimatePayload


class CurveResponse(BaseModel):
    csv: str
    n_rows: int


class BenchRow(BaseModel):
    order: int
    interval: int
    n_steps: int
    n_network_evals: int
    n_extrapolations: int
    eval_speedup: float
    projected_speedup: float
    endpoint_error: float | None = None


class BenchResponse(BaseModel):
    rows: list[BenchRow]
    csv: str
