"""Request and response schemas for the HTTP service."""

from __future__ import annotations

from typing import List, Optional

from pydantic import BaseModel, Field


class SolveRequest(BaseModel):
    scenario: str  # scenario document text
    allocator: Optional[str] = None
    budget_slots: Optional[int] = Field(default=None, ge=0)
    epsilon: Optional[float] = Field(default=None, gt=0, lt=1)


class PlanEntryOut(BaseModel):
    tile: int
    level: int
    rate_mbps: float
    slots: int
    target_user: Optional[int] = None


class SolveResponse(BaseModel):
    feasible: bool
    objective: Optional[float] = None
    objective_exact: Optional[str] = None  # rational p/q form
    total_slots: int = 0
    per_user_utility: dict = {}
    plan: List[PlanEntryOut] = []


class SimulateRequest(BaseModel):
    scenario: str
    trace: Optional[str] = None  # trace document text
    allocator: Optional[str] = None
    seed: Optional[int] = None
    epochs: Optional[int] = Field(default=None, ge=1)
    budget_slots: Optional[int] = Field(default=None, ge=0)
    epsilon: Optional[float] = Field(default=None, gt=0, lt=1)


class SimulateResponse(BaseModel):
    rows: List[dict]
    csv: str
    degraded_epochs: int


class CompareRequest(BaseModel):
    scenario: str
    trace: Optional[str] = None
    seeds: List[int] = [0]
    allocators: Optional[List[str]] = None
    budget_slots: Optional[int] = Field(default=None, ge=0)
    epsilon: Optional[float] = Field(default=None, gt=0, lt=1)


class CompareSummary(BaseModel):
    allocator: str
    mean_realized_utility: float
    mean_goodput: float
    mean_fairness: float
    infeasible_runs: int


class CompareResponse(BaseModel):
    rows: List[dict]
    csv: str
    summary: List[CompareSummary]


class GenTraceRequest(BaseModel):
    cols: int = Field(ge=1)
    rows: int = Field(ge=1)
    n_users: int = Field(ge=1)
    similarity: float = Field(ge=0, le=1)
    duration: float = Field(default=10.0, gt=0)
    seed: int = 0
    roi_tiles: int = Field(default=12, ge=1)


class GenTraceResponse(BaseModel):
    trace: str
    measured_similarity: float


class BenchRequest(BaseModel):
    budgets: List[int] = [500, 1000, 2000, 4000]
    include_naive: bool = True
    repeats: int = Field(default=1, ge=1)


class BenchResponse(BaseModel):
    rows: List[dict]


class ErrorBody(BaseModel):
    code: str  # "parse" | "infeasible" | "internal"
    message: str
