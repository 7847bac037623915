"""JSON-safe request/response models and converters.

The service and the remote client exchange BatchResults through these
models.  Floats survive the JSON round trip exactly (shortest-repr
serialization), except NaN estimates of failed points, which travel as
null; the converters map between the two representations.
"""

from __future__ import annotations

import math
from typing import List, Optional

import numpy as np
from pydantic import BaseModel, ConfigDict

from .config import RunConfig
from .jobs import BatchResult, PointResult, RunTrace

__all__ = [
    "RunTraceModel",
    "PointResultModel",
    "BatchResultModel",
    "JobInfo",
    "ProblemInfo",
    "batch_to_model",
    "batch_from_model",
]


class RunTraceModel(BaseModel):
    model_config = ConfigDict(extra="forbid")
    run_index: int
    status: str
    seed: int
    seconds: float
    u0_final: Optional[float]
    u0_history: List[float]
    train_loss: List[float]
    val_loss: List[float]
    failure: Optional[str] = None


class PointResultModel(BaseModel):
    model_config = ConfigDict(extra="forbid")
    index: int
    point: List[float]
    coord: float
    estimate: Optional[float]
    reference: Optional[float]
    seconds: float
    seed: int
    status: str
    n_failed: int
    runs: List[RunTraceModel]


class BatchResultModel(BaseModel):
    model_config = ConfigDict(extra="forbid")
    config: RunConfig
    results: List[PointResultModel]
    total_seconds: float


class JobInfo(BaseModel):
    model_config = ConfigDict(extra="forbid")
    job_id: str
    state: str  # queued | running | done | failed
    n_done: int = 0
    n_total: int = 0
    error: Optional[str] = None


class ProblemInfo(BaseModel):
    model_config = ConfigDict(extra="forbid")
    name: str
    min_dim: int
    params: dict
    grid_n: int
    epochs: int


def _none_if_nan(v: float) -> Optional[float]:
    return None if (v is None or math.isnan(v)) else float(v)


def _nan_if_none(v: Optional[float]) -> float:
    return float("nan") if v is None else float(v)


def batch_to_model(result: BatchResult) -> BatchResultModel:
    return BatchResultModel(
        config=result.config,
        total_seconds=result.total_seconds,
        results=[
            PointResultModel(
                index=p.index, point=[float(c) for c in p.point], coord=p.coord,
                estimate=_none_if_nan(p.estimate), reference=p.reference,
                seconds=p.seconds, seed=p.seed, status=p.status,
                n_failed=p.n_failed,
                runs=[
                    RunTraceModel(
                        run_index=t.run_index, status=t.status, seed=t.seed,
                        seconds=t.seconds, u0_final=_none_if_nan(t.u0_final),
                        u0_history=[float(v) for v in t.u0_history],
                        train_loss=[float(v) for v in t.train_loss],
                        val_loss=[float(v) for v in t.val_loss],
                        failure=t.failure,
                    )
                    for t in p.runs
                ],
            )
            for p in result.results
        ],
    )


def batch_from_model(model: BatchResultModel) -> BatchResult:
    return BatchResult(
        config=model.config,
        total_seconds=model.total_seconds,
        results=[
            PointResult(
                index=p.index, point=np.asarray(p.point, dtype=np.float64),
                coord=p.coord, estimate=_nan_if_none(p.estimate),
                reference=p.reference, seconds=p.seconds, seed=p.seed,
                status=p.status, n_failed=p.n_failed,
                runs=[
                    RunTrace(
                        run_index=t.run_index, status=t.status, seed=t.seed,
                        seconds=t.seconds, u0_final=_nan_if_none(t.u0_final),
                        u0_history=np.asarray(t.u0_history, dtype=np.float64),
                        train_loss=np.asarray(t.train_loss, dtype=np.float64),
                        val_loss=np.asarray(t.val_loss, dtype=np.float64),
                        failure=t.failure,
                    )
                    for t in p.runs
                ],
            )
            for p in model.results
        ],
    )
