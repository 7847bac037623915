"""Batch execution of point estimates over a process pool.

Work is split at (point, run) granularity: with R restarts per point a
15-point batch yields 75 independent tasks, enough to keep any sensible
pool width busy.  Every task's seed derives from (master seed, point
index, run index) alone, and completed tasks are re-sorted before
aggregation, so results are identical at any concurrency width; the
sequential estimate_point path produces the same numbers.
"""

from __future__ import annotations

import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, List, Optional

import numpy as np

from . import rng, solver
from .config import (RunConfig, problem_from_config, resolve_config, resolve_points,
                     train_config_from)

__all__ = ["RunTrace", "PointResult", "BatchResult", "run_jobs", "point_seed"]


@dataclass
class RunTrace:
    """Slim, picklable record of one training run."""

    run_index: int
    status: str
    seed: int
    seconds: float
    u0_final: float
    u0_history: np.ndarray
    train_loss: np.ndarray
    val_loss: np.ndarray
    failure: Optional[str] = None

    def tail_estimate(self, tail: int) -> float:
        if self.u0_history.size == 0:
            return self.u0_final
        return float(np.mean(self.u0_history[-tail:]))


@dataclass
class PointResult:
    index: int
    point: np.ndarray
    coord: float
    estimate: float
    reference: Optional[float]
    seconds: float
    seed: int
    status: str
    n_failed: int
    runs: List[RunTrace] = field(default_factory=list)

    @property
    def abs_error(self) -> Optional[float]:
        if self.reference is None or not np.isfinite(self.estimate):
            return None
        return abs(self.estimate - self.reference)


@dataclass
class BatchResult:
    config: RunConfig
    results: List[PointResult]
    total_seconds: float

    @property
    def all_ok(self) -> bool:
        return all(p.status in ("ok", "boundary") for p in self.results)


def point_seed(master_seed: int, point_index: int) -> int:
    return rng.derive_seed(master_seed, point_index)


def _trace_from_run(r_idx: int, rr: solver.RunResult) -> RunTrace:
    return RunTrace(run_index=r_idx, status=rr.status, seed=rr.seed,
                    seconds=rr.seconds, u0_final=rr.u0_final,
                    u0_history=rr.u0_history, train_loss=rr.train_loss,
                    val_loss=rr.val_loss, failure=rr.failure)


def _run_task(payload):
    """One (point, run) unit; module-level so it pickles for the pool."""
    cfg_data, p_idx, r_idx = payload
    cfg = resolve_config(cfg_data)
    problem = problem_from_config(cfg)
    points, _ = resolve_points(cfg)
    tcfg = train_config_from(cfg)
    run_seed = rng.derive_seed(point_seed(cfg.seed, p_idx), r_idx)
    try:
        rr = solver.train_single_run(problem, points[p_idx], tcfg, run_seed)
        return p_idx, r_idx, _trace_from_run(r_idx, rr)
    except Exception as exc:  # surfaced per-run, batch continues
        trace = RunTrace(run_index=r_idx, status="failed", seed=run_seed,
                         seconds=0.0, u0_final=float("nan"),
                         u0_history=np.empty(0), train_loss=np.empty(0),
                         val_loss=np.empty(0), failure=f"{type(exc).__name__}: {exc}")
        return p_idx, r_idx, trace


def _aggregate_point(p_idx, point, coord, reference, seed, traces, tail) -> PointResult:
    traces = sorted(traces, key=lambda t: t.run_index)
    seconds = float(sum(t.seconds for t in traces))
    if traces and all(t.status == "boundary" for t in traces):
        return PointResult(index=p_idx, point=point, coord=coord,
                           estimate=traces[0].u0_final, reference=reference,
                           seconds=seconds, seed=seed, status="boundary",
                           n_failed=0, runs=traces)
    ok = [t for t in traces if t.status == "ok"]
    n_failed = sum(1 for t in traces if t.status == "failed")
    if not ok:
        return PointResult(index=p_idx, point=point, coord=coord,
                           estimate=float("nan"), reference=reference,
                           seconds=seconds, seed=seed, status="failed",
                           n_failed=n_failed, runs=traces)
    estimate = float(np.mean([t.tail_estimate(tail) for t in ok]))
    return PointResult(index=p_idx, point=point, coord=coord, estimate=estimate,
                       reference=reference, seconds=seconds, seed=seed,
                       status="ok", n_failed=n_failed, runs=traces)


def run_jobs(cfg, progress: Optional[Callable[[int, int], None]] = None) -> BatchResult:
    """Estimate u at every configured point; never raises on job failures.

    cfg may be a raw mapping or a RunConfig; it is resolved either way.
    """
    t0 = time.perf_counter()
    cfg = resolve_config(cfg)
    problem = problem_from_config(cfg)
    points, coords = resolve_points(cfg)
    tcfg = train_config_from(cfg)
    P = len(points)
    R = tcfg.runs
    cfg_data = cfg.model_dump(by_alias=True)
    tasks = [(cfg_data, p, r) for p in range(P) for r in range(R)]

    done: dict = {}
    n_total = len(tasks)
    if cfg.concurrency <= 1 or n_total <= 1:
        for i, t in enumerate(tasks):
            p, r, trace = _run_task(t)
            done[(p, r)] = trace
            if progress:
                progress(i + 1, n_total)
    else:
        with ProcessPoolExecutor(max_workers=min(cfg.concurrency, n_total)) as pool:
            futures = [pool.submit(_run_task, t) for t in tasks]
            for i, fut in enumerate(futures):
                p, r, trace = fut.result()
                done[(p, r)] = trace
                if progress:
                    progress(i + 1, n_total)

    ref_fn = problem.reference
    results = []
    for p in range(P):
        reference = float(ref_fn(points[p][None, :])[0]) if ref_fn is not None else None
        traces = [done[(p, r)] for r in range(R)]
        results.append(_aggregate_point(p, points[p], float(coords[p]), reference,
                                        point_seed(cfg.seed, p), traces, tcfg.tail))
    return BatchResult(config=cfg, results=results,
                       total_seconds=time.perf_counter() - t0)
