"""HTTP service wrapping the solver.

Endpoints:
- GET  /health                  liveness + version
- GET  /problems                built-in problems and their table defaults
- POST /configs/resolve         fill defaults / validate a config
- POST /solve                   run a batch synchronously, return the result
- POST /jobs                    start a batch in the background -> job_id
- GET  /jobs/{job_id}           poll job state and progress
- GET  /jobs/{job_id}/result    fetch the finished batch

Jobs run in daemon threads (the per-point work still fans out over the
process pool configured in the request); the store keeps finished results
in memory.  File outputs are the client's business: the service returns
data, the command-line front end writes CSVs.
"""

from __future__ import annotations

import threading
import uuid
from typing import Optional

from fastapi import FastAPI, HTTPException

from . import __version__
from .config import (ConfigError, RunConfig, _GRID_DEFAULTS, _PARAM_DEFAULTS,
                     resolve_config, train_defaults)
from .jobs import run_jobs
from .wire import BatchResultModel, JobInfo, ProblemInfo, batch_to_model

__all__ = ["create_app", "app"]


class _Job:
    def __init__(self, job_id: str, n_total: int):
        self.info = JobInfo(job_id=job_id, state="queued", n_total=n_total)
        self.result: Optional[BatchResultModel] = None


class JobStore:
    def __init__(self):
        self._jobs: dict = {}
        self._lock = threading.Lock()

    def create(self, cfg: RunConfig) -> JobInfo:
        from .config import resolve_points, train_config_from
        points, _ = resolve_points(cfg)
        n_total = len(points) * train_config_from(cfg).runs
        job = _Job(uuid.uuid4().hex, n_total)
        with self._lock:
            self._jobs[job.info.job_id] = job

        def progress(done, total):
            job.info.n_done = done
            job.info.n_total = total

        def work():
            job.info.state = "running"
            try:
                result = run_jobs(cfg, progress=progress)
                job.result = batch_to_model(result)
                job.info.state = "done"
            except Exception as exc:
                job.info.state = "failed"
                job.info.error = f"{type(exc).__name__}: {exc}"

        threading.Thread(target=work, daemon=True).start()
        return job.info

    def get(self, job_id: str) -> _Job:
        with self._lock:
            job = self._jobs.get(job_id)
        if job is None:
            raise HTTPException(status_code=404, detail=f"no such job {job_id}")
        return job


def create_app() -> FastAPI:
    app = FastAPI(title="ebsde", version=__version__)
    store = JobStore()

    def _resolved(body) -> RunConfig:
        try:
            return resolve_config(body)
        except ConfigError as exc:
            raise HTTPException(status_code=422, detail=str(exc))

    @app.get("/health")
    def health():
        return {"status": "ok", "version": __version__}

    @app.get("/problems", response_model=list[ProblemInfo])
    def problems():
        return [
            ProblemInfo(name=name, min_dim=2 if name == "dividend" else 1,
                        params=_PARAM_DEFAULTS[name], grid_n=_GRID_DEFAULTS[name],
                        epochs=train_defaults(name, 2)["epochs"])
            for name in ("poisson", "quadratic", "dividend")
        ]

    @app.post("/configs/resolve", response_model=RunConfig)
    def configs_resolve(body: dict):
        return _resolved(body)

    @app.post("/solve", response_model=BatchResultModel)
    def solve(body: dict):
        cfg = _resolved(body)
        return batch_to_model(run_jobs(cfg))

    @app.post("/jobs", response_model=JobInfo)
    def submit(body: dict):
        return store.create(_resolved(body))

    @app.get("/jobs/{job_id}", response_model=JobInfo)
    def job_status(job_id: str):
        return store.get(job_id).info

    @app.get("/jobs/{job_id}/result", response_model=BatchResultModel)
    def job_result(job_id: str):
        job = store.get(job_id)
        if job.info.state == "failed":
            raise HTTPException(status_code=500, detail=job.info.error or "job failed")
        if job.info.state != "done" or job.result is None:
            raise HTTPException(status_code=409, detail=f"job is {job.info.state}")
        return job.result

    return app


app = create_app()
