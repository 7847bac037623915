"""Local and remote execution behind one interface.

The command-line front end is a thin client: it resolves a config, hands
it to one of these runners, and writes CSVs from the returned BatchResult.
LocalRunner calls the library in-process; RemoteRunner talks to a service
over HTTP and reconstructs the identical BatchResult from the wire form,
so outputs match byte for byte either way.
"""

from __future__ import annotations

import time

import httpx

from .config import RunConfig, resolve_config
from .jobs import BatchResult, run_jobs
from .wire import BatchResultModel, batch_from_model

__all__ = ["LocalRunner", "RemoteRunner", "RemoteError"]


class RemoteError(RuntimeError):
    """The service rejected a request or a job failed server-side."""


class LocalRunner:
    def resolve(self, data) -> RunConfig:
        return resolve_config(data)

    def solve(self, cfg, progress=None) -> BatchResult:
        return run_jobs(cfg, progress=progress)


class RemoteRunner:
    def __init__(self, base_url: str, poll_interval: float = 0.5, timeout: float = 30.0):
        self.base_url = base_url.rstrip("/")
        self.poll_interval = poll_interval
        self.client = httpx.Client(base_url=self.base_url, timeout=timeout)

    def _request(self, method: str, url: str, **kw) -> dict:
        try:
            resp = self.client.request(method, url, **kw)
        except httpx.HTTPError as exc:
            raise RemoteError(f"cannot reach service at {self.base_url}: {exc}") from exc
        if resp.status_code >= 400:
            try:
                detail = resp.json().get("detail", resp.text)
            except Exception:
                detail = resp.text
            raise RemoteError(f"{resp.status_code}: {detail}")
        return resp.json()

    def resolve(self, data) -> RunConfig:
        if isinstance(data, RunConfig):
            data = data.model_dump(by_alias=True)
        return RunConfig(**self._request("POST", "/configs/resolve", json=data))

    def problems(self) -> list:
        return self._request("GET", "/problems")

    def solve(self, cfg, progress=None) -> BatchResult:
        if isinstance(cfg, RunConfig):
            cfg = cfg.model_dump(by_alias=True)
        info = self._request("POST", "/jobs", json=cfg)
        job_id = info["job_id"]
        while True:
            info = self._request("GET", f"/jobs/{job_id}")
            if progress:
                progress(info.get("n_done", 0), info.get("n_total", 0))
            if info["state"] == "done":
                break
            if info["state"] == "failed":
                raise RemoteError(info.get("error") or "job failed")
            time.sleep(self.poll_interval)
        payload = self._request("GET", f"/jobs/{job_id}/result")
        return batch_from_model(BatchResultModel(**payload))
