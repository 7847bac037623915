"""HTTP service endpoints: resolve, solve, job lifecycle, error codes."""

import threading
import time

import pytest
from fastapi.testclient import TestClient

from ebsde import service as service_mod
from ebsde.jobs import run_jobs
from ebsde.service import create_app
from ebsde.wire import BatchResultModel, batch_from_model


TINY = {
    "problem": "poisson", "d": 2, "concurrency": 1, "seed": 9,
    "grid": {"N": 4}, "training": {"epochs": 3, "batch_size": 4,
                                   "validation_size": 4, "runs": 2, "tail": 2},
    "points": {"list": [[0.0, 0.0]]},
}


@pytest.fixture()
def client():
    with TestClient(create_app()) as c:
        yield c


def _poll_done(client, job_id, timeout=30.0):
    t0 = time.time()
    while time.time() - t0 < timeout:
        info = client.get(f"/jobs/{job_id}").json()
        if info["state"] in ("done", "failed"):
            return info
        time.sleep(0.05)
    raise AssertionError("job did not finish in time")


def test_health_reports_version(client):
    body = client.get("/health").json()
    assert body["status"] == "ok"
    from ebsde import __version__
    assert body["version"] == __version__


def test_problems_lists_all_three(client):
    rows = client.get("/problems").json()
    assert [r["name"] for r in rows] == ["poisson", "quadratic", "dividend"]
    poisson = rows[0]
    assert poisson["params"] == {"r": 0.5, "b": 0.75}
    assert poisson["grid_n"] == 500
    dividend = rows[2]
    assert dividend["min_dim"] == 2


def test_resolve_fills_table_defaults(client):
    body = client.post("/configs/resolve", json={"problem": "poisson", "d": 2}).json()
    assert body["grid"]["N"] == 500
    assert body["grid"]["T"] == 0.5
    assert body["training"]["epochs"] == 200
    assert body["training"]["batch_size"] == 64


def test_resolve_rejects_unknown_key(client):
    resp = client.post("/configs/resolve", json={"problem": "poisson", "d": 2,
                                                 "warp": 1})
    assert resp.status_code == 422
    assert "warp" in resp.json()["detail"]


def test_resolve_rejects_wrong_point_length(client):
    resp = client.post("/configs/resolve",
                       json={"problem": "poisson", "d": 2,
                             "points": {"list": [[0.0, 0.0, 0.0]]}})
    assert resp.status_code == 422


def test_solve_sync_returns_batch(client):
    resp = client.post("/solve", json=TINY)
    assert resp.status_code == 200
    model = BatchResultModel(**resp.json())
    result = batch_from_model(model)
    assert result.all_ok
    assert result.results[0].estimate is not None
    # wire round trip preserves the numbers exactly
    direct = run_jobs(TINY)
    assert result.results[0].estimate == direct.results[0].estimate


def test_job_lifecycle(client):
    info = client.post("/jobs", json=TINY).json()
    assert info["state"] in ("queued", "running")
    assert info["n_total"] == 2  # 1 point x 2 runs
    done = _poll_done(client, info["job_id"])
    assert done["state"] == "done"
    assert done["n_done"] == 2
    payload = client.get(f"/jobs/{info['job_id']}/result").json()
    result = batch_from_model(BatchResultModel(**payload))
    assert result.all_ok


def test_job_result_conflict_while_running(client, monkeypatch):
    release = threading.Event()
    real = service_mod.run_jobs

    def slow(cfg, progress=None):
        release.wait(10.0)
        return real(cfg, progress=progress)

    monkeypatch.setattr(service_mod, "run_jobs", slow)
    info = client.post("/jobs", json=TINY).json()
    resp = client.get(f"/jobs/{info['job_id']}/result")
    assert resp.status_code == 409
    release.set()
    _poll_done(client, info["job_id"])
    assert client.get(f"/jobs/{info['job_id']}/result").status_code == 200


def test_job_failure_surfaces_500(client, monkeypatch):
    def broken(cfg, progress=None):
        raise RuntimeError("synthetic crash")

    monkeypatch.setattr(service_mod, "run_jobs", broken)
    info = client.post("/jobs", json=TINY).json()
    done = _poll_done(client, info["job_id"])
    assert done["state"] == "failed"
    assert "synthetic crash" in done["error"]
    resp = client.get(f"/jobs/{info['job_id']}/result")
    assert resp.status_code == 500


def test_unknown_job_404(client):
    assert client.get("/jobs/deadbeef").status_code == 404
    assert client.get("/jobs/deadbeef/result").status_code == 404


def test_invalid_job_config_rejected_up_front(client):
    resp = client.post("/jobs", json={"problem": "poisson", "d": 0})
    assert resp.status_code == 422
