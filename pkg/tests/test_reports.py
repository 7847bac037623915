"""CSV emission: schemas, float round-trips, deterministic byte stability."""

import os

import numpy as np
import pytest

from ebsde.config import parse_config, resolve_config
from ebsde.jobs import BatchResult, PointResult, RunTrace, run_jobs
from ebsde.reports import format_float, summary_lines, write_outputs


def _trace(run_index, seed, u0s, status="ok"):
    u0s = np.asarray(u0s, dtype=np.float64)
    return RunTrace(run_index=run_index, status=status, seed=seed, seconds=0.37,
                    u0_final=float(u0s[-1]) if u0s.size else float("nan"),
                    u0_history=u0s, train_loss=u0s * 0 + 0.5, val_loss=u0s * 0 + 0.25)


def _tiny_batch_result(deterministic=True):
    cfg = resolve_config({
        "problem": "poisson", "d": 2, "deterministic": deterministic,
        "grid": {"N": 3}, "training": {"epochs": 2, "batch_size": 4,
                                       "validation_size": 4, "runs": 1, "tail": 2},
        "points": {"list": [[0.0, 0.0], [0.1, 0.2]]},
    })
    pts = [
        PointResult(index=0, point=np.array([0.0, 0.0]), coord=0.0,
                    estimate=0.046, reference=0.046875, seconds=1.25, seed=11,
                    status="ok", n_failed=0, runs=[_trace(0, 101, [0.04, 0.046])]),
        PointResult(index=1, point=np.array([0.1, 0.2]), coord=0.1,
                    estimate=float("nan"), reference=0.0375, seconds=0.5, seed=12,
                    status="failed", n_failed=1,
                    runs=[_trace(0, 102, [], status="failed")]),
    ]
    return BatchResult(config=cfg, results=pts, total_seconds=1.75)


class TestFormatFloat:
    def test_round_trip_exact(self):
        for v in (0.1, -3.25, 1e-17, 0.046875, np.float64(2) / 3):
            assert float(format_float(v)) == float(v)

    def test_none_and_nan_empty(self):
        assert format_float(None) == ""
        assert format_float(float("nan")) == ""
        assert format_float(float("inf")) == ""

    def test_integral_floats_keep_point(self):
        # repr of a float never collides with an int token
        assert format_float(2.0) == "2.0"


class TestSummary:
    def test_header_and_columns(self):
        lines = list(summary_lines(_tiny_batch_result(), deterministic=False))
        assert lines[0] == "point_index,point,estimate,reference,abs_error,seconds,seed,status"
        row = lines[1].split(",")
        assert row[0] == "0"
        assert row[1] == "0.0;0.0"
        assert float(row[2]) == 0.046
        assert float(row[3]) == 0.046875
        assert row[7] == "ok"

    def test_abs_error_recomputable(self):
        for line in list(summary_lines(_tiny_batch_result(), False))[1:]:
            cols = line.split(",")
            if cols[2] and cols[3]:
                assert float(cols[4]) == pytest.approx(
                    abs(float(cols[2]) - float(cols[3])), abs=0.0)

    def test_failed_point_has_empty_estimate(self):
        lines = list(summary_lines(_tiny_batch_result(), False))
        cols = lines[2].split(",")
        assert cols[2] == ""
        assert cols[4] == ""
        assert cols[7] == "failed"

    def test_deterministic_zeroes_seconds(self):
        lines = list(summary_lines(_tiny_batch_result(), deterministic=True))
        assert all(line.split(",")[5] == "0.0" for line in lines[1:])
        lines = list(summary_lines(_tiny_batch_result(), deterministic=False))
        assert float(lines[1].split(",")[5]) == 1.25


class TestWriteOutputs:
    def test_file_set_deterministic(self, tmp_path):
        out = tmp_path / "res"
        write_outputs(_tiny_batch_result(deterministic=True), str(out))
        names = sorted(os.listdir(out))
        assert names == ["plot_loss_point00.csv", "plot_loss_point01.csv",
                         "plot_solution.csv", "resolved.yaml", "summary.csv",
                         "timings.txt", "trace_point00.csv", "trace_point01.csv"]

    def test_no_timings_file_outside_deterministic(self, tmp_path):
        write_outputs(_tiny_batch_result(deterministic=False), str(tmp_path))
        assert not (tmp_path / "timings.txt").exists()
        text = (tmp_path / "summary.csv").read_text()
        assert "1.25" in text

    def test_trace_rows_are_epoch_major(self, tmp_path):
        write_outputs(_tiny_batch_result(), str(tmp_path))
        rows = (tmp_path / "trace_point00.csv").read_text().strip().splitlines()
        assert rows[0] == "epoch,run,train_loss,val_loss,u0"
        assert len(rows) == 3  # 2 epochs, 1 run
        assert rows[1].split(",")[0] == "0"
        assert float(rows[2].split(",")[4]) == 0.046

    def test_plot_solution_has_reference_column(self, tmp_path):
        write_outputs(_tiny_batch_result(), str(tmp_path))
        rows = (tmp_path / "plot_solution.csv").read_text().strip().splitlines()
        assert rows[0] == "coord,estimate,reference"
        assert len(rows) == 3
        # failed point: empty estimate cell, reference still present
        assert rows[2].split(",")[1] == ""
        assert float(rows[2].split(",")[2]) == 0.0375

    def test_resolved_yaml_parses_back(self, tmp_path):
        result = _tiny_batch_result()
        write_outputs(result, str(tmp_path))
        text = (tmp_path / "resolved.yaml").read_text()
        assert resolve_config(parse_config(text)) == result.config

    def test_identical_results_identical_bytes(self, tmp_path):
        a, b = tmp_path / "a", tmp_path / "b"
        write_outputs(_tiny_batch_result(), str(a))
        write_outputs(_tiny_batch_result(), str(b))
        for name in os.listdir(a):
            assert (a / name).read_bytes() == (b / name).read_bytes()


class TestEndToEnd:
    def test_real_run_files_consistent(self, tmp_path):
        cfg = resolve_config({
            "problem": "poisson", "d": 2, "concurrency": 1, "seed": 5,
            "grid": {"N": 4}, "training": {"epochs": 3, "batch_size": 4,
                                           "validation_size": 4, "runs": 2, "tail": 2},
            "points": {"list": [[0.0, 0.0]]},
        })
        result = run_jobs(cfg)
        write_outputs(result, str(tmp_path))
        summary = (tmp_path / "summary.csv").read_text().strip().splitlines()
        assert len(summary) == 2
        cols = summary[1].split(",")
        assert cols[7] == "ok"
        assert float(cols[2]) == pytest.approx(result.results[0].estimate)
        trace = (tmp_path / "trace_point00.csv").read_text().strip().splitlines()
        assert len(trace) == 1 + 3 * 2  # header + epochs * runs
        loss_rows = (tmp_path / "plot_loss_point00.csv").read_text().strip().splitlines()
        assert len(loss_rows) == 1 + 3
