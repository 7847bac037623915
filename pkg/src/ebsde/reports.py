"""CSV emission for batch results.

All floats are written with repr (shortest round-trip form), and row order
is fixed by point/run/epoch indices, so identical results give
byte-identical files.  In deterministic mode the summary's seconds column
is zeroed (wall time is not reproducible) and the measured times go to
timings.txt instead.

Files written into the output directory:
- summary.csv:        point_index,point,estimate,reference,abs_error,seconds,seed,status
                      (point is the coordinate vector joined with ';';
                      empty estimate/reference/abs_error mean unavailable)
- trace_point{p}.csv: epoch,run,train_loss,val_loss,u0 for every run of point p
- plot_solution.csv:  coord,estimate,reference (the solution profile)
- plot_loss_point{p}.csv: epoch,val_loss (validation loss averaged over
                      successful runs; rows = epochs)
- resolved.yaml:      the fully resolved config that produced the batch
- timings.txt:        per-point and total wall seconds (deterministic mode)
"""

from __future__ import annotations

import os

import numpy as np

from .config import emit_config
from .jobs import BatchResult

__all__ = ["write_outputs", "format_float", "summary_lines"]


def format_float(v) -> str:
    """Shortest exact decimal form; empty string for None/NaN."""
    if v is None:
        return ""
    v = float(v)
    if not np.isfinite(v):
        return ""
    return repr(v)


def _point_label(point) -> str:
    return ";".join(format_float(c) for c in point)


def summary_lines(result: BatchResult, deterministic: bool):
    yield "point_index,point,estimate,reference,abs_error,seconds,seed,status"
    for p in result.results:
        secs = 0.0 if deterministic else p.seconds
        yield ",".join([
            str(p.index),
            _point_label(p.point),
            format_float(p.estimate),
            format_float(p.reference),
            format_float(p.abs_error),
            format_float(secs),
            str(p.seed),
            p.status,
        ])


def write_outputs(result: BatchResult, out_dir: str) -> None:
    os.makedirs(out_dir, exist_ok=True)
    deterministic = result.config.deterministic

    with open(os.path.join(out_dir, "summary.csv"), "w") as fh:
        for line in summary_lines(result, deterministic):
            fh.write(line + "\n")

    for p in result.results:
        with open(os.path.join(out_dir, f"trace_point{p.index:02d}.csv"), "w") as fh:
            fh.write("epoch,run,train_loss,val_loss,u0\n")
            for tr in p.runs:
                for e in range(len(tr.u0_history)):
                    fh.write(f"{e},{tr.run_index},{format_float(tr.train_loss[e])},"
                             f"{format_float(tr.val_loss[e])},{format_float(tr.u0_history[e])}\n")

    with open(os.path.join(out_dir, "plot_solution.csv"), "w") as fh:
        fh.write("coord,estimate,reference\n")
        for p in result.results:
            fh.write(f"{format_float(p.coord)},{format_float(p.estimate)},"
                     f"{format_float(p.reference)}\n")

    for p in result.results:
        ok = [tr for tr in p.runs if tr.status == "ok" and tr.val_loss.size]
        with open(os.path.join(out_dir, f"plot_loss_point{p.index:02d}.csv"), "w") as fh:
            fh.write("epoch,val_loss\n")
            if ok:
                mean_loss = np.mean([tr.val_loss for tr in ok], axis=0)
                for e, v in enumerate(mean_loss):
                    fh.write(f"{e},{format_float(v)}\n")

    with open(os.path.join(out_dir, "resolved.yaml"), "w") as fh:
        fh.write(emit_config(result.config))

    if deterministic:
        with open(os.path.join(out_dir, "timings.txt"), "w") as fh:
            for p in result.results:
                fh.write(f"point {p.index}: {p.seconds:.3f} s\n")
            fh.write(f"total: {result.total_seconds:.3f} s\n")
