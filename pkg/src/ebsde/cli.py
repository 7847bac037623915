"""Command-line front end.

`ebsde run` executes a batch of point estimates from a YAML config and/or
flag overrides and writes CSV outputs; `ebsde solve` is the single-point
convenience; `ebsde serve` starts the HTTP service; with --server URL the
run and solve commands become thin HTTP clients of such a service and
produce byte-identical output files.

Point set specs for --points:
    diag:15            15 diagonal points on the default range
    diag:15:-0.3:0.3   explicit diagonal coordinate range
    surplus:15         sweep the last coordinate (dividend problem)
    surplus:15:0.2:4.8 explicit surplus range
    0,0;0.3,0.1        explicit points (';' between points, ',' between
                       coordinates)
"""

from __future__ import annotations

import sys

import click
import yaml

from . import __version__
from .client import LocalRunner, RemoteError, RemoteRunner
from .config import (ConfigError, emit_config, parse_config_file, resolve_config,
                     _PARAM_DEFAULTS, _PARAM_FIELDS)
from .reports import format_float, write_outputs

__all__ = ["main"]


def _parse_points_spec(spec: str) -> dict:
    spec = spec.strip()
    if spec.startswith(("diag:", "surplus:")):
        kind, rest = spec.split(":", 1)
        parts = rest.split(":")
        out = {"count": int(parts[0])}
        if len(parts) == 3:
            out["low"] = float(parts[1])
            out["high"] = float(parts[2])
        elif len(parts) != 1:
            raise ConfigError(f"bad points spec {spec!r}: expected KIND:COUNT[:LOW:HIGH]")
        return {"diagonal" if kind == "diag" else "surplus": out}
    points = []
    for chunk in spec.split(";"):
        chunk = chunk.strip()
        if chunk:
            points.append([float(tok) for tok in chunk.split(",")])
    if not points:
        raise ConfigError(f"bad points spec {spec!r}")
    return {"list": points}


def _deep_set(data: dict, path: tuple, value) -> None:
    node = data
    for key in path[:-1]:
        node = node.setdefault(key, {})
    node[path[-1]] = value


def _build_config(config, problem, dim, points, seed, out, concurrency,
                  deterministic, fixed_paths, shared_subnet, epochs, batch_size,
                  validation_size, runs, tail, lr, lr_final, decay_start,
                  hidden_widths, grid_t, grid_n, gamma, param) -> dict:
    data = {}
    if config:
        with open(config) as fh:
            data = yaml.safe_load(fh.read()) or {}
        if not isinstance(data, dict):
            raise ConfigError("config root must be a mapping")
    overrides = [
        (("problem",), problem), (("d",), dim), (("seed",), seed),
        (("out",), out), (("concurrency",), concurrency),
        (("deterministic",), deterministic),
        (("training", "fixed_paths"), fixed_paths),
        (("training", "shared_subnet"), shared_subnet),
        (("training", "epochs"), epochs),
        (("training", "batch_size"), batch_size),
        (("training", "validation_size"), validation_size),
        (("training", "runs"), runs), (("training", "tail"), tail),
        (("training", "lr"), lr), (("training", "lr_final"), lr_final),
        (("training", "decay_start"), decay_start),
        (("grid", "T"), grid_t), (("grid", "N"), grid_n),
        (("grid", "gamma"), gamma),
    ]
    for path, value in overrides:
        if value is not None:
            _deep_set(data, path, value)
    if hidden_widths is not None:
        _deep_set(data, ("training", "hidden_widths"),
                  [int(t) for t in hidden_widths.split(",") if t.strip()])
    if points is not None:
        data["points"] = _parse_points_spec(points)
    for kv in param or ():
        if "=" not in kv:
            raise ConfigError(f"--param expects KEY=VALUE, got {kv!r}")
        key, raw = kv.split("=", 1)
        _deep_set(data, ("params", key.strip()), yaml.safe_load(raw))
    return data


def _runner(server):
    return RemoteRunner(server) if server else LocalRunner()


def _echo_summary(result):
    click.echo(f"{'idx':>3}  {'coord':>12}  {'estimate':>14}  {'reference':>14}  "
               f"{'abs_error':>12}  {'status':>8}")
    for p in result.results:
        ref = format_float(p.reference) or "-"
        err = format_float(p.abs_error) or "-"
        est = format_float(p.estimate) or "-"
        click.echo(f"{p.index:>3}  {p.coord:>12.6g}  {est:>14.14s}  {ref:>14.14s}  "
                   f"{err:>12.12s}  {p.status:>8}")
    click.echo(f"total wall time: {result.total_seconds:.1f} s")


_shared_options = [
    click.option("--config", type=click.Path(exists=True, dir_okay=False),
                 help="YAML run config; flags override its fields."),
    click.option("--problem", type=click.Choice(["poisson", "quadratic", "dividend"])),
    click.option("--dim", type=int, help="State dimension d."),
    click.option("--seed", type=int, help="Master seed."),
    click.option("--server", type=str, default=None,
                 help="Run against an ebsde service at this base URL."),
    click.option("--concurrency", type=int, help="Max jobs in flight (default 8)."),
    click.option("--deterministic/--no-deterministic", default=None,
                 help="Deterministic outputs (zeroed timing column)."),
    click.option("--fixed-paths/--no-fixed-paths", default=None,
                 help="Reuse one fixed path batch every epoch instead of resampling."),
    click.option("--shared-subnet/--no-shared-subnet", default=None,
                 help="One gradient network shared across interior time steps."),
    click.option("--epochs", type=int),
    click.option("--batch-size", type=int),
    click.option("--validation-size", type=int),
    click.option("--runs", type=int, help="Independent restarts per point."),
    click.option("--tail", type=int, help="Final epochs averaged into the estimate."),
    click.option("--lr", type=float),
    click.option("--lr-final", type=float,
                 help="Decay target learning rate; <= 0 disables decay."),
    click.option("--decay-start", type=float,
                 help="Fraction of epochs after which lr decay starts."),
    click.option("--hidden-widths", type=str, help="Comma-separated, e.g. '110,110'."),
    click.option("--grid-t", type=float, help="Horizon T."),
    click.option("--grid-n", type=int, help="Number of time steps N."),
    click.option("--gamma", type=float, help="Grid stretch exponent (1 = equidistant)."),
    click.option("--param", multiple=True,
                 help="Problem parameter override KEY=VALUE (repeatable)."),
]


def _add_options(opts):
    def wrap(fn):
        for opt in reversed(opts):
            fn = opt(fn)
        return fn
    return wrap


@click.group()
@click.version_option(version=__version__)
def main():
    """Pointwise deep-BSDE solver for elliptic boundary-value problems."""


@main.command()
@_add_options(_shared_options)
@click.option("--points", type=str, help="Point set spec (see module help).")
@click.option("--out", type=click.Path(file_okay=False), default=None,
              help="Output directory for CSVs (default 'results').")
@click.option("--quiet", is_flag=True, default=False)
def run(config, points, out, quiet, server, param, **flags):
    """Estimate u at every configured point and write CSV outputs."""
    try:
        data = _build_config(config=config, points=points, out=out, param=param, **flags)
        runner = _runner(server)
        cfg = runner.resolve(data)
        result = runner.solve(cfg)
    except (ConfigError, RemoteError) as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(2)
    out_dir = cfg.out or "results"
    write_outputs(result, out_dir)
    if not quiet:
        _echo_summary(result)
        click.echo(f"outputs written to {out_dir}/")
    sys.exit(0 if result.all_ok else 1)


@main.command()
@_add_options(_shared_options)
@click.option("--point", type=str, required=True,
              help="Comma-separated coordinates of one evaluation point.")
def solve(config, point, server, param, **flags):
    """Estimate u at a single point and print it."""
    try:
        data = _build_config(config=config, points=None, out=None, param=param, **flags)
        data["points"] = {"list": [[float(t) for t in point.split(",")]]}
        runner = _runner(server)
        cfg = runner.resolve(data)
        result = runner.solve(cfg)
    except (ConfigError, RemoteError) as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(2)
    p = result.results[0]
    click.echo(f"estimate  = {format_float(p.estimate) or 'nan'}")
    if p.reference is not None:
        click.echo(f"reference = {format_float(p.reference)}")
        click.echo(f"abs_error = {format_float(p.abs_error)}")
    click.echo(f"status    = {p.status} ({len(p.runs)} runs, {p.n_failed} failed, "
               f"{p.seconds:.1f} s)")
    sys.exit(0 if p.status in ("ok", "boundary") else 1)


@main.command()
@click.option("--server", type=str, default=None)
def problems(server):
    """List built-in problems and their default parameters."""
    if server:
        rows = RemoteRunner(server).problems()
        for row in rows:
            click.echo(f"{row['name']}: min_dim={row['min_dim']} params={row['params']} "
                       f"grid_n={row['grid_n']} epochs={row['epochs']}")
        return
    for name in ("poisson", "quadratic", "dividend"):
        fields = ", ".join(f"{k}={v}" for k, v in _PARAM_DEFAULTS[name].items())
        extra = ", ".join(k for k in _PARAM_FIELDS[name] if k not in _PARAM_DEFAULTS[name])
        line = f"{name}: {fields}"
        if extra:
            line += f" (also configurable: {extra})"
        click.echo(line)


@main.command("show-config")
@_add_options(_shared_options)
@click.option("--points", type=str, default=None)
def show_config(config, points, server, param, **flags):
    """Print the fully resolved YAML config."""
    try:
        data = _build_config(config=config, points=points, out=None, param=param, **flags)
        cfg = _runner(server).resolve(data)
    except (ConfigError, RemoteError) as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(2)
    click.echo(emit_config(cfg), nl=False)


@main.command()
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--port", default=8720, show_default=True, type=int)
def serve(host, port):
    """Start the HTTP service."""
    import uvicorn

    from .service import create_app
    uvicorn.run(create_app(), host=host, port=port, log_level="info")


if __name__ == "__main__":
    main()
