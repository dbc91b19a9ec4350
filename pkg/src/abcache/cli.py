"""Experiment CLI: a thin client of the HTTP service.

Every subcommand builds an ExperimentConfig (flags override config-file
values override defaults), sends it to the service, and writes the returned
artifacts. By default the service runs in-process over an ASGI transport;
pass --server to target a remote instance started with `abcache serve`.

Exit codes: 0 success, 2 configuration error, 3 numerical failure.
The ABCACHE_OUT_DIR environment variable sets the default output directory.
"""

from __future__ import annotations

import asyncio
import json
import os
import sys
from pathlib import Path

import click
import httpx
from pydantic import ValidationError

from .config import ExperimentConfig, load_config
from .errors import AbCacheError, ConfigError, DomainError, NumericalError, SpacingError
from .service import create_app

OUT_DIR_ENV = "ABCACHE_OUT_DIR"

EXIT_CONFIG = 2
EXIT_NUMERICAL = 3


class ServiceError(Exception):
    def __init__(self, kind: str, message: str):
        super().__init__(message)
        self.kind = kind


class ServiceClient:
    """HTTP client; in-process ASGI unless a server URL is given."""

    def __init__(self, server: str | None = None):
        self._server = server
        self._app = None if server else create_app()

    def _request(self, method: str, path: str, json_body=None) -> httpx.Response:
        if self._server:
            with httpx.Client(base_url=self._server, timeout=300.0) as client:
                return client.request(method, path, json=json_body)

        async def in_process():
            transport = httpx.ASGITransport(app=self._app)
            async with httpx.AsyncClient(transport=transport, timeout=300.0,
                                         base_url="http://abcache.internal") as client:
                return await client.request(method, path, json=json_body)

        return asyncio.run(in_process())

    def _handle(self, response: httpx.Response) -> dict:
        if response.status_code == 200:
            return response.json()
        try:
            payload = response.json()
        except ValueError:
            raise ServiceError("config", f"service error {response.status_code}: "
                                         f"{response.text}")
        raise ServiceError(payload.get("error_kind", "config"),
                           payload.get("message", response.text))

    def post(self, path: str, config: ExperimentConfig) -> dict:
        return self._handle(self._request("POST", path,
                                          config.model_dump(mode="json")))

    def get(self, path: str) -> dict:
        return self._handle(self._request("GET", path))


def _fail(message: str, code: int):
    click.echo(f"error: {message}", err=True)
    sys.exit(code)


def _build_config(config_file: str | None, **overrides) -> ExperimentConfig:
    try:
        return load_config(config_file, overrides)
    except (ValidationError, ConfigError, OSError) as exc:
        _fail(str(exc), EXIT_CONFIG)


def _call(fn, *args, **kwargs):
    try:
        return fn(*args, **kwargs)
    except ServiceError as exc:
        _fail(str(exc), EXIT_CONFIG if exc.kind == "config" else EXIT_NUMERICAL)
    except (DomainError, SpacingError, NumericalError) as exc:
        _fail(str(exc), EXIT_NUMERICAL)
    except (ValidationError, ConfigError, AbCacheError) as exc:
        _fail(str(exc), EXIT_CONFIG)


def _out_dir(flag_value: str | None, cfg: ExperimentConfig) -> Path:
    path = flag_value or cfg.out_dir or os.environ.get(OUT_DIR_ENV) or "."
    out = Path(path)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _write(out: Path, name: str, text: str) -> None:
    (out / name).write_text(text)
    click.echo(f"wrote {out / name}")


def _write_json(out: Path, name: str, payload: dict, cfg: ExperimentConfig) -> None:
    if "json" in cfg.formats:
        _write(out, name, json.dumps(payload, indent=2, sort_keys=True) + "\n")


def _experiment_options(fn):
    opts = [
        click.option("--config", "config_file", type=click.Path(), default=None,
                     help="Flat key = value config file."),
        click.option("--out-dir", default=None, help="Artifact directory "
                     f"(default: ${OUT_DIR_ENV} or cwd)."),
        click.option("--server", default=None,
                     help="Remote service URL; default runs in process."),
        click.option("--schedule", "schedule_kind", default=None,
                     type=click.Choice(["vp_linear", "vp_cosine", "flow_linear"])),
        click.option("--beta-min", type=float, default=None),
        click.option("--beta-max", type=float, default=None),
        click.option("--t-min", type=float, default=None),
        click.option("--t-max", type=float, default=None),
        click.option("--oracle", default=None,
                     type=click.Choice(["gaussian", "mixture", "velocity"])),
        click.option("--dim", type=int, default=None),
        click.option("--mean", type=float, default=None),
        click.option("--std", type=float, default=None),
        click.option("--order", "-k", type=int, default=None,
                     help="Extrapolation order k (1..4)."),
        click.option("--interval", "-T", type=int, default=None,
                     help="Cache interval T; 1 disables caching."),
        click.option("--steps", "-N", type=int, default=None),
        click.option("--mode", default=None, type=click.Choice(["diffusion", "flow"])),
        click.option("--spacing", default=None,
                     type=click.Choice(["uniform_t", "uniform_lambda"])),
        click.option("--strictness", default=None,
                     type=click.Choice(["strict", "lenient"])),
        click.option("--final-eval/--no-final-eval", "final_eval", default=None,
                     help="Force a real evaluation at the last step."),
        click.option("--record-eps-error", is_flag=True, default=None,
                     help="Record per-step prediction error against the oracle."),
        click.option("--seed", type=int, default=None),
    ]
    for opt in reversed(opts):
        fn = opt(fn)
    return fn


@click.group()
@click.version_option(package_name="abcache")
def main():
    """Cached diffusion sampling experiments."""


def _run_sample(path: str, config_file, out_dir, server, **overrides):
    cfg = _build_config(config_file, **overrides)
    result = _call(ServiceClient(server).post, path, cfg)
    out = _out_dir(out_dir, cfg)
    if "csv" in cfg.formats:
        _write(out, "trajectory.csv", result["trajectory_csv"])
    _write_json(out, "summary.json", result["summary"], cfg)
    s = result["summary"]
    click.echo(f"{s['kind']}: {s['n_steps']} steps, {s['n_network_evals']} evals, "
               f"eval speedup {s['eval_speedup']:.4g}x")


@main.command()
@_experiment_options
def sample(config_file, out_dir, server, **overrides):
    """Run the cached sampler and export trajectory.csv + summary.json."""
    _run_sample("/v1/sample", config_file, out_dir, server, **overrides)


@main.command()
@_experiment_options
def baseline(config_file, out_dir, server, **overrides):
    """Run the evaluate-every-step baseline with the same exports."""
    _run_sample("/v1/baseline", config_file, out_dir, server, **overrides)


@main.command()
@_experiment_options
@click.option("--h-values", default=None,
              help="Comma-separated step sizes, largest first.")
@click.option("--window", default=None,
              help="Sweep window 'lo,hi' (lambda in diffusion mode, t in flow mode).")
@click.option("--synthetic-order", type=float, default=None,
              help="Skip the sweep; feed planted h^p errors to the estimator.")
def convergence(config_file, out_dir, server, **overrides):
    """Estimate the empirical order of the cached-output reconstruction."""
    cfg = _build_config(config_file, **overrides)
    result = _call(ServiceClient(server).post, "/v1/convergence", cfg)
    out = _out_dir(out_dir, cfg)
    _write_json(out, "convergence.json", result, cfg)
    est = result["estimate"]
    click.echo(f"order {result['order']}: mean empirical order "
               f"{est['mean_order']:.4f} (pairs: "
               + ", ".join(f"{p:.4f}" for p in est["pair_orders"]) + ")")


@main.command("scale-factor")
@_experiment_options
def scale_factor(config_file, out_dir, server, **overrides):
    """Export the consecutive-output scale-factor curve over the step grid."""
    cfg = _build_config(config_file, **overrides)
    result = _call(ServiceClient(server).post, "/v1/scale-factor", cfg)
    out = _out_dir(out_dir, cfg)
    _write(out, "scale_factor.csv", result["csv"])
    click.echo(f"scale-factor curve: {result['n_rows']} rows")


@main.command()
@_experiment_options
def similarity(config_file, out_dir, server, **overrides):
    """Export consecutive-output similarity (rel. L2 and cosine) of a baseline run."""
    cfg = _build_config(config_file, **overrides)
    result = _call(ServiceClient(server).post, "/v1/similarity", cfg)
    out = _out_dir(out_dir, cfg)
    _write(out, "similarity.csv", result["csv"])
    click.echo(f"similarity curve: {result['n_rows']} rows")


@main.command()
@click.argument("order", type=int)
@click.option("--server", default=None)
def weights(order, server):
    """Print the quadrature weight row for ORDER (1..5)."""
    result = _call(ServiceClient(server).get, f"/v1/weights/{order}")
    click.echo(result["text"])


@main.command()
@_experiment_options
@click.option("--bench-orders", default=None, help="Comma-separated orders.")
@click.option("--bench-intervals", default=None, help="Comma-separated intervals.")
@click.option("--eval-cost", type=float, default=None)
@click.option("--extrap-cost", type=float, default=None)
def bench(config_file, out_dir, server, **overrides):
    """Sweep (order, interval) pairs; export speedup/error table."""
    cfg = _build_config(config_file, **overrides)
    result = _call(ServiceClient(server).post, "/v1/bench", cfg)
    out = _out_dir(out_dir, cfg)
    if "csv" in cfg.formats:
        _write(out, "bench.csv", result["csv"])
    _write_json(out, "bench.json", {"rows": result["rows"]}, cfg)
    click.echo(f"bench: {len(result['rows'])} configurations")


@main.command()
@click.option("--host", default="127.0.0.1")
@click.option("--port", type=int, default=8000)
def serve(host, port):
    """Run the experiment service."""
    import uvicorn

    uvicorn.run(create_app(), host=host, port=port)


if __name__ == "__main__":
    main()
