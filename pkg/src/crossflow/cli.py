"""
Command-line interface.

Exit codes: 0 success, 1 usage/config error, 2 data error, 3 fit failure
under ``--strict``.
"""
from __future__ import annotations

import functools
import logging
import os
import sys

import click

from . import pipeline
from .config import ConfigError, RunConfig
from .events import DataError, NewsClass
from .gibbs import SamplerError
from .hawkes import StationarityError, load_params
from .influence import ReportError

EXIT_USAGE, EXIT_DATA, EXIT_FIT = 1, 2, 3


def _fail(code: int, msg: str):
    click.echo(f"error: {msg}", err=True)
    sys.exit(code)


def _load_config(path, seed, workers, strict) -> RunConfig:
    try:
        config = RunConfig.load(path)
    except FileNotFoundError:
        _fail(EXIT_USAGE, f"config file not found: {path}")
    except (ConfigError, TypeError) as exc:
        _fail(EXIT_USAGE, f"{path}: {exc}")
    if seed is not None:
        config.seed = seed
    if workers is not None:
        if workers < 1:
            _fail(EXIT_USAGE, "--workers must be >= 1")
        config.workers = workers
    if strict:
        config.strict = True
    return config


def run_options(f):
    @click.option("--config", "config_path", required=True, type=click.Path(dir_okay=False),
                  help="Run configuration (TOML).")
    @click.option("--seed", type=int, default=None, help="Override the run seed.")
    @click.option("--workers", type=int, default=None, help="Parallel fit workers.")
    @click.option("--strict", is_flag=True, help="Abort on the first failed URL fit.")
    @click.option("--out", "out_dir", required=True, type=click.Path(file_okay=False),
                  help="Output directory.")
    @functools.wraps(f)
    def wrapper(config_path, seed, workers, strict, out_dir, **kwargs):
        config = _load_config(config_path, seed, workers, strict)
        try:
            return f(config=config, out_dir=out_dir, **kwargs)
        except FileNotFoundError as exc:
            _fail(EXIT_DATA, f"file not found: {exc.filename}")
        except pipeline.FitFailure as exc:
            _fail(EXIT_FIT, str(exc))
        except StationarityError as exc:
            _fail(EXIT_DATA, str(exc))
        except (DataError, ReportError, SamplerError, ValueError, OSError) as exc:
            _fail(EXIT_DATA, str(exc))
    return wrapper


def _require_file(path, what):
    if not os.path.isfile(path):
        _fail(EXIT_DATA, f"{what} not found: {path}")


@click.group()
@click.option("-v", "--verbose", is_flag=True, help="Log progress to stderr.")
def cli(verbose):
    """Hawkes influence estimation and temporal analytics for URL-share logs."""
    logging.basicConfig(level=logging.INFO if verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")


@cli.command()
@click.argument("input_path", type=click.Path(dir_okay=False))
@run_options
def ingest(config, out_dir, input_path):
    """Parse a CSV/NDJSON event log into a normalized event store."""
    _require_file(input_path, "input file")
    result = pipeline.run_ingest(config, input_path, out_dir)
    p = result["parse"]
    click.echo(f"{p['parsed']} events from {p['rows']} rows ({p['rejected']} rejected), "
               f"{result['urls']} URLs -> {os.path.join(out_dir, pipeline.STORE_NAME)}")


@cli.command()
@click.option("--params", "params_dir", required=True, type=click.Path(file_okay=False),
              help="Directory with lambda0.csv, W.csv, G.csv, grid.csv.")
@click.option("--n-urls", type=int, required=True)
@click.option("--bins", "T", type=int, required=True, help="Bins per simulated URL.")
@click.option("--news-class", type=click.Choice([c.value for c in NewsClass]),
              default=NewsClass.MAINSTREAM.value)
@run_options
def simulate(config, out_dir, params_dir, n_urls, T, news_class):
    """Simulate an event store from known parameters."""
    try:
        params, names = load_params(params_dir)
    except FileNotFoundError as exc:
        _fail(EXIT_DATA, f"parameter file not found: {exc.filename}")
    if names != list(config.registry.names):
        _fail(EXIT_DATA, f"parameter communities {names} differ from config")
    meta = pipeline.run_simulate(config, params, n_urls, T, out_dir, NewsClass(news_class),
                                 params_dir)
    click.echo(f"simulated {n_urls} URLs, event totals {meta['event_totals']}")


@cli.command()
@click.argument("store", type=click.Path(dir_okay=False))
@run_options
def fit(config, out_dir, store):
    """Fit a Hawkes model per URL and write posteriors.csv."""
    _require_file(store, "event store")
    log = pipeline.run_fit(config, store, out_dir)
    if log["failures"]:
        click.echo(f"warning: {len(log['failures'])} URL fits failed", err=True)
    click.echo(f"fitted {log['urls_fitted']} URLs -> "
               f"{os.path.join(out_dir, pipeline.POSTERIORS_NAME)}")


@cli.command()
@click.argument("posteriors", type=click.Path(dir_okay=False))
@click.argument("store", type=click.Path(dir_okay=False))
@run_options
def influence(config, out_dir, posteriors, store):
    """Aggregate posteriors into influence tables."""
    _require_file(posteriors, "posteriors file")
    _require_file(store, "event store")
    result = pipeline.run_influence(config, posteriors, store, out_dir)
    for w in result["warnings"]:
        click.echo(f"warning: {w}", err=True)
    click.echo(f"influence report -> {out_dir}")


@cli.command()
@click.argument("store", type=click.Path(dir_okay=False))
@run_options
def temporal(config, out_dir, store):
    """Sequence tables, lag CDFs and flow graphs from an event store."""
    _require_file(store, "event store")
    result = pipeline.run_temporal(config, store, out_dir)
    click.echo(f"temporal analytics for {result['meta']['urls']} URLs -> {out_dir}")


@cli.command()
@click.argument("posteriors", type=click.Path(dir_okay=False))
@click.argument("store", type=click.Path(dir_okay=False))
@run_options
def report(config, out_dir, posteriors, store):
    """Influence and temporal outputs in one run."""
    _require_file(posteriors, "posteriors file")
    _require_file(store, "event store")
    result = pipeline.run_influence(config, posteriors, store, os.path.join(out_dir, "influence"))
    for w in result["warnings"]:
        click.echo(f"warning: {w}", err=True)
    pipeline.run_temporal(config, store, os.path.join(out_dir, "temporal"))
    click.echo(f"report -> {out_dir}")


def main():
    cli(prog_name="crossflow")


if __name__ == "__main__":
    main()
