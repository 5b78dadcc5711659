"""Command-line front end: ``python cli.py {analyze,simulate,codesign,sweep} --config run.toml``.

Exit codes: 0 success, 2 config error, 3 infeasible problem, 4 unstable step
size, 5 solver non-convergence, 1 anything else.
"""

import logging
import sys

import click

from utils.config import RunConfig, get_settings
from utils.errors import PrivFormError
from utils.runner import run

logger = logging.getLogger(__name__)


def _configure_logging(level: str):
    logging.basicConfig(
        level=getattr(logging, level, logging.INFO),
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )


def _execute(mode: str, config_path, out_dir, seed, trials=None, horizon=None, axis=None, values=None):
    try:
        config = RunConfig.from_file(
            mode, config_path, out_dir=out_dir, seed=seed, trials=trials, horizon=horizon,
            sweep_axis=axis, sweep_values=values,
        )
        result = run(config)
    except PrivFormError as e:
        click.echo(f"error: {e}", err=True)
        sys.exit(e.exit_code)
    for path in result.artifacts:
        click.echo(path)
    if result.status != 0:
        click.echo(f"error: {result.message}", err=True)
    sys.exit(result.status)


def _common(func):
    func = click.option("--seed", type=click.IntRange(0, 2 ** 64 - 1), default=None, help="Top-level random seed.")(func)
    func = click.option("--out", "out_dir", type=click.Path(file_okay=False), default=None, help="Output directory.")(func)
    func = click.option(
        "--config", "config_path", required=True, type=click.Path(dir_okay=False), help="TOML run configuration."
    )(func)
    return func


@click.group()
@click.option("--log-level", default=None, help="Overrides PRIVFORM_LOG_LEVEL.")
def cli(log_level):
    """Privacy-aware formation control: analysis, simulation and co-design."""
    _configure_logging((log_level or get_settings().log_level).upper())


@cli.command()
@_common
def analyze(config_path, out_dir, seed):
    """Exact steady-state error and its trace bound."""
    _execute("analyze", config_path, out_dir, seed)


@cli.command()
@_common
@click.option("--trials", type=click.IntRange(min=1), default=None, help="Independent Monte Carlo trials.")
@click.option("--horizon", type=click.IntRange(min=1), default=None, help="Steps per trial.")
def simulate(config_path, out_dir, seed, trials, horizon):
    """Run the private protocol and compare with the exact steady state."""
    _execute("simulate", config_path, out_dir, seed, trials=trials, horizon=horizon)


@cli.command()
@_common
def codesign(config_path, out_dir, seed):
    """Jointly choose edge weights and privacy levels."""
    _execute("codesign", config_path, out_dir, seed)


@cli.command()
@_common
@click.option("--axis", default=None, help="Sweep parameter: e_R, eps_max_uniform, lambda2_min or vartheta.")
@click.option("--value", "values", type=float, multiple=True, help="Sweep value (repeatable).")
def sweep(config_path, out_dir, seed, axis, values):
    """Repeat co-design over one parameter axis."""
    _execute("sweep", config_path, out_dir, seed, axis=axis, values=values)


if __name__ == "__main__":
    cli()
