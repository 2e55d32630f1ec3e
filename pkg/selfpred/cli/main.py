#!/usr/bin/env python3

from pathlib import Path
from typing import Annotated, Any, Optional

from pydantic import ValidationError
from rich import print
import typer

from selfpred import __version__, logger, set_log_level
from selfpred.cli import APP_KWARGS, _load_mdp, load_experiment_config
import selfpred.cli.config
from selfpred.cli.display import cross_table_view, eigen_demo_view, mdp_view, robustness_view, spectral_view, trace_ratio_view
from selfpred.config import DEFAULT_GAMMA, DEFAULT_LAZINESS, ExperimentConfig, OutputFormat, get_config
from selfpred.errors import SelfPredError
from selfpred.harness import (
    run_cross_objective_table,
    run_eigen_picking_demo,
    run_robustness_table,
    run_trace_ratio_curves,
    run_value_mse_table,
    save_results,
)
from selfpred.io import ResultTable
from selfpred.mdp import gen_common_eigenbasis_family, gen_random_mdp
from selfpred.spectral import joint_eigendecomposition
from selfpred.utils import make_rng


###########
# OPTIONS #
###########

ConfigOpt = Annotated[Optional[Path], typer.Option('--config', '-c', show_default=False, help='experiment config JSON file')]
NStatesOpt = Annotated[Optional[int], typer.Option('--n-states', '-n', show_default=False, help='number of states')]
NMdpsOpt = Annotated[Optional[int], typer.Option('--n-mdps', show_default=False, help='number of random MDPs')]
SeedOpt = Annotated[Optional[int], typer.Option('--seed', show_default=False, help='master random seed')]
OutOpt = Annotated[Optional[str], typer.Option('--out', '-o', show_default=False, help='output directory')]
FormatOpt = Annotated[Optional[OutputFormat], typer.Option('--format', '-f', show_default=False, help='format of result tables')]
WorkersOpt = Annotated[Optional[int], typer.Option('--workers', '-j', show_default=False, help='number of worker processes')]
LazinessOpt = Annotated[Optional[float], typer.Option('--laziness', show_default=False, help='identity weight mixed into each generated transition matrix')]
VerboseOpt = Annotated[bool, typer.Option('--verbose', '-v', help='show debug logs')]


def _experiment_config(config: Optional[Path], verbose: bool, **overrides: Any) -> ExperimentConfig:
    set_log_level('DEBUG' if verbose else get_config().log_level)
    return load_experiment_config(config, **overrides)


def _save(
    config: ExperimentConfig,
    command: str,
    tables: dict[str, ResultTable],
    n_instances: int,
    n_skipped: int = 0,
    n_unconverged: int = 0,
    degenerate: bool = False,
) -> None:
    paths = save_results(config, command, tables, n_instances, n_skipped=n_skipped, n_unconverged=n_unconverged, degenerate=degenerate)
    for path in paths:
        logger.info(f'Saved {path}')


#######
# APP #
#######

APP = typer.Typer(**APP_KWARGS)

APP.add_typer(
    selfpred.cli.config.APP,
    name='config',
    help='Manage configurations.',
    short_help='manage configurations',
)

MDP_APP = typer.Typer(**APP_KWARGS)

APP.add_typer(
    MDP_APP,
    name='mdp',
    help='Generate and inspect MDP files.',
    short_help='generate and inspect MDPs',
)

@APP.command(name='cross-table', short_help='compare trace objectives across trained representations')
def cross_table(
    config: ConfigOpt = None,
    n_states: NStatesOpt = None,
    n_mdps: NMdpsOpt = None,
    seed: SeedOpt = None,
    laziness: LazinessOpt = None,
    out: OutOpt = None,
    format: FormatOpt = None,  # noqa: A002
    workers: WorkersOpt = None,
    verbose: VerboseOpt = False,
) -> None:
    """Train one representation per objective on each random MDP and evaluate every negative trace objective on each."""
    cfg = _experiment_config(config, verbose, n_states=n_states, n_mdps=n_mdps, seed=seed, laziness=laziness, output_dir=out, format=format, n_workers=workers)
    table = run_cross_objective_table(cfg)
    print(cross_table_view(table, title='Negative trace objectives (rows) of trained representations (columns)'))
    _save(cfg, 'cross-table', {'cross_table': table}, table.n_instances, n_skipped=table.n_skipped, n_unconverged=table.n_unconverged, degenerate=table.degenerate)
    logger.done()

@APP.command(name='value-mse', short_help='fit value functions to trained representations')
def value_mse(
    config: ConfigOpt = None,
    n_states: NStatesOpt = None,
    n_mdps: NMdpsOpt = None,
    seed: SeedOpt = None,
    laziness: LazinessOpt = None,
    out: OutOpt = None,
    format: FormatOpt = None,  # noqa: A002
    workers: WorkersOpt = None,
    verbose: VerboseOpt = False,
) -> None:
    """Fit V, Q, and advantage functions of random rewards onto each objective's trained representation."""
    cfg = _experiment_config(config, verbose, n_states=n_states, n_mdps=n_mdps, seed=seed, laziness=laziness, output_dir=out, format=format, n_workers=workers)
    table = run_value_mse_table(cfg)
    print(cross_table_view(table, title='Mean squared error of value fits (rows) on trained representations (columns)'))
    _save(cfg, 'value-mse', {'value_mse': table}, table.n_instances, n_skipped=table.n_skipped, n_unconverged=table.n_unconverged, degenerate=table.degenerate)
    logger.done()

@APP.command(short_help='measure representation shift under policy perturbations')
def robustness(
    config: ConfigOpt = None,
    n_states: NStatesOpt = None,
    n_runs: Annotated[Optional[int], typer.Option('--n-runs', show_default=False, help='number of runs')] = None,
    seed: SeedOpt = None,
    laziness: LazinessOpt = None,
    out: OutOpt = None,
    format: FormatOpt = None,  # noqa: A002
    workers: WorkersOpt = None,
    verbose: VerboseOpt = False,
) -> None:
    """Train each objective under a policy and under a perturbation of it, and compare the two representations."""
    cfg = _experiment_config(config, verbose, n_states=n_states, n_runs_robustness=n_runs, seed=seed, laziness=laziness, output_dir=out, format=format, n_workers=workers)
    table = run_robustness_table(cfg)
    print(robustness_view(table))
    _save(cfg, 'robustness', {'robustness': table}, table.n_runs, n_skipped=sum(table.n_skipped), n_unconverged=table.n_unconverged)
    logger.done()

@APP.command(name='trace-ratio', short_help='track trace objectives on non-symmetric MDPs')
def trace_ratio(
    config: ConfigOpt = None,
    n_states: NStatesOpt = None,
    n_mdps: NMdpsOpt = None,
    seed: SeedOpt = None,
    symmetric: Annotated[Optional[bool], typer.Option('--symmetric/--non-symmetric', show_default=False, help='use symmetric MDPs (sanity check)')] = None,
    laziness: LazinessOpt = None,
    stride: Annotated[Optional[int], typer.Option('--stride', show_default=False, help='record every N-th iteration')] = None,
    out: OutOpt = None,
    format: FormatOpt = None,  # noqa: A002
    workers: WorkersOpt = None,
    verbose: VerboseOpt = False,
) -> None:
    """Integrate the pi and ac dynamics and record the trace objective relative to the top-k eigenvectors of the symmetrized dynamics."""
    cfg = _experiment_config(config, verbose, n_states=n_states, n_mdps=n_mdps, seed=seed, symmetric=symmetric, laziness=laziness, curve_stride=stride, output_dir=out, format=format, n_workers=workers)
    curves = run_trace_ratio_curves(cfg)
    print(trace_ratio_view(curves))
    n_excluded = max(curves.n_excluded.values())
    n_unconverged = sum(curves.n_unconverged.values())
    _save(cfg, 'trace-ratio', {'trace_ratio': curves}, cfg.n_mdps - n_excluded, n_skipped=n_excluded, n_unconverged=n_unconverged)
    logger.done()

@APP.command(name='eigen-demo', short_help='show which eigenvectors each objective picks')
def eigen_demo(
    config: ConfigOpt = None,
    n_states: NStatesOpt = None,
    k: Annotated[Optional[int], typer.Option('-k', show_default=False, help='representation dimension')] = None,
    seed: SeedOpt = None,
    laziness: LazinessOpt = None,
    out: OutOpt = None,
    format: FormatOpt = None,  # noqa: A002
    verbose: VerboseOpt = False,
) -> None:
    """Score the shared eigenvectors of a random two-action family by each objective's criterion."""
    cfg = _experiment_config(config, verbose, n_states=n_states, k=k, seed=seed, laziness=laziness, output_dir=out, format=format)
    demo = run_eigen_picking_demo(cfg)
    print(eigen_demo_view(demo))
    _save(cfg, 'eigen-demo', {'eigen_demo': demo}, 1)
    logger.done()

@MDP_APP.command(short_help='generate a random MDP')
def generate(
    output_file: Annotated[Path, typer.Argument(help='MDP JSON file to write')],
    n_states: Annotated[int, typer.Option('--n-states', '-n', help='number of states')] = 10,
    n_actions: Annotated[int, typer.Option('--n-actions', '-m', help='number of actions')] = 4,
    seed: Annotated[int, typer.Option('--seed', help='random seed')] = 0,
    gamma: Annotated[float, typer.Option('--gamma', help='discount factor')] = DEFAULT_GAMMA,
    symmetric: Annotated[bool, typer.Option('--symmetric/--non-symmetric', help='whether per-action dynamics are symmetric')] = True,
    common_eigenbasis: Annotated[bool, typer.Option('--common-eigenbasis', help='draw commuting circulant dynamics')] = False,
    laziness: Annotated[Optional[float], typer.Option('--laziness', show_default=False, help='identity weight mixed into each transition matrix (default 0.5 for circulant families, 0 otherwise)')] = None,
) -> None:
    """Generate a random MDP and save it as JSON."""
    rng = make_rng(seed)
    if common_eigenbasis:
        mdp = gen_common_eigenbasis_family(n_states, n_actions, rng, laziness=DEFAULT_LAZINESS if (laziness is None) else laziness, gamma=gamma)
    else:
        mdp = gen_random_mdp(n_states, n_actions, rng, symmetric=symmetric, laziness=laziness or 0.0, gamma=gamma)
    mdp.save(output_file)
    logger.info(f'Saved MDP to {output_file}')
    logger.done()

@MDP_APP.command(name='show', short_help='summarize an MDP file')
def show_mdp(
    mdp_file: Annotated[Path, typer.Argument(help='MDP JSON file')],
) -> None:
    """Summarize an MDP file, including its shared eigenbasis when the dynamics are symmetric and commute."""
    mdp = _load_mdp(mdp_file)
    print(mdp_view(mdp))
    if mdp.is_symmetric and (mdp.max_commutator() <= get_config().tolerance.commute):
        print(spectral_view(joint_eigendecomposition(mdp)))

@APP.callback(invoke_without_command=True)
def main(
    ctx: typer.Context,
    version: Annotated[bool, typer.Option('--version', help='show version number')] = False
) -> None:
    """Learning dynamics of self-predictive representations on tabular MDPs."""
    if ctx.invoked_subcommand is None:
        if version:
            print(__version__)
        else:
            ctx.get_help()


@logger.catch_errors(SelfPredError, ValidationError)
def run_app() -> None:
    """Runs the main selfpred app."""
    APP()

if __name__ == '__main__':
    run_app()
