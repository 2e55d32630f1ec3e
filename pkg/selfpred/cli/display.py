"""Console summaries of experiment results and MDPs."""

from typing import Optional

import numpy as np
from rich.table import Table

from selfpred.harness import KINDS, CrossTable, EigenDemo, RobustnessTable, TraceRatioCurves
from selfpred.mdp import Mdp
from selfpred.spectral import Criterion, SpectralReport


def _mean_stderr(mean: float, stderr: float) -> str:
    return f'{mean:.4g} ± {stderr:.2g}'


def _prob(val: float, highlight: bool = False) -> str:
    s = f'{val:.0%}'
    return f'[bold]{s}[/]' if highlight else s


def cross_table_view(table: CrossTable, title: Optional[str] = None) -> Table:
    """Renders a CrossTable as mean ± stderr per cell, with the probability of being best beneath each mean.
    The best mean in each row is highlighted."""
    view = Table(title=title)
    view.add_column(table.row_name, style='bold')
    for col in table.columns:
        view.add_column(f'Φ_{col}', justify='right')
    for (r, row) in enumerate(table.rows):
        best = int(np.nanargmin(table.mean[r])) if np.isfinite(table.mean[r]).any() else -1
        cells = []
        for c in range(len(table.columns)):
            cell = _mean_stderr(table.mean[r, c], table.stderr[r, c])
            cells.append(f'[green]{cell}[/]' if (c == best) else cell)
        view.add_row(row, *cells)
        view.add_row('  Pr(best)', *(_prob(p, highlight=(c == best)) for (c, p) in enumerate(table.prob_best[r])))
    caption = f'{table.n_instances} instances'
    if table.n_skipped:
        caption += f', {table.n_skipped} skipped'
    if table.n_unconverged:
        caption += f', {table.n_unconverged} unconverged'
    if table.degenerate:
        caption += ' [yellow](degenerate: single action)[/]'
    view.caption = caption
    return view


def robustness_view(table: RobustnessTable) -> Table:
    """Renders a RobustnessTable with one row per perturbation level."""
    view = Table(title='Grassmann distance Δ between representations trained under π and π′')
    view.add_column('ε', style='bold')
    for col in table.columns:
        view.add_column(f'Δ(Φ_{col})', justify='right')
    for col in table.columns:
        view.add_column(f'Pr(Φ_{col} smallest)', justify='right')
    view.add_column('skipped', justify='right')
    for (e, eps) in enumerate(table.epsilons):
        best = int(np.argmax(table.prob_smallest[e]))
        dists = [_mean_stderr(table.mean[e, c], table.stderr[e, c]) for c in range(len(table.columns))]
        probs = [_prob(p, highlight=(c == best)) for (c, p) in enumerate(table.prob_smallest[e])]
        view.add_row(f'{eps:g}', *dists, *probs, str(table.n_skipped[e]))
    view.caption = f'{table.n_runs} runs' + (f', {table.n_unconverged} unconverged' if table.n_unconverged else '')
    return view


def trace_ratio_view(curves: TraceRatioCurves) -> Table:
    """Renders the median trace ratio at the first and last recorded iterations for each objective."""
    view = Table(title='Trace objective relative to the reference top-k eigenvectors')
    view.add_column('objective', style='bold')
    view.add_column('runs', justify='right')
    view.add_column('excluded', justify='right')
    view.add_column('unconverged', justify='right')
    view.add_column('below ref', justify='right')
    view.add_column('median (init)', justify='right')
    view.add_column(f'median (iter {int(curves.iterations[-1])})', justify='right')
    for (kind, median) in curves.medians.items():
        counts = (curves.n_excluded[kind], curves.n_unconverged[kind], curves.n_below_reference[kind])
        view.add_row(str(kind), str(len(curves.curves[kind])), *map(str, counts), f'{median[0]:.4f}', f'{median[-1]:.4f}')
    return view


def eigen_demo_view(demo: EigenDemo) -> Table:
    """Renders per-eigenvector eigenvalues and criterion scores, marking each objective's selected indices."""
    report = demo.report
    view = Table(title=f'Eigenvectors picked by each objective (k={demo.k})')
    view.add_column('i', style='bold', justify='right')
    for a in range(len(report.eigvals)):
        view.add_column(f'λ_{a}', justify='right')
    for kind in KINDS:
        view.add_column(f'score ({kind})', justify='right')
    selected = {kind: set(demo.selected(kind)) for kind in KINDS}
    scores = {kind: report.criterion_scores[Criterion.for_objective(kind)] for kind in KINDS}
    for i in range(report.n_states):
        lams = [f'{lam:+.4f}' for lam in report.eigvals[:, i]]
        cells = [(f'[bold green]{scores[kind][i]:.4f}*[/]' if (i in selected[kind]) else f'{scores[kind][i]:.4f}') for kind in KINDS]
        view.add_row(str(i), *lams, *cells)
    view.caption = f'* selected; max |ac − pi − var| = {demo.decomposition_residual:.2g}'
    return view


def mdp_view(mdp: Mdp) -> Table:
    """Renders a summary of an MDP's dimensions and structure."""
    view = Table(show_header=False)
    view.add_column('Field', style='bold')
    view.add_column('Value')
    view.add_row('states', str(mdp.n_states))
    view.add_row('actions', str(mdp.n_actions))
    view.add_row('gamma', f'{mdp.gamma:g}')
    view.add_row('symmetric', str(mdp.is_symmetric))
    view.add_row('max commutator', f'{mdp.max_commutator():.3g}')
    view.add_row('reward range', f'[{mdp.reward.min():.4g}, {mdp.reward.max():.4g}]')
    return view


def spectral_view(report: SpectralReport) -> Table:
    """Renders the per-action eigenvalues and criterion scores of a shared eigenbasis."""
    view = Table(title='Shared eigenbasis')
    view.add_column('i', style='bold', justify='right')
    for a in range(len(report.eigvals)):
        view.add_column(f'λ_{a}', justify='right')
    for crit in report.criterion_scores:
        view.add_column(str(crit), justify='right')
    for i in range(report.n_states):
        view.add_row(str(i), *(f'{lam:+.4f}' for lam in report.eigvals[:, i]), *(f'{scores[i]:.4f}' for scores in report.criterion_scores.values()))
    return view
