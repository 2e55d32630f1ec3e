"""Seeded experiments over batches of random MDPs: cross-objective and value-fit comparisons, robustness to policy
perturbations, trace-ratio curves on non-symmetric dynamics, and the eigenvector-picking demo.

Every random quantity of instance i is drawn from its own stream (seed, i, tag), so results do not depend on the
order (or process) in which instances run."""

from collections.abc import Callable, Iterable, Sequence
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path
from typing import Any, Optional, TypeVar, cast

import numpy as np
from pydantic.dataclasses import dataclass

from selfpred import logger
from selfpred.config import ExperimentConfig, IntegratorConfig, OutputFormat, get_config
from selfpred.dynamics import integrate, orthogonal_init
from selfpred.errors import HarnessError, NonConvergenceError
from selfpred.io import Manifest, ResultTable
from selfpred.mdp import (
    Mdp,
    Policy,
    gen_common_eigenbasis_family,
    gen_random_mdp,
    induced_transition,
    make_deterministic_policy,
    make_random_policy,
    make_uniform_policy,
    mix_policies,
    perturb_policy,
)
from selfpred.objectives import ObjectiveKind, ValueTarget, fit_mse, trace_objective
from selfpred.spectral import (
    Criterion,
    SpectralReport,
    grassmann_distance,
    joint_eigendecomposition,
    spurious_maxima,
    topk_eigenvectors,
)
from selfpred.utils import ARRAY_CONFIG, ArrayField, FloatArray, count_fmt, make_rng, mean_and_stderr, symmetric_part


T = TypeVar('T')
R = TypeVar('R')

KINDS = list(ObjectiveKind)
CURVE_KINDS = [ObjectiveKind.pi, ObjectiveKind.ac]
# stderr multiplier for 95% intervals
STDERR_SCALE = 1.96
# max fraction of instances that may be skipped
MAX_SKIP_FRACTION = 0.1
# trace ratios further than this below 1 count as ending below the reference
BELOW_REFERENCE_TOL = 1e-3
DEMO_N_ACTIONS = 2

# random stream tags
_MDP_STREAM = 0
_INIT_STREAM = 1
_POLICY_STREAM = 2
_PERTURB_STREAM = 3
_REWARD_STREAM = 4


###########
# HELPERS #
###########

def map_instances(func: Callable[[T], R], args: Sequence[T], n_workers: int = 1) -> list[R]:
    """Applies a function to each argument, optionally across worker processes; results are in argument order."""
    if (n_workers <= 1) or (len(args) <= 1):
        return [func(arg) for arg in args]
    with ProcessPoolExecutor(max_workers=n_workers) as executor:
        return list(executor.map(func, args))


def check_skips(n_skipped: int, n_total: int, label: str) -> None:
    """Raises a HarnessError if more than the allowed fraction of instances were skipped."""
    if n_skipped > MAX_SKIP_FRACTION * n_total:
        raise HarnessError(f'{label}: {count_fmt(n_skipped, "instance")} out of {n_total} skipped (limit {MAX_SKIP_FRACTION:.0%})')
    if n_skipped > 0:
        logger.warning(f'{label}: skipped {count_fmt(n_skipped, "instance")} out of {n_total}')


def best_counts(samples: FloatArray, tie_tol: float) -> FloatArray:
    """Given an (N, R, C) array of scores where lower is better, counts for each (row, column) how many of the N
    instances have that column strictly best in that row. Columns within tie_tol of the best count for none."""
    counts = np.zeros(samples.shape[1:])
    for (i, inst) in enumerate(samples):
        for (r, row) in enumerate(inst):
            best = int(np.argmin(row))
            if np.sum(row - row[best] <= tie_tol) > 1:
                logger.debug(f'Instance {i}, row {r}: tie for best')
                continue
            counts[r, best] += 1
    return counts


def _aggregate(samples: FloatArray, tie_tol: float) -> tuple[FloatArray, FloatArray, FloatArray]:
    # mean, 95% stderr, and probability of being best over axis 0
    if len(samples) == 0:
        shape = samples.shape[1:]
        return (np.full(shape, np.nan), np.zeros(shape), np.zeros(shape))
    stats = [[mean_and_stderr(samples[:, r, c], scale=STDERR_SCALE) for c in range(samples.shape[2])] for r in range(samples.shape[1])]
    mean = np.array([[s[0] for s in row] for row in stats])
    stderr = np.array([[s[1] for s in row] for row in stats])
    return (mean, stderr, best_counts(samples, tie_tol) / len(samples))


def check_unconverged(n_unconverged: int, n_total: int, label: str) -> None:
    """Logs a warning if some integrations stopped at max_iters without converging (their final iterates are still used)."""
    if n_unconverged > 0:
        logger.warning(f'{label}: {count_fmt(n_unconverged, "integration")} out of {n_total} stopped at max_iters without converging')


def _instance_mdp(config: ExperimentConfig, i: int) -> Mdp:
    rng = make_rng(config.seed, i, _MDP_STREAM)
    return gen_random_mdp(
        config.n_states,
        config.n_actions,
        rng,
        symmetric=config.symmetric,
        laziness=config.laziness,
        reward_scale=config.reward_scale,
        gamma=config.gamma,
    )


@dataclass(frozen=True, eq=False, config=ARRAY_CONFIG)
class TrainedRepresentations:
    """Final (orthonormalized) representation of each objective's trajectory, and which objectives' integrations
    stopped at max_iters without converging."""
    phis: dict[ObjectiveKind, ArrayField]
    unconverged: list[ObjectiveKind]

    @property
    def n_unconverged(self) -> int:
        """Gets the number of unconverged integrations."""
        return len(self.unconverged)


def train_representations(
    phi0: FloatArray,
    mdp: Mdp,
    policy: Policy,
    integrator: IntegratorConfig,
    kinds: Iterable[ObjectiveKind] = KINDS,
) -> TrainedRepresentations:
    """Integrates the dynamics of each objective from a shared initial representation."""
    trajs = {kind: integrate(phi0, kind, mdp, policy, config=integrator) for kind in kinds}
    return TrainedRepresentations(
        phis={kind: traj.final_representation().phi for (kind, traj) in trajs.items()},
        unconverged=[kind for (kind, traj) in trajs.items() if (not traj.converged)],
    )


@dataclass(frozen=True, eq=False, config=ARRAY_CONFIG)
class InstanceScores:
    """Scores of one instance (NaN rows mark parts that were skipped) and its number of unconverged integrations."""
    scores: ArrayField
    n_unconverged: int = 0


#################
# RESULT TABLES #
#################

@dataclass(frozen=True, eq=False, config=ARRAY_CONFIG)
class CrossTable(ResultTable):
    """Comparison of trained representations (columns) under several measures (rows), where lower is better.
    mean and stderr (95%, i.e. 1.96 standard errors) are over instances; prob_best[r, c] is the fraction of
    instances on which representation c is strictly best on measure r."""
    row_name: str
    rows: list[str]
    columns: list[str]
    mean: ArrayField
    stderr: ArrayField
    prob_best: ArrayField
    n_instances: int
    n_skipped: int = 0
    n_unconverged: int = 0
    degenerate: bool = False

    def diagonal_prob_best(self) -> list[float]:
        """Gets prob_best for each column on its own row (for square tables)."""
        return [float(self.prob_best[i, i]) for i in range(min(len(self.rows), len(self.columns)))]

    def csv_header(self) -> list[str]:
        return [self.row_name, 'representation', 'mean', 'stderr', 'prob_best']

    def csv_rows(self) -> Iterable[Sequence[Any]]:
        for (r, row) in enumerate(self.rows):
            for (c, col) in enumerate(self.columns):
                yield [row, col, self.mean[r, c], self.stderr[r, c], self.prob_best[r, c]]

    def to_json_obj(self) -> dict[str, Any]:
        return {
            'row_name': self.row_name,
            'rows': self.rows,
            'columns': self.columns,
            'mean': self.mean,
            'stderr': self.stderr,
            'prob_best': self.prob_best,
            'n_instances': self.n_instances,
            'n_skipped': self.n_skipped,
            'n_unconverged': self.n_unconverged,
            'degenerate': self.degenerate,
        }


###############
# CROSS TABLE #
###############

def _cross_instance(args: tuple[ExperimentConfig, int]) -> Optional[InstanceScores]:
    (config, i) = args
    mdp = _instance_mdp(config, i)
    policy = make_uniform_policy(config.n_states, config.n_actions)
    phi0 = orthogonal_init(config.n_states, config.k, make_rng(config.seed, i, _INIT_STREAM)).phi
    try:
        reps = train_representations(phi0, mdp, policy, config.integrator)
    except NonConvergenceError as e:
        logger.warning(f'Instance {i} skipped: {e}')
        return None
    # rows: objective evaluated, columns: representation trained
    scores = np.array([[-trace_objective(reps.phis[col], mdp, policy, row) for col in KINDS] for row in KINDS])
    return InstanceScores(scores=scores, n_unconverged=reps.n_unconverged)


def _run_comparison(
    config: ExperimentConfig,
    func: Callable[[tuple[ExperimentConfig, int]], Optional[InstanceScores]],
    label: str,
    row_name: str,
    rows: list[str],
) -> CrossTable:
    logger.info(f'{label}: {count_fmt(config.n_mdps, "MDP")}, {config.n_states} states, {count_fmt(config.n_actions, "action")}, k={config.k}')
    with logger.timed(label):
        results = map_instances(func, [(config, i) for i in range(config.n_mdps)], config.n_workers)
    kept = [res for res in results if (res is not None)]
    n_skipped = len(results) - len(kept)
    check_skips(n_skipped, len(results), label)
    n_unconverged = sum(res.n_unconverged for res in kept)
    check_unconverged(n_unconverged, len(kept) * len(KINDS), label)
    samples = np.stack([res.scores for res in kept]) if kept else np.zeros((0, len(rows), len(KINDS)))
    (mean, stderr, prob_best) = _aggregate(samples, get_config().tolerance.tie)
    degenerate = config.n_actions == 1
    if degenerate:
        logger.warning(f'{label}: single-action MDPs make the pi and ac representations coincide and the var dynamics vanish')
    return CrossTable(
        row_name=row_name,
        rows=rows,
        columns=[str(kind) for kind in KINDS],
        mean=mean,
        stderr=stderr,
        prob_best=prob_best,
        n_instances=len(kept),
        n_skipped=n_skipped,
        n_unconverged=n_unconverged,
        degenerate=degenerate,
    )


def run_cross_objective_table(config: ExperimentConfig) -> CrossTable:
    """For each random MDP (uniform policy), trains one representation per objective from a shared initialization,
    then evaluates every negative trace objective on every trained representation.
    Each representation should be best on its own objective."""
    return _run_comparison(config, _cross_instance, 'Cross-objective table', 'objective', [str(kind) for kind in KINDS])


###################
# VALUE-MSE TABLE #
###################

VALUE_TARGETS = list(ValueTarget)


def _value_mse_instance(args: tuple[ExperimentConfig, int]) -> Optional[InstanceScores]:
    (config, i) = args
    mdp = _instance_mdp(config, i)
    policy = make_uniform_policy(config.n_states, config.n_actions)
    phi0 = orthogonal_init(config.n_states, config.k, make_rng(config.seed, i, _INIT_STREAM)).phi
    try:
        reps = train_representations(phi0, mdp, policy, config.integrator)
    except NonConvergenceError as e:
        logger.warning(f'Instance {i} skipped: {e}')
        return None
    # the same reward draws for every representation
    reports = {
        kind: fit_mse(reps.phis[kind], mdp, policy, config.n_reward_samples, make_rng(config.seed, i, _REWARD_STREAM), reward_scale=config.reward_scale)
        for kind in KINDS
    }
    scores = np.array([[cast(float, reports[kind].get(target)) for kind in KINDS] for target in VALUE_TARGETS])
    return InstanceScores(scores=scores, n_unconverged=reps.n_unconverged)


def run_value_mse_table(config: ExperimentConfig) -> CrossTable:
    """For each random MDP, trains one representation per objective and fits V, Q, and advantage functions of random rewards
    onto each by least squares. Rows are value functions, columns are representations, entries are mean squared errors."""
    return _run_comparison(config, _value_mse_instance, 'Value-MSE table', 'target', [str(target) for target in VALUE_TARGETS])


####################
# ROBUSTNESS TABLE #
####################

def _train_pair(
    phi0: FloatArray,
    mdp: Mdp,
    policy: Policy,
    perturbed: Policy,
    integrator: IntegratorConfig,
) -> tuple[dict[ObjectiveKind, float], int]:
    reps = train_representations(phi0, mdp, policy, integrator)
    reps_perturbed = train_representations(phi0, mdp, perturbed, integrator)
    deltas = {kind: grassmann_distance(reps.phis[kind], reps_perturbed.phis[kind]) for kind in KINDS}
    return (deltas, reps.n_unconverged + reps_perturbed.n_unconverged)


def robustness_deltas(
    phi0: FloatArray,
    mdp: Mdp,
    policy: Policy,
    perturbed: Policy,
    integrator: IntegratorConfig,
) -> dict[ObjectiveKind, float]:
    """Trains each objective's representation under two policies from the same initialization and gets the
    Grassmann distance between the two results."""
    return _train_pair(phi0, mdp, policy, perturbed, integrator)[0]


def _robustness_instance(args: tuple[ExperimentConfig, int]) -> InstanceScores:
    (config, i) = args
    (n, m) = (config.n_states, config.n_actions)
    mdp = _instance_mdp(config, i)
    phi0 = orthogonal_init(n, config.k, make_rng(config.seed, i, _INIT_STREAM)).phi
    base = make_deterministic_policy(n, m, make_rng(config.seed, i, _POLICY_STREAM))
    other = make_random_policy(n, m, make_rng(config.seed, i, _PERTURB_STREAM))
    # one row per perturbation level, NaN where that level was skipped
    deltas = np.full((len(config.epsilon_list), len(KINDS)), np.nan)
    n_unconverged = 0
    for (e, eps) in enumerate(config.epsilon_list):
        policy = perturb_policy(base, eps)
        perturbed = mix_policies(policy, other, eps)
        try:
            (res, n_unconv) = _train_pair(phi0, mdp, policy, perturbed, config.integrator)
        except NonConvergenceError as err:
            logger.warning(f'Run {i} skipped at epsilon={eps}: {err}')
            continue
        deltas[e] = [res[kind] for kind in KINDS]
        n_unconverged += n_unconv
    return InstanceScores(scores=deltas, n_unconverged=n_unconverged)


@dataclass(frozen=True, eq=False, config=ARRAY_CONFIG)
class RobustnessTable(ResultTable):
    """Grassmann distance Δ between representations trained under a policy π and its perturbation π′, per perturbation level ε.
    prob_smallest[e, c] is the fraction of runs on which representation c moved strictly least.
    Statistics for each ε are over the n_runs − n_skipped[e] runs that completed at that level."""
    epsilons: list[float]
    columns: list[str]
    mean: ArrayField
    stderr: ArrayField
    prob_smallest: ArrayField
    n_runs: int
    n_skipped: list[int]
    n_unconverged: int = 0

    def csv_header(self) -> list[str]:
        return ['epsilon', 'representation', 'mean', 'stderr', 'prob_smallest']

    def csv_rows(self) -> Iterable[Sequence[Any]]:
        for (e, eps) in enumerate(self.epsilons):
            for (c, col) in enumerate(self.columns):
                yield [eps, col, self.mean[e, c], self.stderr[e, c], self.prob_smallest[e, c]]

    def to_json_obj(self) -> dict[str, Any]:
        return {
            'epsilons': self.epsilons,
            'columns': self.columns,
            'mean': self.mean,
            'stderr': self.stderr,
            'prob_smallest': self.prob_smallest,
            'n_runs': self.n_runs,
            'n_skipped': self.n_skipped,
            'n_unconverged': self.n_unconverged,
        }


def run_robustness_table(config: ExperimentConfig) -> RobustnessTable:
    """For each run, draws an MDP, a deterministic base policy, and a Dirichlet policy ρ. For each ε, the policy
    π = (1−ε)·base + ε·uniform is perturbed to π′ = (1−ε)π + ερ, and each objective is trained under both from the
    same initial representation. A run that fails at one ε is skipped at that ε only."""
    label = 'Robustness table'
    if not config.epsilon_list:
        raise HarnessError('epsilon_list must be nonempty')
    if min(config.epsilon_list) <= 0:
        raise HarnessError('perturbation levels must be positive (a deterministic policy leaves the per-action predictors underdetermined)')
    n_runs = config.n_runs_robustness
    logger.info(f'{label}: {count_fmt(n_runs, "run")} at {count_fmt(len(config.epsilon_list), "perturbation level")}')
    with logger.timed(label):
        results = map_instances(_robustness_instance, [(config, i) for i in range(n_runs)], config.n_workers)
    samples = np.stack([res.scores for res in results])
    tie_tol = get_config().tolerance.tie
    rows: list[tuple[FloatArray, FloatArray, FloatArray]] = []
    n_skipped: list[int] = []
    for (e, eps) in enumerate(config.epsilon_list):
        kept = samples[~np.isnan(samples[:, e, 0]), e:e + 1]
        n_skipped.append(n_runs - len(kept))
        check_skips(n_skipped[-1], n_runs, f'{label} (epsilon={eps})')
        rows.append(_aggregate(kept, tie_tol))
    n_unconverged = sum(res.n_unconverged for res in results)
    n_completed = n_runs * len(config.epsilon_list) - sum(n_skipped)
    check_unconverged(n_unconverged, 2 * len(KINDS) * n_completed, label)
    (mean, stderr, prob_smallest) = (np.concatenate(stats) for stats in zip(*rows))
    return RobustnessTable(
        epsilons=list(config.epsilon_list),
        columns=[str(kind) for kind in KINDS],
        mean=mean,
        stderr=stderr,
        prob_smallest=prob_smallest,
        n_runs=n_runs,
        n_skipped=n_skipped,
        n_unconverged=n_unconverged,
    )


######################
# TRACE-RATIO CURVES #
######################

def reference_subspace(mdp: Mdp, policy: Policy, kind: ObjectiveKind, k: int) -> FloatArray:
    """Gets the reference top-k subspace for an objective, computed from the symmetric parts of the transition matrices:
    top-k eigenvectors of sym(T^π)² for pi, and of the action-weighted average of sym(T_a)² for ac."""
    if kind == ObjectiveKind.pi:
        sym = symmetric_part(induced_transition(mdp, policy))
        return topk_eigenvectors(sym @ sym, k)
    if kind == ObjectiveKind.ac:
        weights = policy.action_weights()
        mat = sum(w * (symmetric_part(t) @ symmetric_part(t)) for (w, t) in zip(weights, mdp.transitions))
        return topk_eigenvectors(cast(FloatArray, mat), k)
    raise HarnessError(f'no reference subspace for objective {kind}')


def _trace_ratio_instance(args: tuple[ExperimentConfig, int]) -> dict[ObjectiveKind, Optional[tuple[FloatArray, bool]]]:
    (config, i) = args
    mdp = _instance_mdp(config, i)
    policy = make_uniform_policy(config.n_states, config.n_actions)
    phi0 = orthogonal_init(config.n_states, config.k, make_rng(config.seed, i, _INIT_STREAM)).phi
    # per objective: the ratio curve and whether the integration converged
    curves: dict[ObjectiveKind, Optional[tuple[FloatArray, bool]]] = {}
    for kind in CURVE_KINDS:
        ref_value = trace_objective(reference_subspace(mdp, policy, kind, config.k), mdp, policy, kind)
        if ref_value <= 0:
            logger.warning(f'Run {i} excluded for {kind}: reference trace value {ref_value:.3g} is not positive')
            curves[kind] = None
            continue
        try:
            traj = integrate(phi0, kind, mdp, policy, config=config.integrator)
        except NonConvergenceError as e:
            logger.warning(f'Run {i} skipped for {kind}: {e}')
            curves[kind] = None
            continue
        curves[kind] = (traj.trace_values / ref_value, traj.converged)
    return curves


def _pad_curves(curves: list[FloatArray], length: int) -> FloatArray:
    # extends each curve with its final value
    return np.stack([np.concatenate([curve, np.full(length - len(curve), curve[-1])]) for curve in curves])


@dataclass(frozen=True, eq=False, config=ARRAY_CONFIG)
class TraceRatioCurves(ResultTable):
    """Per-run curves of f(Φ_t)/f(reference) at the recorded iterations, with their pointwise medians, per objective.
    Curves that stop early are extended with their final value.
    n_below_reference counts the runs whose final ratio is below 1 − BELOW_REFERENCE_TOL; on symmetric dynamics the pi
    reference is the maximizer, so these are runs that settled on a sub-optimal critical point.
    n_unconverged counts the runs that stopped at max_iters."""
    iterations: ArrayField
    curves: dict[ObjectiveKind, ArrayField]
    medians: dict[ObjectiveKind, ArrayField]
    n_excluded: dict[ObjectiveKind, int]
    n_below_reference: dict[ObjectiveKind, int]
    n_unconverged: dict[ObjectiveKind, int]

    def csv_header(self) -> list[str]:
        return ['objective', 'run', 'iteration', 'ratio']

    def csv_rows(self) -> Iterable[Sequence[Any]]:
        for (kind, curves) in self.curves.items():
            for (t, it) in enumerate(self.iterations):
                yield [kind, 'median', int(it), self.medians[kind][t]]
            for (run, curve) in enumerate(curves):
                for (t, it) in enumerate(self.iterations):
                    yield [kind, run, int(it), curve[t]]

    def to_json_obj(self) -> dict[str, Any]:
        return {
            'iterations': self.iterations,
            'curves': {str(kind): curves for (kind, curves) in self.curves.items()},
            'medians': {str(kind): median for (kind, median) in self.medians.items()},
            'n_excluded': {str(kind): n for (kind, n) in self.n_excluded.items()},
            'n_below_reference': {str(kind): n for (kind, n) in self.n_below_reference.items()},
            'n_unconverged': {str(kind): n for (kind, n) in self.n_unconverged.items()},
        }


def run_trace_ratio_curves(config: ExperimentConfig) -> TraceRatioCurves:
    """For each random MDP (non-symmetric unless configured otherwise), integrates the pi and ac dynamics and tracks the
    ratio of the trace objective to its value on the reference subspace built from symmetric parts."""
    label = 'Trace-ratio curves'
    if config.symmetric:
        logger.warning(f'{label}: running on symmetric MDPs (ratios should approach 1)')
    logger.info(f'{label}: {count_fmt(config.n_mdps, "MDP")}')
    with logger.timed(label):
        results = map_instances(_trace_ratio_instance, [(config, i) for i in range(config.n_mdps)], config.n_workers)
    kept: dict[ObjectiveKind, list[FloatArray]] = {}
    n_excluded: dict[ObjectiveKind, int] = {}
    n_below: dict[ObjectiveKind, int] = {}
    n_unconverged: dict[ObjectiveKind, int] = {}
    for kind in CURVE_KINDS:
        runs = [cast(tuple[FloatArray, bool], res[kind]) for res in results if (res[kind] is not None)]
        if not runs:
            raise HarnessError(f'{label}: every run was excluded for {kind}')
        kept[kind] = [curve for (curve, _) in runs]
        n_excluded[kind] = len(results) - len(runs)
        n_below[kind] = sum(int(curve[-1] < 1.0 - BELOW_REFERENCE_TOL) for curve in kept[kind])
        n_unconverged[kind] = sum(not converged for (_, converged) in runs)
        check_unconverged(n_unconverged[kind], len(runs), f'{label} ({kind})')
        if config.symmetric and (n_below[kind] > 0):
            logger.warning(f'{label} ({kind}): {count_fmt(n_below[kind], "run")} out of {len(runs)} ended below the reference')
    length = max(len(curve) for runs in kept.values() for curve in runs)
    padded = {kind: _pad_curves(runs, length) for (kind, runs) in kept.items()}
    # record every curve_stride-th iteration, always keeping the last
    iterations = np.unique(np.append(np.arange(0, length, config.curve_stride), length - 1))
    curves = {kind: vals[:, iterations] for (kind, vals) in padded.items()}
    medians = {kind: np.median(vals, axis=0) for (kind, vals) in curves.items()}
    return TraceRatioCurves(
        iterations=iterations,
        curves=curves,
        medians=medians,
        n_excluded=n_excluded,
        n_below_reference=n_below,
        n_unconverged=n_unconverged,
    )


######################
# EIGEN-PICKING DEMO #
######################

@dataclass(frozen=True, eq=False, config=ARRAY_CONFIG)
class EigenDemo(ResultTable):
    """Per-eigenvector criterion scores of a commuting family (the ac score is the pi score plus the var score),
    with the top-k indices each objective selects."""
    report: SpectralReport
    k: int

    @property
    def decomposition_residual(self) -> float:
        """Gets max |ac score − pi score − var score| over eigen-indices."""
        scores = self.report.criterion_scores
        resid = scores[Criterion.mean_of_squares] - scores[Criterion.square_of_mean] - scores[Criterion.variance]
        return float(np.max(np.abs(resid)))

    def selected(self, kind: ObjectiveKind) -> list[int]:
        """Gets the eigen-indices selected by an objective."""
        return self.report.topk_indices[Criterion.for_objective(kind)]

    def suboptimal_subsets(self, kind: ObjectiveKind) -> list[list[int]]:
        """Gets the k-subsets of eigenvectors at which an objective's dynamics can settle without reaching its maximum."""
        return spurious_maxima(self.report, Criterion.for_objective(kind), self.k)

    def csv_header(self) -> list[str]:
        eig_cols = [f'eigval_{a}' for a in range(len(self.report.eigvals))]
        return ['index', *eig_cols, *(f'score_{kind}' for kind in KINDS), *(f'selected_{kind}' for kind in KINDS)]

    def csv_rows(self) -> Iterable[Sequence[Any]]:
        scores = {kind: self.report.criterion_scores[Criterion.for_objective(kind)] for kind in KINDS}
        selected = {kind: set(self.selected(kind)) for kind in KINDS}
        for i in range(self.report.n_states):
            yield [i, *self.report.eigvals[:, i], *(scores[kind][i] for kind in KINDS), *((i in selected[kind]) for kind in KINDS)]

    def to_json_obj(self) -> dict[str, Any]:
        return {
            'k': self.k,
            'eigvals': self.report.eigvals,
            'scores': {str(kind): self.report.criterion_scores[Criterion.for_objective(kind)] for kind in KINDS},
            'selected': {str(kind): self.selected(kind) for kind in KINDS},
            'decomposition_residual': self.decomposition_residual,
            'suboptimal_subsets': {str(kind): self.suboptimal_subsets(kind) for kind in KINDS},
        }


def eigen_picking_demo(mdp: Mdp, k: int) -> EigenDemo:
    """Scores the shared eigenvectors of a commuting family by each objective's criterion."""
    return EigenDemo(report=joint_eigendecomposition(mdp, k=k), k=k)


def run_eigen_picking_demo(config: ExperimentConfig) -> EigenDemo:
    """Runs the eigenvector-picking demo on a random two-action symmetric circulant family."""
    rng = make_rng(config.seed, 0, _MDP_STREAM)
    mdp = gen_common_eigenbasis_family(config.n_states, DEMO_N_ACTIONS, rng, laziness=config.laziness, reward_scale=config.reward_scale, gamma=config.gamma)
    demo = eigen_picking_demo(mdp, config.k)
    logger.info('Eigen-picking demo: selected indices ' + ', '.join(f'{kind}={demo.selected(kind)}' for kind in KINDS))
    for kind in KINDS:
        subsets = demo.suboptimal_subsets(kind)
        if subsets:
            logger.warning(f'Eigen-picking demo: {kind} dynamics can settle on sub-optimal eigenvector sets {subsets}')
    return demo


###########
# OUTPUTS #
###########

def save_results(
    config: ExperimentConfig,
    command: str,
    tables: dict[str, ResultTable],
    n_instances: int,
    n_skipped: int = 0,
    n_unconverged: int = 0,
    degenerate: bool = False,
) -> list[str]:
    """Saves each result table in the configured format to the output directory, along with a manifest.json.
    Returns the list of paths written."""
    out_dir = config.output_path
    out_dir.mkdir(parents=True, exist_ok=True)
    outputs = [str(table.save_as(out_dir / name, OutputFormat(config.format))) for (name, table) in tables.items()]
    manifest = Manifest(
        command=command,
        config=config.canonical_dict(),
        config_hash=config.config_hash,
        seed=config.seed,
        n_instances=n_instances,
        n_skipped=n_skipped,
        n_unconverged=n_unconverged,
        outputs=[str(Path(path).name) for path in outputs],
        degenerate=degenerate,
    )
    manifest_path = out_dir / 'manifest.json'
    manifest.save(manifest_path)
    return [*outputs, str(manifest_path)]
