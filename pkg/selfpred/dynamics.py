"""Optimal latent predictors, semi-gradient representation dynamics, and an Euler integrator for the resulting matrix ODE.

Each objective trains an online representation Φ to predict the (stop-gradient) representation of the next state
through a latent linear map P. The predictor is solved exactly before every representation step, and the
representation then follows Φ̇ = −∇_Φ loss(Φ, P*) with the target held fixed."""

from collections.abc import Callable, Iterable, Sequence
from typing import Any, Optional, cast

import numpy as np
from pydantic.dataclasses import dataclass
import scipy.linalg

from selfpred import logger
from selfpred.config import IntegratorConfig, get_config
from selfpred.errors import InvalidArgumentError, NonConvergenceError, RankDeficiencyError, catch_linalg_error
from selfpred.io import CSVWritable, JSONWritable, Record
from selfpred.mdp import Mdp, Policy, StateDistribution, check_compatible, induced_transition
from selfpred.objectives import ObjectiveKind, trace_value
from selfpred.utils import ARRAY_CONFIG, ArrayField, FloatArray, SeedLike, as_rng, max_abs, thin_orthogonal


PhiDot = Callable[[FloatArray, Mdp, Policy, Optional[StateDistribution]], FloatArray]


def noncollapse_residual(phi: FloatArray) -> float:
    """Gets ‖ΦᵀΦ − I‖ (max-norm), which the continuous-time dynamics keep at zero."""
    return max_abs(phi.T @ phi - np.eye(phi.shape[1]))


##################
# REPRESENTATION #
##################

@dataclass(frozen=True, eq=False, config=ARRAY_CONFIG)
class Representation:
    """An n x k representation matrix Φ (one k-dimensional feature row per state) with orthonormal columns."""
    phi: ArrayField

    def __post_init__(self) -> None:
        if (self.phi.ndim != 2) or (self.phi.shape[1] < 1) or (self.phi.shape[1] > self.phi.shape[0]):
            raise InvalidArgumentError(f'representation must be an n x k matrix with 1 <= k <= n, got shape {self.phi.shape}')
        tol = get_config().tolerance.orthogonality
        if (resid := noncollapse_residual(self.phi)) > tol:
            raise InvalidArgumentError(f'representation columns are not orthonormal (residual {resid:.3g} > {tol:.3g})')

    @classmethod
    def orthonormalized(cls, phi: FloatArray) -> 'Representation':
        """Constructs a Representation from the thin orthogonal factor of an arbitrary full-rank matrix."""
        return cls(thin_orthogonal(np.asarray(phi, dtype=np.float64)))

    @property
    def n_states(self) -> int:
        """Gets the number of states (rows)."""
        return int(self.phi.shape[0])

    @property
    def k(self) -> int:
        """Gets the representation dimension (columns)."""
        return int(self.phi.shape[1])

    @property
    def projector(self) -> FloatArray:
        """Gets the orthogonal projector ΦΦᵀ onto the column span."""
        return cast(FloatArray, self.phi @ self.phi.T)

    def rotate(self, rot: FloatArray) -> 'Representation':
        """Gets the representation ΦC for an orthogonal k x k matrix C (same column span)."""
        return Representation(self.phi @ rot)


def orthogonal_init(n: int, k: int, seed: SeedLike) -> Representation:
    """Draws a random representation: the thin orthogonal factor of an n x k standard Gaussian matrix."""
    if not (1 <= k <= n):
        raise InvalidArgumentError(f'need 1 <= k <= n, got n={n}, k={k}')
    return Representation.orthonormalized(as_rng(seed).standard_normal((n, k)))


def random_orthogonal(k: int, seed: SeedLike) -> FloatArray:
    """Draws a random k x k orthogonal matrix."""
    return orthogonal_init(k, k, seed).phi


def _as_phi(phi: Representation | FloatArray) -> FloatArray:
    return cast(FloatArray, phi.phi) if isinstance(phi, Representation) else np.asarray(phi, dtype=np.float64)


##############
# PREDICTORS #
##############

@dataclass(frozen=True, eq=False, config=ARRAY_CONFIG)
class PredictorSet:
    """Optimal latent predictors: the shared P (predicting the policy-marginal next state) and one P_a per action.
    Actions with zero probability mass have a zero predictor."""
    shared: ArrayField
    per_action: ArrayField


def optimal_predictor(phi: FloatArray, weights: FloatArray, transition: FloatArray) -> FloatArray:
    """Solves the normal equation (ΦᵀDΦ)P = ΦᵀDTΦ for the optimal latent predictor, where D = diag(weights).
    With orthonormal Φ and uniform weights, this is ΦᵀTΦ.
    Raises a RankDeficiencyError if ΦᵀDΦ is singular."""
    (n, k) = phi.shape
    if (weights.shape != (n,)) or (transition.shape != (n, n)):
        raise InvalidArgumentError(f'weights and transition must have shapes {(n,)} and {(n, n)}, got {weights.shape} and {transition.shape}')
    dphi = weights[:, np.newaxis] * phi
    gram = phi.T @ dphi
    eigs = scipy.linalg.eigvalsh(gram)
    if eigs[0] <= 1e-14 * max(1.0, float(eigs[-1])):
        raise RankDeficiencyError(f'latent normal equation is singular (smallest eigenvalue {eigs[0]:.3g})')
    rhs = dphi.T @ transition @ phi
    with catch_linalg_error(RankDeficiencyError, 'latent normal equation is singular'):
        return cast(FloatArray, scipy.linalg.solve(gram, rhs, assume_a='pos'))


def action_occupancies(policy: Policy, dist: StateDistribution) -> FloatArray:
    """Gets the (n_actions, n_states) array of weights d(x)·π(a|x)."""
    dist.check_n_states(policy.n_states)
    return cast(FloatArray, (dist.weights[:, np.newaxis] * policy.probs).T)


def _per_action_predictors(phi: FloatArray, mdp: Mdp, occupancies: FloatArray) -> list[Optional[FloatArray]]:
    # None for actions with zero probability mass
    return [optimal_predictor(phi, occ, mat) if np.any(occ > 0) else None for (occ, mat) in zip(occupancies, mdp.transitions)]


def optimal_predictors(phi: Representation | FloatArray, mdp: Mdp, policy: Policy, dist: Optional[StateDistribution] = None) -> PredictorSet:
    """Computes the shared and per-action optimal predictors for a representation."""
    arr = _as_phi(phi)
    dist = _resolve_dist(mdp, policy, dist)
    _warn_zero_weight_actions(policy, dist)
    shared = optimal_predictor(arr, dist.weights, induced_transition(mdp, policy))
    k = arr.shape[1]
    per_action = [np.zeros((k, k)) if (pred is None) else pred for pred in _per_action_predictors(arr, mdp, action_occupancies(policy, dist))]
    return PredictorSet(shared=shared, per_action=np.stack(per_action))


def _warn_zero_weight_actions(policy: Policy, dist: StateDistribution) -> None:
    for (a, occ) in enumerate(action_occupancies(policy, dist)):
        if not np.any(occ > 0):
            logger.warning(f'Action {a} has zero probability under the policy; its predictor is undefined and its term is skipped')


def _resolve_dist(mdp: Mdp, policy: Policy, dist: Optional[StateDistribution]) -> StateDistribution:
    check_compatible(mdp, policy)
    if dist is None:
        return StateDistribution.uniform(mdp.n_states)
    dist.check_n_states(mdp.n_states)
    return dist


def _check_phi(phi: FloatArray, mdp: Mdp) -> None:
    if (phi.ndim != 2) or (phi.shape[0] != mdp.n_states):
        raise InvalidArgumentError(f'representation has shape {phi.shape}, expected ({mdp.n_states}, k)')


############
# DYNAMICS #
############

def _semi_gradient_term(phi: FloatArray, weights: FloatArray, transition: FloatArray, pred: FloatArray) -> FloatArray:
    # −2(DΦP − DTΦ)Pᵀ
    return cast(FloatArray, -2.0 * (weights[:, np.newaxis] * (phi @ pred - transition @ phi)) @ pred.T)


Flow = Callable[[FloatArray, Mdp, Policy, StateDistribution], FloatArray]


def _pi_flow(phi: FloatArray, mdp: Mdp, policy: Policy, dist: StateDistribution) -> FloatArray:
    t_pi = induced_transition(mdp, policy)
    pred = optimal_predictor(phi, dist.weights, t_pi)
    return _semi_gradient_term(phi, dist.weights, t_pi, pred)


def _ac_flow(phi: FloatArray, mdp: Mdp, policy: Policy, dist: StateDistribution) -> FloatArray:
    occupancies = action_occupancies(policy, dist)
    total = np.zeros_like(phi)
    for (occ, mat, pred) in zip(occupancies, mdp.transitions, _per_action_predictors(phi, mdp, occupancies)):
        if pred is not None:
            total += _semi_gradient_term(phi, occ, mat, pred)
    return total


def _var_flow(phi: FloatArray, mdp: Mdp, policy: Policy, dist: StateDistribution) -> FloatArray:
    return _ac_flow(phi, mdp, policy, dist) - _pi_flow(phi, mdp, policy, dist)


_FLOWS: dict[ObjectiveKind, Flow] = {
    ObjectiveKind.pi: _pi_flow,
    ObjectiveKind.ac: _ac_flow,
    ObjectiveKind.var: _var_flow,
}


def _checked_flow(kind: ObjectiveKind, phi: Representation | FloatArray, mdp: Mdp, policy: Policy, dist: Optional[StateDistribution]) -> FloatArray:
    arr = _as_phi(phi)
    _check_phi(arr, mdp)
    dist = _resolve_dist(mdp, policy, dist)
    if kind != ObjectiveKind.pi:
        _warn_zero_weight_actions(policy, dist)
    return _FLOWS[kind](arr, mdp, policy, dist)


def phi_dot_pi(phi: Representation | FloatArray, mdp: Mdp, policy: Policy, dist: Optional[StateDistribution] = None) -> FloatArray:
    """Gets Φ̇ = −2(DΦP* − DT^πΦ)P*ᵀ for the policy-marginal objective, with P* solved against T^π."""
    return _checked_flow(ObjectiveKind.pi, phi, mdp, policy, dist)


def phi_dot_ac(phi: Representation | FloatArray, mdp: Mdp, policy: Policy, dist: Optional[StateDistribution] = None) -> FloatArray:
    """Gets Φ̇ = −2 Σ_a (D_aΦP_a* − D_aT_aΦ)P_a*ᵀ for the action-conditional objective,
    where D_a = diag(d ⊙ π(a|·)) and each P_a* is solved against D_a.
    Actions with zero probability contribute nothing (a warning is logged)."""
    return _checked_flow(ObjectiveKind.ac, phi, mdp, policy, dist)


def phi_dot_var(phi: Representation | FloatArray, mdp: Mdp, policy: Policy, dist: Optional[StateDistribution] = None) -> FloatArray:
    """Gets Φ̇ for the variance-like objective: the action-conditional flow minus the policy-marginal flow."""
    return _checked_flow(ObjectiveKind.var, phi, mdp, policy, dist)


_PHI_DOTS: dict[ObjectiveKind, PhiDot] = {
    ObjectiveKind.pi: phi_dot_pi,
    ObjectiveKind.ac: phi_dot_ac,
    ObjectiveKind.var: phi_dot_var,
}


def phi_dot(kind: ObjectiveKind) -> PhiDot:
    """Gets the Φ̇ function for an objective."""
    return _PHI_DOTS[ObjectiveKind(kind)]


##############
# TRAJECTORY #
##############

@dataclass(frozen=True)
class StepRecord(Record):
    """Diagnostics for one Euler step (values after the step)."""
    iteration: int
    trace_value: float
    noncollapse_residual: float
    grad_norm: float
    step_size: float


@dataclass(frozen=True, eq=False, config=ARRAY_CONFIG)
class Snapshot:
    """A representation matrix recorded at some iteration."""
    iteration: int
    phi: ArrayField


TRAJECTORY_COLUMNS = ['iteration', 'trace_value', 'noncollapse_residual', 'grad_norm', 'step_size']


@dataclass(eq=False, config=ARRAY_CONFIG)
class Trajectory(CSVWritable, JSONWritable):
    """Path of an integrated representation.
    diagnostics has one record per step taken; grad_norm is the norm of the flow that produced each step.
    initial_trace_value is the trace objective at iteration 0, and final_grad_norm is ‖Φ̇‖ at the last iterate."""
    kind: ObjectiveKind
    snapshots: list[Snapshot]
    diagnostics: list[StepRecord]
    initial_trace_value: float
    final_grad_norm: float = float('nan')
    converged: bool = False

    @property
    def n_steps(self) -> int:
        """Gets the number of steps taken."""
        return len(self.diagnostics)

    @property
    def final_phi(self) -> FloatArray:
        """Gets the last recorded representation matrix."""
        return cast(FloatArray, self.snapshots[-1].phi)

    def final_representation(self) -> Representation:
        """Gets the last representation, re-orthonormalized to remove integration drift."""
        return Representation.orthonormalized(self.final_phi)

    @property
    def trace_values(self) -> FloatArray:
        """Gets the trace objective at iterations 0, 1, ..., n_steps."""
        return np.array([self.initial_trace_value] + [rec.trace_value for rec in self.diagnostics])

    def lyapunov_violations(self, tol: float = 1e-12) -> int:
        """Counts the steps on which the trace objective decreased by more than tol."""
        return int(np.sum(np.diff(self.trace_values) < -tol))

    def csv_header(self) -> list[str]:
        return list(TRAJECTORY_COLUMNS)

    def csv_rows(self) -> Iterable[Sequence[Any]]:
        for rec in self.diagnostics:
            yield [getattr(rec, col) for col in TRAJECTORY_COLUMNS]

    def to_json_obj(self) -> dict[str, Any]:
        """Converts the snapshots (as nested arrays) and summary to a JSON object."""
        return {
            'kind': self.kind,
            'converged': self.converged,
            'n_steps': self.n_steps,
            'final_grad_norm': self.final_grad_norm,
            'snapshots': [{'iteration': snap.iteration, 'phi': snap.phi} for snap in self.snapshots],
        }


##############
# INTEGRATOR #
##############

def uses_symmetric_mode(mdp: Mdp, policy: Policy, dist: Optional[StateDistribution] = None) -> bool:
    """Returns True if the trace objectives are Lyapunov functions of the dynamics:
    every T_a is symmetric, the policy is state-independent, and the state distribution is uniform."""
    dist_uniform = (dist is None) or (max_abs(dist.weights - 1.0 / dist.n_states) <= 1e-12)
    return mdp.is_symmetric and policy.is_state_independent() and dist_uniform


def _orthonormal_trace(phi: FloatArray, mdp: Mdp, policy: Policy, kind: ObjectiveKind) -> float:
    # value at the orthonormalized iterate
    return trace_value(thin_orthogonal(phi), mdp, policy, kind)


def _finish(traj: Trajectory, it: int, phi: FloatArray, grad_norm: float) -> None:
    traj.final_grad_norm = grad_norm
    if traj.snapshots[-1].iteration != it:
        traj.snapshots.append(Snapshot(iteration=it, phi=phi))


def integrate(
    phi0: Representation | FloatArray,
    kind: ObjectiveKind,
    mdp: Mdp,
    policy: Policy,
    dist: Optional[StateDistribution] = None,
    config: Optional[IntegratorConfig] = None,
) -> Trajectory:
    """Integrates the representation ODE Φ̇ = phi_dot(kind) by explicit Euler steps Φ ← Φ + hΦ̇.
    Every retraction_period steps, Φ is replaced by its thin orthogonal factor.
    Stops once ‖Φ̇‖_F < grad_tol, or after max_iters steps (logging a warning; the trajectory is then marked unconverged).
    When adaptive, in symmetric mode a step that decreases the trace objective by more than lyapunov_tol is retried
    with half the step size; if the step size falls below min_step, raises a NonConvergenceError carrying the partial trajectory."""
    config = get_config().integrator if (config is None) else config
    kind = ObjectiveKind(kind)
    phi = Representation(_as_phi(phi0)).phi.copy()
    _check_phi(phi, mdp)
    dist = _resolve_dist(mdp, policy, dist)
    if kind != ObjectiveKind.pi:
        _warn_zero_weight_actions(policy, dist)
    # the zero-weight warning is logged once above, not on every step
    flow = _FLOWS[kind]
    step = config.resolve_step_size(mdp.n_states)
    adaptive = config.adaptive and uses_symmetric_mode(mdp, policy, dist)
    value = _orthonormal_trace(phi, mdp, policy, kind)
    traj = Trajectory(kind=kind, snapshots=[Snapshot(iteration=0, phi=phi)], diagnostics=[], initial_trace_value=value)
    logger.debug(f'Integrating {kind} dynamics: h={step:.3g}, max_iters={config.max_iters}, adaptive={adaptive}')
    it = 0
    while True:
        grad = flow(phi, mdp, policy, dist)
        grad_norm = float(np.linalg.norm(grad))
        if grad_norm < config.grad_tol:
            traj.converged = True
            break
        if it >= config.max_iters:
            logger.warning(f'{kind} dynamics did not converge in {config.max_iters} steps (‖Φ̇‖ = {grad_norm:.3g})')
            break
        it += 1
        retract = (config.retraction_period > 0) and (it % config.retraction_period == 0)
        while True:
            cand = phi + step * grad
            if retract:
                cand = thin_orthogonal(cand)
            cand_value = _orthonormal_trace(cand, mdp, policy, kind)
            if (not adaptive) or (cand_value >= value - config.lyapunov_tol):
                break
            step /= 2
            logger.debug(f'Step {it}: trace objective decreased by {value - cand_value:.3g}, halving step size to {step:.3g}')
            if step < config.min_step:
                _finish(traj, it - 1, phi, grad_norm)
                raise NonConvergenceError(f'{kind} step size fell below {config.min_step:.3g} at step {it}', trajectory=traj)
        (phi, value) = (cand, cand_value)
        traj.diagnostics.append(StepRecord(
            iteration=it,
            trace_value=value,
            noncollapse_residual=noncollapse_residual(phi),
            grad_norm=grad_norm,
            step_size=step,
        ))
        if (config.snapshot_period > 0) and (it % config.snapshot_period == 0):
            traj.snapshots.append(Snapshot(iteration=it, phi=phi))
    _finish(traj, it, phi, grad_norm)
    logger.debug(f'{kind} dynamics stopped after {it} step(s), ‖Φ̇‖ = {grad_norm:.3g}')
    return traj
