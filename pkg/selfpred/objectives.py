"""Trace objectives of the three self-predictive losses, and the model-based and model-free routes to the same values.

With an orthonormal representation Φ and a transition matrix T, the latent model is M = ΦᵀTΦ and the
trace objective is tr(M²). Each objective compares against a family of target matrices:
    - pi: the policy-induced dynamics T^π
    - ac: each per-action T_a, weighted by the marginal action probabilities
    - var: each residual T_a − T^π, weighted likewise (equal to ac − pi for state-independent policies)
"""

from collections.abc import Sequence
from typing import Optional, cast

import numpy as np
from pydantic.dataclasses import dataclass

from selfpred.config import get_config
from selfpred.errors import AssumptionViolationError, InvalidArgumentError
from selfpred.io import Record
from selfpred.mdp import Mdp, Policy, check_compatible, induced_transition, q_function, value_function
from selfpred.utils import FloatArray, SeedLike, StrEnum, as_rng, max_abs, mean_and_stderr


class ObjectiveKind(StrEnum):
    """Enum for the three self-predictive objectives."""
    pi = 'pi'  # policy-marginal (BYOL-Π)
    ac = 'ac'  # action-conditional (BYOL-AC)
    var = 'var'  # variance-like, ac minus pi (BYOL-VAR)


class ValueTarget(StrEnum):
    """Enum for the value functions fit by linear regression on a representation."""
    v = 'v'
    q = 'q'
    advantage = 'advantage'


def check_orthonormal(phi: FloatArray, tol: Optional[float] = None) -> None:
    """Raises an InvalidArgumentError if ΦᵀΦ deviates from the identity by more than tol (max-norm)."""
    if tol is None:
        tol = get_config().tolerance.trace_orthonormal
    if (phi.ndim != 2) or (phi.shape[1] > phi.shape[0]):
        raise InvalidArgumentError(f'representation must be an n x k matrix with k <= n, got shape {phi.shape}')
    dev = max_abs(phi.T @ phi - np.eye(phi.shape[1]))
    if dev > tol:
        raise InvalidArgumentError(f'representation is not orthonormal (max |ΦᵀΦ − I| = {dev:.3g})')


def _check_phi_rows(phi: FloatArray, mdp: Mdp) -> None:
    if phi.shape[0] != mdp.n_states:
        raise InvalidArgumentError(f'representation has {phi.shape[0]} rows, expected {mdp.n_states}')


def target_family(mdp: Mdp, policy: Policy, kind: ObjectiveKind) -> tuple[FloatArray, FloatArray]:
    """Gets the stack of target matrices for an objective along with their weights.
    The weights are the marginal action probabilities (uniform state distribution) for ac and var, and [1] for pi."""
    check_compatible(mdp, policy)
    t_pi = induced_transition(mdp, policy)
    if kind == ObjectiveKind.pi:
        return (t_pi[np.newaxis], np.ones(1))
    weights = policy.action_weights()
    if kind == ObjectiveKind.ac:
        return (cast(FloatArray, mdp.transitions), weights)
    if kind == ObjectiveKind.var:
        return (cast(FloatArray, mdp.transitions - t_pi), weights)
    raise InvalidArgumentError(f'Unknown objective kind {kind!r}')


def _trace_of_squares(mats: FloatArray) -> FloatArray:
    # tr(M_a M_a) for each matrix in a stack
    return cast(FloatArray, np.einsum('aij,aji->a', mats, mats))


def latent_models(phi: FloatArray, mats: FloatArray) -> FloatArray:
    """Gets the stack of latent models ΦᵀM_aΦ."""
    return cast(FloatArray, np.einsum('xi,axy,yj->aij', phi, mats, phi))


###################
# TRACE OBJECTIVE #
###################

def trace_value(phi: FloatArray, mdp: Mdp, policy: Policy, kind: ObjectiveKind) -> float:
    """Computes the trace objective without checking that Φ is orthonormal."""
    if kind == ObjectiveKind.var:
        return trace_value(phi, mdp, policy, ObjectiveKind.ac) - trace_value(phi, mdp, policy, ObjectiveKind.pi)
    (mats, weights) = target_family(mdp, policy, kind)
    return float(weights @ _trace_of_squares(latent_models(phi, mats)))


def trace_objective(phi: FloatArray, mdp: Mdp, policy: Policy, kind: ObjectiveKind) -> float:
    """Computes the trace objective f(Φ) whose negative is a Lyapunov function of the representation dynamics:
        - pi: tr(ΦᵀT^πΦΦᵀT^πΦ)
        - ac: Σ_a w_a tr(ΦᵀT_aΦΦᵀT_aΦ), with w_a the marginal action probabilities (1/|A| for a uniform policy)
        - var: ac − pi
    Φ must be orthonormal to within the configured tolerance."""
    check_orthonormal(phi)
    _check_phi_rows(phi, mdp)
    return trace_value(phi, mdp, policy, kind)


def constant_term(mdp: Mdp, policy: Policy, kind: ObjectiveKind) -> float:
    """Gets the additive constant C with C − f(Φ) equal to the model-based residual:
    tr((T^π)²) for pi, Σ_a w_a tr(T_a²) for ac, and Σ_a w_a tr((T_a − T^π)²) for var."""
    (mats, weights) = target_family(mdp, policy, kind)
    return float(weights @ _trace_of_squares(mats))


###############
# MODEL-BASED #
###############

def model_based_residual(phi: FloatArray, transition: FloatArray) -> tuple[float, FloatArray]:
    """Gets the squared Frobenius error ‖T − ΦPΦᵀ‖² of the best rank-k latent model, along with P* = ΦᵀTΦ."""
    if transition.shape != (phi.shape[0], phi.shape[0]):
        raise InvalidArgumentError(f'transition has shape {transition.shape}, expected {(phi.shape[0], phi.shape[0])}')
    pred = phi.T @ transition @ phi
    resid = transition - phi @ pred @ phi.T
    return (float(np.sum(resid * resid)), cast(FloatArray, pred))


def model_based_value(phi: FloatArray, mdp: Mdp, policy: Policy, kind: ObjectiveKind) -> float:
    """Gets the weighted average of model_based_residual over an objective's target matrices."""
    check_orthonormal(phi)
    _check_phi_rows(phi, mdp)
    (mats, weights) = target_family(mdp, policy, kind)
    return float(sum(w * model_based_residual(phi, mat)[0] for (w, mat) in zip(weights, mats)))


##############
# MODEL-FREE #
##############

def _check_model_free_policy(policy: Policy, kind: ObjectiveKind) -> None:
    if (kind != ObjectiveKind.pi) and (not policy.is_uniform()):
        raise AssumptionViolationError(f'model-free {kind} value requires a uniform policy')


def model_free_value_analytic(phi: FloatArray, mdp: Mdp, policy: Policy, kind: ObjectiveKind) -> float:
    """Computes |X|·E_R[min_θ ‖MR − Φθ‖² + min_ω ‖MΦΦᵀR − Φω‖²] in closed form, for R with covariance I/|X|,
    averaged over the objective's target matrices M (T^π, T_a, or T_a − T^π).
    For a target M, with projector P = ΦΦᵀ, this is tr(Mᵀ(I−P)M) + tr(PMᵀ(I−P)MP)."""
    check_orthonormal(phi)
    _check_phi_rows(phi, mdp)
    _check_model_free_policy(policy, kind)
    (mats, weights) = target_family(mdp, policy, kind)
    proj = phi @ phi.T
    comp = np.eye(mdp.n_states) - proj
    total = 0.0
    for (w, mat) in zip(weights, mats):
        first = np.trace(mat.T @ comp @ mat)
        second = np.trace(proj @ mat.T @ comp @ mat @ proj)
        total += w * (first + second)
    return float(total)


def model_free_value_mc(
    phi: FloatArray,
    mdp: Mdp,
    policy: Policy,
    kind: ObjectiveKind,
    n_samples: int,
    seed: SeedLike,
) -> tuple[float, float]:
    """Monte Carlo estimate of model_free_value_analytic, returning (mean, standard error).
    Rewards are drawn as R ~ N(0, I/|X|), and each inner regression is solved in closed form."""
    check_orthonormal(phi)
    _check_phi_rows(phi, mdp)
    _check_model_free_policy(policy, kind)
    if n_samples < 2:
        raise InvalidArgumentError(f'n_samples must be at least 2, got {n_samples}')
    n = mdp.n_states
    rewards = as_rng(seed).normal(scale=1.0 / np.sqrt(n), size=(n, n_samples))
    (mats, weights) = target_family(mdp, policy, kind)
    proj = phi @ phi.T
    comp = np.eye(n) - proj
    draws = np.zeros(n_samples)
    for (w, mat) in zip(weights, mats):
        first = comp @ mat @ rewards
        second = comp @ mat @ proj @ rewards
        draws += w * n * (np.sum(first * first, axis=0) + np.sum(second * second, axis=0))
    return mean_and_stderr(draws)


####################
# OBJECTIVE REPORT #
####################

@dataclass(frozen=True)
class ObjectiveValue(Record):
    """An objective evaluated on one representation by each route.
    For symmetric dynamics, model_based_residual = constant_term − trace_value.
    model_free_value is unset when it is undefined (a non-uniform policy for ac or var)."""
    kind: ObjectiveKind
    trace_value: float
    constant_term: float
    model_based_residual: float
    model_free_value: Optional[float] = None

    @property
    def equivalence_gap(self) -> float:
        """Gets |C − f − model-based residual|."""
        return abs(self.constant_term - self.trace_value - self.model_based_residual)


def evaluate_objective(phi: FloatArray, mdp: Mdp, policy: Policy, kind: ObjectiveKind) -> ObjectiveValue:
    """Evaluates an objective on a representation by the trace, model-based, and model-free routes."""
    trace = trace_objective(phi, mdp, policy, kind)
    free: Optional[float] = None
    if (kind == ObjectiveKind.pi) or policy.is_uniform():
        free = model_free_value_analytic(phi, mdp, policy, kind)
    return ObjectiveValue(
        kind=kind,
        trace_value=trace,
        constant_term=constant_term(mdp, policy, kind),
        model_based_residual=model_based_value(phi, mdp, policy, kind),
        model_free_value=free,
    )


##############
# VALUE FITS #
##############

@dataclass(frozen=True)
class MseReport(Record):
    """Mean squared errors of least-squares fits of value functions onto a representation, averaged over reward draws.
    Q and advantage errors are averaged over actions. Errors for value functions not requested are unset."""
    n_samples: int
    v_mse: Optional[float] = None
    v_stderr: Optional[float] = None
    q_mse: Optional[float] = None
    q_stderr: Optional[float] = None
    adv_mse: Optional[float] = None
    adv_stderr: Optional[float] = None

    def get(self, target: ValueTarget) -> Optional[float]:
        """Gets the mean squared error for a value function."""
        return {ValueTarget.v: self.v_mse, ValueTarget.q: self.q_mse, ValueTarget.advantage: self.adv_mse}[target]


def _projection_residuals(phi: FloatArray, targets: FloatArray) -> FloatArray:
    # squared norms of (I − ΦΦᵀ)y over the state axis (axis 0), for orthonormal Φ
    resid = targets - np.tensordot(phi, np.tensordot(phi.T, targets, axes=1), axes=1)
    return cast(FloatArray, np.sum(resid * resid, axis=0))


def fit_mse(
    phi: FloatArray,
    mdp: Mdp,
    policy: Policy,
    n_reward_samples: int,
    seed: SeedLike,
    which: Sequence[ValueTarget] = tuple(ValueTarget),
    reward_scale: float = 1.0,
) -> MseReport:
    """Fits V, Q, and/or advantage functions by least squares onto the columns of Φ (one coefficient vector per action for Q and advantage).
    The MDP's own reward is replaced by n_reward_samples draws R ~ N(0, (reward_scale²/|X|)·I).
    Passing the same seed when comparing representations uses the same reward draws for each."""
    check_orthonormal(phi)
    _check_phi_rows(phi, mdp)
    check_compatible(mdp, policy)
    if n_reward_samples < 2:
        raise InvalidArgumentError(f'n_reward_samples must be at least 2, got {n_reward_samples}')
    n = mdp.n_states
    rewards = as_rng(seed).normal(scale=reward_scale / np.sqrt(n), size=(n, n_reward_samples))
    values = value_function(mdp, policy, rewards)  # (n, s)
    kwargs: dict[str, float] = {}
    if ValueTarget.v in which:
        (kwargs['v_mse'], kwargs['v_stderr']) = mean_and_stderr(_projection_residuals(phi, values))
    if (ValueTarget.q in which) or (ValueTarget.advantage in which):
        q_vals = q_function(mdp, policy, rewards)  # (n, m, s)
        if ValueTarget.q in which:
            (kwargs['q_mse'], kwargs['q_stderr']) = mean_and_stderr(_projection_residuals(phi, q_vals).mean(axis=0))
        if ValueTarget.advantage in which:
            adv = q_vals - values[:, np.newaxis]
            (kwargs['adv_mse'], kwargs['adv_stderr']) = mean_and_stderr(_projection_residuals(phi, adv).mean(axis=0))
    return MseReport(n_samples=n_reward_samples, **kwargs)
