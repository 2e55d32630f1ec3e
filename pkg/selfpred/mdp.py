"""Tabular MDPs, policies, state distributions, random generators, and exact value functions."""

from itertools import combinations
import json
from pathlib import Path
from typing import Any, Optional, cast

import numpy as np
from pydantic import ValidationError
from pydantic.dataclasses import dataclass
import scipy.linalg
from typing_extensions import Self

from selfpred.config import DEFAULT_GAMMA, DEFAULT_LAZINESS, get_config
from selfpred.errors import ConfigFileError, InvalidArgumentError, InvalidMdpError, NonConvergenceError, SelfPredError, catch_linalg_error
from selfpred.io import AnyPath, JSONReadable, JSONWritable
from selfpred.utils import ARRAY_CONFIG, ArrayField, FloatArray, SeedLike, as_rng, max_abs


SINKHORN_TOL = 1e-12
SINKHORN_MAX_ITERS = 10_000


def _check_stochastic_rows(name: str, mat: FloatArray, tol: float) -> None:
    if np.any(mat < 0):
        raise InvalidMdpError(f'{name} has negative entries')
    dev = max_abs(mat.sum(axis=-1) - 1.0)
    if dev > tol:
        raise InvalidMdpError(f'{name} row sums deviate from 1 by {dev:.3g}')


def _check_dims(**dims: int) -> None:
    for (name, val) in dims.items():
        if val < 1:
            raise InvalidArgumentError(f'{name} must be a positive integer, got {val}')


#########
# TYPES #
#########

@dataclass(frozen=True, eq=False, config=ARRAY_CONFIG)
class Mdp(JSONReadable, JSONWritable):
    """A finite MDP with per-action transition matrices T_a (stacked as an array of shape (n_actions, n_states, n_states)),
    a state reward vector R, and a discount factor γ.
    If symmetric is True, every T_a must equal its transpose (and is therefore doubly stochastic)."""
    transitions: ArrayField
    reward: ArrayField
    gamma: float = DEFAULT_GAMMA
    symmetric: bool = False

    def __post_init__(self) -> None:
        tols = get_config().tolerance
        if self.transitions.ndim != 3:
            raise InvalidMdpError(f'transitions must be a 3-dimensional array, got {self.transitions.ndim} dimension(s)')
        (m, n, n2) = self.transitions.shape
        if (m < 1) or (n < 1) or (n != n2):
            raise InvalidMdpError(f'transitions must have shape (n_actions, n_states, n_states), got {self.transitions.shape}')
        if self.reward.shape != (n,):
            raise InvalidMdpError(f'reward has shape {self.reward.shape}, expected {(n,)}')
        if not (0.0 <= self.gamma < 1.0):
            raise InvalidMdpError(f'gamma must be in [0, 1), got {self.gamma}')
        for (a, mat) in enumerate(self.transitions):
            _check_stochastic_rows(f'T_{a}', mat, tols.stochastic)
            if self.symmetric:
                asym = max_abs(mat - mat.T)
                if asym >= tols.symmetric:
                    raise InvalidMdpError(f'T_{a} is flagged symmetric but has asymmetry {asym:.3g}')

    @property
    def n_states(self) -> int:
        """Gets the number of states."""
        return int(self.transitions.shape[1])

    @property
    def n_actions(self) -> int:
        """Gets the number of actions."""
        return int(self.transitions.shape[0])

    @property
    def is_symmetric(self) -> bool:
        """Returns True if every T_a is symmetric to within the configured tolerance."""
        tol = get_config().tolerance.symmetric
        return all(max_abs(mat - mat.T) < tol for mat in self.transitions)

    def max_commutator(self) -> float:
        """Gets the max-norm of T_a T_b − T_b T_a over all pairs of actions (0 for a single action)."""
        return max((max_abs(ta @ tb - tb @ ta) for (ta, tb) in combinations(self.transitions, 2)), default=0.0)

    def mean_transition(self, weights: Optional[FloatArray] = None) -> FloatArray:
        """Gets Σ_a w_a T_a for a probability vector of action weights (uniform by default)."""
        if weights is None:
            return cast(FloatArray, self.transitions.mean(axis=0))
        w = check_action_weights(weights, self.n_actions)
        return cast(FloatArray, np.einsum('a,axy->xy', w, self.transitions))

    @classmethod
    def from_json_obj(cls, obj: Any) -> Self:
        """Constructs an MDP from a JSON object with keys n_states, n_actions, gamma, reward, transitions."""
        if not isinstance(obj, dict):
            raise InvalidMdpError(f'MDP JSON must be an object, got {type(obj).__name__}')
        missing = [key for key in ('gamma', 'reward', 'transitions') if (key not in obj)]
        if missing:
            raise InvalidMdpError(f'MDP JSON is missing key(s): {", ".join(missing)}')
        mdp = cls(transitions=obj['transitions'], reward=obj['reward'], gamma=obj['gamma'], symmetric=obj.get('symmetric', False))
        for key in ('n_states', 'n_actions'):
            if (key in obj) and (obj[key] != getattr(mdp, key)):
                raise InvalidMdpError(f'{key}={obj[key]} does not match the transition matrices ({getattr(mdp, key)})')
        return mdp

    def to_json_obj(self) -> dict[str, Any]:
        """Converts the MDP to a JSON object (arrays are row-major nested lists)."""
        return {
            'n_states': self.n_states,
            'n_actions': self.n_actions,
            'gamma': self.gamma,
            'symmetric': self.symmetric,
            'reward': self.reward,
            'transitions': self.transitions,
        }


def load_mdp(path: AnyPath) -> Mdp:
    """Loads an MDP from a JSON file."""
    path = Path(path)
    if not path.exists():
        raise ConfigFileError(f'MDP file {path} does not exist')
    try:
        return Mdp.load(path)
    except (json.JSONDecodeError, OSError, ValidationError, InvalidMdpError) as e:
        raise ConfigFileError(f'When loading MDP JSON {path}: {e}') from None


@dataclass(frozen=True, eq=False, config=ARRAY_CONFIG)
class Policy:
    """A stochastic policy π, stored as an (n_states, n_actions) matrix whose rows are action distributions."""
    probs: ArrayField

    def __post_init__(self) -> None:
        if (self.probs.ndim != 2) or (self.probs.size == 0):
            raise InvalidMdpError(f'policy must be a nonempty (n_states, n_actions) matrix, got shape {self.probs.shape}')
        _check_stochastic_rows('policy', self.probs, get_config().tolerance.stochastic)

    @property
    def n_states(self) -> int:
        """Gets the number of states."""
        return int(self.probs.shape[0])

    @property
    def n_actions(self) -> int:
        """Gets the number of actions."""
        return int(self.probs.shape[1])

    def is_state_independent(self, tol: float = 1e-12) -> bool:
        """Returns True if every state has the same action distribution."""
        return max_abs(self.probs - self.probs[0]) <= tol

    def is_uniform(self, tol: float = 1e-12) -> bool:
        """Returns True if every entry equals 1/n_actions."""
        return max_abs(self.probs - 1.0 / self.n_actions) <= tol

    def action_weights(self, dist: Optional['StateDistribution'] = None) -> FloatArray:
        """Gets the marginal action probabilities w_a = Σ_x d(x) π(a|x) under a state distribution (uniform by default)."""
        if dist is None:
            return cast(FloatArray, self.probs.mean(axis=0))
        dist.check_n_states(self.n_states)
        return cast(FloatArray, dist.weights @ self.probs)


@dataclass(frozen=True, eq=False, config=ARRAY_CONFIG)
class StateDistribution:
    """A probability distribution d over states, from which the one-hot input states are sampled."""
    weights: ArrayField

    def __post_init__(self) -> None:
        if (self.weights.ndim != 1) or (self.weights.size == 0):
            raise InvalidMdpError(f'state distribution must be a nonempty vector, got shape {self.weights.shape}')
        _check_stochastic_rows('state distribution', self.weights, get_config().tolerance.stochastic)

    @classmethod
    def uniform(cls, n_states: int) -> Self:
        """Constructs the uniform distribution over n_states states."""
        _check_dims(n_states=n_states)
        return cls(np.full(n_states, 1.0 / n_states))

    @property
    def n_states(self) -> int:
        """Gets the number of states."""
        return int(self.weights.size)

    @property
    def diag(self) -> FloatArray:
        """Gets the diagonal matrix D = diag(d)."""
        return np.diag(self.weights)

    def check_n_states(self, n_states: int) -> None:
        """Raises an InvalidArgumentError if the distribution is not over the given number of states."""
        if self.n_states != n_states:
            raise InvalidArgumentError(f'state distribution has {self.n_states} states, expected {n_states}')


def check_action_weights(weights: Any, n_actions: int, tol: float = 1e-12) -> FloatArray:
    """Validates a probability vector over actions, returning it as a float array."""
    w = np.asarray(weights, dtype=np.float64)
    if w.shape != (n_actions,):
        raise InvalidArgumentError(f'action weights have shape {w.shape}, expected {(n_actions,)}')
    if np.any(w < 0) or (abs(w.sum() - 1.0) > tol):
        raise InvalidArgumentError(f'action weights must be a probability vector, got sum {w.sum():.17g}')
    return w


def check_compatible(mdp: Mdp, policy: Policy) -> None:
    """Raises an InvalidArgumentError if a policy's shape does not match an MDP."""
    if (policy.n_states, policy.n_actions) != (mdp.n_states, mdp.n_actions):
        raise InvalidArgumentError(f'policy has shape {policy.probs.shape}, expected {(mdp.n_states, mdp.n_actions)}')


############
# POLICIES #
############

def make_uniform_policy(n_states: int, n_actions: int) -> Policy:
    """Constructs the policy choosing every action with probability 1/n_actions."""
    _check_dims(n_states=n_states, n_actions=n_actions)
    return Policy(np.full((n_states, n_actions), 1.0 / n_actions))


def make_deterministic_policy(n_states: int, n_actions: int, seed: SeedLike) -> Policy:
    """Constructs a policy choosing one uniformly random action per state with probability 1."""
    _check_dims(n_states=n_states, n_actions=n_actions)
    actions = as_rng(seed).integers(n_actions, size=n_states)
    return Policy(np.eye(n_actions)[actions])


def make_random_policy(n_states: int, n_actions: int, seed: SeedLike, concentration: float = 1.0) -> Policy:
    """Constructs a policy whose rows are independent Dirichlet(concentration) draws."""
    _check_dims(n_states=n_states, n_actions=n_actions)
    if concentration <= 0:
        raise InvalidArgumentError(f'concentration must be positive, got {concentration}')
    probs = as_rng(seed).dirichlet(np.full(n_actions, concentration), size=n_states)
    # renormalize to remove rounding in the Dirichlet sampler
    return Policy(probs / probs.sum(axis=1, keepdims=True))


def mix_policies(policy: Policy, other: Policy, epsilon: float) -> Policy:
    """Gets the mixture (1−ε)·policy + ε·other."""
    if not (0.0 <= epsilon <= 1.0):
        raise InvalidArgumentError(f'epsilon must be in [0, 1], got {epsilon}')
    if policy.probs.shape != other.probs.shape:
        raise InvalidArgumentError(f'cannot mix policies of shapes {policy.probs.shape} and {other.probs.shape}')
    return Policy((1.0 - epsilon) * policy.probs + epsilon * other.probs)


def perturb_policy(policy: Policy, epsilon: float) -> Policy:
    """Gets the ε-greedy perturbation (1−ε)·policy + ε·uniform."""
    return mix_policies(policy, make_uniform_policy(policy.n_states, policy.n_actions), epsilon)


##############
# GENERATORS #
##############

def _sinkhorn_symmetric(mat: FloatArray, tol: float, max_iters: int) -> FloatArray:
    # symmetric scaling diag(x)·A·diag(x), with the damped fixed-point update x ← sqrt(x / Ax)
    x = np.ones(mat.shape[0])
    residual = np.inf
    for _ in range(max_iters):
        scaled = x[:, None] * mat * x[None, :]
        scaled = 0.5 * (scaled + scaled.T)
        residual = max_abs(scaled.sum(axis=1) - 1.0)
        if residual < tol:
            return cast(FloatArray, scaled)
        x = np.sqrt(x / (mat @ x))
    raise NonConvergenceError(f'Symmetric Sinkhorn scaling did not converge in {max_iters} iterations (residual {residual:.3g})', residual=residual)


def _symmetric_stochastic(n: int, rng: np.random.Generator, tol: float, max_iters: int) -> FloatArray:
    if n == 1:
        return np.ones((1, 1))
    draw = rng.uniform(size=(n, n))
    return _sinkhorn_symmetric(0.5 * (draw + draw.T), tol, max_iters)


def gen_symmetric_stochastic(n: int, seed: SeedLike, tol: float = SINKHORN_TOL, max_iters: int = SINKHORN_MAX_ITERS) -> FloatArray:
    """Generates a random symmetric (hence doubly) stochastic n x n matrix.
    A strictly positive symmetric matrix is drawn uniformly, then scaled symmetrically until its row sums are within tol of 1.
    Raises a NonConvergenceError (carrying the final residual) if this takes more than max_iters iterations."""
    _check_dims(n=n)
    if tol <= 0:
        raise InvalidArgumentError(f'tol must be positive, got {tol}')
    return _symmetric_stochastic(n, as_rng(seed), tol, max_iters)


def _random_stochastic(n: int, rng: np.random.Generator) -> FloatArray:
    draw = rng.uniform(size=(n, n))
    return cast(FloatArray, draw / draw.sum(axis=1, keepdims=True))


def _random_reward(n: int, rng: np.random.Generator, reward_scale: float) -> FloatArray:
    return cast(FloatArray, rng.normal(scale=reward_scale / np.sqrt(n), size=n))


def _check_laziness(laziness: float) -> None:
    if not (0.0 <= laziness <= 1.0):
        raise InvalidArgumentError(f'laziness must be in [0, 1], got {laziness}')


def make_lazy(transitions: FloatArray, laziness: float) -> FloatArray:
    """Gets l·I + (1 − l)·T for each transition matrix T (stacked along the first axis), where l is the laziness.
    This keeps rows stochastic, symmetry, and eigenvectors; eigenvalues of symmetric T in [−1, 1] move to [2l − 1, 1],
    so laziness ≥ ½ makes symmetric dynamics positive semidefinite."""
    _check_laziness(laziness)
    if laziness == 0.0:
        return transitions
    return cast(FloatArray, laziness * np.eye(transitions.shape[-1]) + (1.0 - laziness) * transitions)


def symmetric_shift(n: int, shift: int) -> FloatArray:
    """Gets the symmetric circulant (C^s + C^{-s})/2, where C is the n x n cyclic shift."""
    cyc = np.roll(np.eye(n), shift, axis=1)
    return cast(FloatArray, 0.5 * (cyc + cyc.T))


def gen_common_eigenbasis_family(
    n: int,
    m: int,
    seed: SeedLike,
    laziness: float = DEFAULT_LAZINESS,
    reward_scale: float = 1.0,
    gamma: float = DEFAULT_GAMMA,
) -> Mdp:
    """Generates an MDP whose m transition matrices are random symmetric circulants.
    Each T_a is a Dirichlet-weighted convex combination of the matrices (C^s + C^{-s})/2 for s = 0, ..., n // 2,
    made lazy by mixing in the identity with weight laziness (see make_lazy).
    Every T_a is symmetric and stochastic, and all of them commute (sharing the real Fourier eigenbasis).
    With the default laziness of ½ every eigenvalue is nonnegative; otherwise the trace objectives can have
    local maxima away from their top-k eigenvectors."""
    _check_dims(m=m)
    _check_laziness(laziness)
    if n < 2:
        raise InvalidArgumentError(f'common eigenbasis family needs at least 2 states, got {n}')
    rng = as_rng(seed)
    basis = np.stack([symmetric_shift(n, s) for s in range(n // 2 + 1)])
    weights = rng.dirichlet(np.ones(len(basis)), size=m)
    transitions = make_lazy(np.einsum('as,sxy->axy', weights, basis), laziness)
    reward = _random_reward(n, rng, reward_scale)
    return Mdp(transitions=transitions, reward=reward, gamma=gamma, symmetric=True)


def gen_random_mdp(
    n: int,
    m: int,
    seed: SeedLike,
    symmetric: bool = True,
    laziness: float = 0.0,
    reward_scale: float = 1.0,
    gamma: float = DEFAULT_GAMMA,
) -> Mdp:
    """Generates a random MDP with n states and m actions.
    If symmetric is True, each T_a comes from gen_symmetric_stochastic; otherwise each row is a normalized uniform draw.
    A positive laziness mixes the identity into each T_a (see make_lazy).
    The reward is Gaussian with covariance (reward_scale²/n)·I."""
    _check_dims(n=n, m=m)
    _check_laziness(laziness)
    if reward_scale <= 0:
        raise InvalidArgumentError(f'reward_scale must be positive, got {reward_scale}')
    rng = as_rng(seed)
    if symmetric:
        mats = [_symmetric_stochastic(n, rng, SINKHORN_TOL, SINKHORN_MAX_ITERS) for _ in range(m)]
    else:
        mats = [_random_stochastic(n, rng) for _ in range(m)]
    reward = _random_reward(n, rng, reward_scale)
    return Mdp(transitions=make_lazy(np.stack(mats), laziness), reward=reward, gamma=gamma, symmetric=symmetric)


###################
# VALUE FUNCTIONS #
###################

def induced_transition(mdp: Mdp, policy: Policy) -> FloatArray:
    """Gets the state-to-state transition matrix T^π, whose row x is Σ_a π(a|x) T_a[x]."""
    check_compatible(mdp, policy)
    return cast(FloatArray, np.einsum('xa,axy->xy', policy.probs, mdp.transitions))


def _resolve_reward(mdp: Mdp, reward: Optional[FloatArray]) -> FloatArray:
    if reward is None:
        return cast(FloatArray, mdp.reward)
    r = np.asarray(reward, dtype=np.float64)
    if (r.ndim not in (1, 2)) or (r.shape[0] != mdp.n_states):
        raise InvalidArgumentError(f'reward has shape {r.shape}, expected ({mdp.n_states},) or ({mdp.n_states}, n_samples)')
    return r


def value_function(mdp: Mdp, policy: Policy, reward: Optional[FloatArray] = None) -> FloatArray:
    """Gets V^π = (I − γT^π)⁻¹ R.
    reward overrides the MDP's reward; it may be a matrix whose columns are separate reward vectors."""
    r = _resolve_reward(mdp, reward)
    lhs = np.eye(mdp.n_states) - mdp.gamma * induced_transition(mdp, policy)
    with catch_linalg_error(SelfPredError, 'Singular Bellman system (internal error)'):
        return cast(FloatArray, scipy.linalg.solve(lhs, r))


def q_function(mdp: Mdp, policy: Policy, reward: Optional[FloatArray] = None) -> FloatArray:
    """Gets the (n_states, n_actions) matrix whose column a is Q_a^π = R + γ T_a V^π.
    With a matrix of rewards, the result has shape (n_states, n_actions, n_samples)."""
    r = _resolve_reward(mdp, reward)
    v = value_function(mdp, policy, r)
    return cast(FloatArray, r[:, np.newaxis] + mdp.gamma * np.einsum('axy,y...->xa...', mdp.transitions, v))


def advantage_function(mdp: Mdp, policy: Policy, reward: Optional[FloatArray] = None) -> FloatArray:
    """Gets the (n_states, n_actions) matrix whose column a is A_a^π = Q_a^π − V^π."""
    r = _resolve_reward(mdp, reward)
    v = value_function(mdp, policy, r)
    q = r[:, np.newaxis] + mdp.gamma * np.einsum('axy,y...->xa...', mdp.transitions, v)
    return cast(FloatArray, q - v[:, np.newaxis])

