from pathlib import Path
import re

import numpy as np

from selfpred.config import ExperimentConfig, IntegratorConfig
from selfpred.dynamics import orthogonal_init
from selfpred.utils import FloatArray


TEST_DIR = Path(__file__).parent


def match_patterns(patterns, string, exact=False):
    """Matches one or more regexes on a string."""
    if patterns is None:
        return
    if not isinstance(patterns, (list, tuple)):
        patterns = [patterns]
    for pattern in patterns:
        if exact:
            assert pattern == string
        else:
            assert re.compile(pattern, re.DOTALL).search(string), f'pattern {pattern!r} not found'

def is_symmetric(mat: FloatArray, tol: float) -> bool:
    """Returns True if a square matrix equals its transpose to within tol (max-norm)."""
    return (mat.ndim == 2) and (mat.shape[0] == mat.shape[1]) and bool(np.max(np.abs(mat - mat.T)) < tol)

def random_orthonormal(n: int, k: int, seed: int) -> FloatArray:
    """Draws a random n x k matrix with orthonormal columns."""
    return orthogonal_init(n, k, seed).phi

def fd_gradient(func, phi: FloatArray, eps: float = 1e-6) -> FloatArray:
    """Central finite-difference gradient of a scalar function of a matrix."""
    grad = np.zeros_like(phi)
    for idx in np.ndindex(*phi.shape):
        step = np.zeros_like(phi)
        step[idx] = eps
        grad[idx] = (func(phi + step) - func(phi - step)) / (2 * eps)
    return grad

def small_experiment(**kwargs) -> ExperimentConfig:
    """Gets an experiment configuration small enough to run in a unit test."""
    params = {
        'n_states': 5,
        'n_actions': 2,
        'k': 2,
        'n_mdps': 3,
        'n_reward_samples': 50,
        'n_runs_robustness': 3,
        'epsilon_list': [0.1, 0.25],
        'curve_stride': 5,
        'integrator': IntegratorConfig(max_iters=300, grad_tol=1e-7),
        **kwargs,
    }
    return ExperimentConfig(**params)
