from dataclasses import field
import hashlib
import json
from pathlib import Path
from typing import Annotated, Any, Optional, cast

from fancy_dataclass import ConfigDataclass, JSONBaseDataclass, TOMLDataclass
from pydantic import Field, TypeAdapter
from pydantic.dataclasses import dataclass
from typing_extensions import Doc

from selfpred import PROG
from selfpred.errors import InvalidArgumentError
from selfpred.utils import StrEnum


############
# DEFAULTS #
############

DEFAULT_GAMMA = 0.99
# identity weight of generated commuting families (½ makes every eigenvalue nonnegative)
DEFAULT_LAZINESS = 0.5
DEFAULT_EPSILONS = [0.01, 0.03, 0.1, 0.25]
# step size is h = STEP_SIZE_PER_STATE * |X| unless configured (the flow carries a 1/|X| factor)
STEP_SIZE_PER_STATE = 0.5


#########
# PATHS #
#########

def user_dir() -> Path:
    """Gets the path to the user's directory where configs are stored."""
    return Path.home() / f'.{PROG}'

def user_config_path() -> Path:
    """Gets the path to the user's config file."""
    return user_dir() / 'config.toml'


##########
# CONFIG #
##########

@dataclass
class ToleranceConfig(TOMLDataclass):
    """Numerical tolerances."""
    stochastic: Annotated[
        float,
        Doc('max deviation of a row sum from 1 for stochastic matrices'),
        Field(gt=0)
    ] = 1e-12
    symmetric: Annotated[
        float,
        Doc('max entrywise asymmetry for a matrix to count as symmetric'),
        Field(gt=0)
    ] = 1e-12
    orthogonality: Annotated[
        float,
        Doc('max entrywise deviation of ΦᵀΦ from the identity for a Representation'),
        Field(gt=0)
    ] = 1e-8
    trace_orthonormal: Annotated[
        float,
        Doc('max entrywise deviation of ΦᵀΦ from the identity when evaluating trace objectives'),
        Field(gt=0)
    ] = 1e-6
    commute: Annotated[
        float,
        Doc('max commutator norm for a family of transition matrices to share an eigenbasis'),
        Field(gt=0)
    ] = 1e-8
    tie: Annotated[
        float,
        Doc('absolute difference under which two experiment scores count as tied'),
        Field(ge=0)
    ] = 1e-9


@dataclass
class IntegratorConfig(TOMLDataclass):
    """Settings for the explicit Euler integrator of the representation ODE."""
    step_size: Annotated[
        Optional[float],
        Doc(f'Euler step size (if unset, {STEP_SIZE_PER_STATE} times the number of states)'),
        Field(gt=0)
    ] = None
    max_iters: Annotated[
        int,
        Doc('maximum number of Euler steps'),
        Field(gt=0)
    ] = 20_000
    grad_tol: Annotated[
        float,
        Doc('stop once the Frobenius norm of the flow falls below this value'),
        Field(gt=0)
    ] = 1e-9
    retraction_period: Annotated[
        int,
        Doc('re-orthonormalize every N steps (0 = never)'),
        Field(ge=0)
    ] = 100
    adaptive: Annotated[
        bool,
        Doc('halve the step whenever the trace objective decreases (symmetric dynamics only)')
    ] = True
    min_step: Annotated[
        float,
        Doc('smallest step size allowed by adaptive halving before giving up'),
        Field(gt=0)
    ] = 1e-8
    lyapunov_tol: Annotated[
        float,
        Doc('decrease of the trace objective tolerated per step'),
        Field(ge=0)
    ] = 1e-12
    snapshot_period: Annotated[
        int,
        Doc('store a snapshot of Φ every N steps (0 = first and last only)'),
        Field(ge=0)
    ] = 0

    def resolve_step_size(self, n_states: int) -> float:
        """Gets the step size to use for an MDP with the given number of states."""
        return STEP_SIZE_PER_STATE * n_states if (self.step_size is None) else self.step_size


@dataclass
class FileConfig(TOMLDataclass):
    """File configurations."""
    json_indent: Annotated[Optional[int], Doc('indentation level for JSON format')] = Field(default=2, ge=0)
    float_format: Annotated[str, Doc('format spec for floats in CSV output')] = '.17g'


@dataclass
class Config(ConfigDataclass, TOMLDataclass, doc_as_comment=True):  # type: ignore[misc]
    """Global configurations for selfpred"""
    log_level: Annotated[
        str,
        Doc('default logging level')
    ] = 'INFO'
    tolerance: ToleranceConfig = field(default_factory=ToleranceConfig)
    integrator: IntegratorConfig = field(default_factory=IntegratorConfig)
    file: FileConfig = field(default_factory=FileConfig)


def get_config() -> Config:
    """Gets the current global configurations."""
    config = Config.get_config()
    if config is None:
        config_path = user_config_path()
        if config_path.is_file():
            config = Config.load_config(config_path)
        else:  # use default config
            config = Config()
        config.update_config()  # set global value
    return config


##############
# EXPERIMENT #
##############

class OutputFormat(StrEnum):
    """File format for experiment results."""
    csv = 'csv'
    json = 'json'


@dataclass
class ExperimentConfig(JSONBaseDataclass, suppress_defaults=False, store_type='off', validate=False):
    """Settings for a batch of seeded experiments over random MDPs."""
    n_states: Annotated[int, Doc('number of states'), Field(ge=1)] = 10
    n_actions: Annotated[int, Doc('number of actions'), Field(ge=1)] = 4
    k: Annotated[int, Doc('representation dimension'), Field(ge=1)] = 4
    n_mdps: Annotated[int, Doc('number of random MDPs per table'), Field(ge=1)] = 100
    gamma: Annotated[float, Doc('discount factor'), Field(ge=0, lt=1)] = DEFAULT_GAMMA
    reward_scale: Annotated[float, Doc('scale of the isotropic Gaussian reward'), Field(gt=0)] = 1.0
    laziness: Annotated[float, Doc('identity weight mixed into each generated transition matrix'), Field(ge=0, le=1)] = 0.0
    seed: Annotated[int, Doc('master random seed'), Field(ge=0)] = 0
    integrator: IntegratorConfig = field(default_factory=IntegratorConfig)
    epsilon_list: Annotated[list[float], Doc('policy perturbation levels for the robustness table')] = field(default_factory=lambda: list(DEFAULT_EPSILONS))
    n_reward_samples: Annotated[int, Doc('reward draws per MDP for value fits'), Field(ge=2)] = 1000
    n_runs_robustness: Annotated[int, Doc('runs per perturbation level in the robustness table'), Field(ge=1)] = 200
    symmetric: Annotated[bool, Doc('whether generated per-action dynamics are symmetric')] = True
    curve_stride: Annotated[int, Doc('record every N-th iteration of trace-ratio curves'), Field(ge=1)] = 10
    n_workers: Annotated[int, Doc('number of worker processes (results are merged in instance order)'), Field(ge=1)] = 1
    output_dir: Annotated[str, Doc('directory for result files')] = 'results'
    format: Annotated[OutputFormat, Doc('format of result tables')] = OutputFormat.csv

    def __post_init__(self) -> None:
        if self.k > self.n_states:
            raise InvalidArgumentError(f'Representation dimension k={self.k} exceeds number of states {self.n_states}')
        for eps in self.epsilon_list:
            if not (0.0 <= eps <= 1.0):
                raise InvalidArgumentError(f'Perturbation level {eps} is outside [0, 1]')

    def canonical_dict(self) -> dict[str, Any]:
        """Gets the configuration as a dict of plain JSON values (unset options are None)."""
        return cast(dict[str, Any], TypeAdapter(type(self)).dump_python(self, mode='json'))

    def canonical_json(self) -> str:
        """Gets a canonical JSON string for the configuration (sorted keys, no whitespace)."""
        return json.dumps(self.canonical_dict(), sort_keys=True, separators=(',', ':'))

    @property
    def config_hash(self) -> str:
        """Gets the SHA-256 hash of the canonical JSON configuration."""
        return hashlib.sha256(self.canonical_json().encode()).hexdigest()

    @property
    def output_path(self) -> Path:
        """Gets the output directory as a Path."""
        return Path(self.output_dir)
