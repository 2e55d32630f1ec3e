"""Module defining custom error types."""

from collections.abc import Iterator
from contextlib import contextmanager
from typing import TYPE_CHECKING, Optional

import numpy as np


if TYPE_CHECKING:
    from selfpred.dynamics import Trajectory


class SelfPredError(ValueError):
    """Custom error type for selfpred errors."""

class InvalidArgumentError(SelfPredError):
    """Error for invalid arguments (bad dimensions, shapes, or out-of-range parameters)."""

class InvalidMdpError(InvalidArgumentError):
    """Error that occurs when an MDP, policy, or state distribution violates its invariants."""

class RankDeficiencyError(SelfPredError):
    """Error that occurs when a latent normal equation is singular."""

class AssumptionViolationError(SelfPredError):
    """Error that occurs when an input violates an assumption required by an operation."""
    def __init__(self, msg: str, commutator_norm: Optional[float] = None) -> None:
        self.commutator_norm = commutator_norm
        super().__init__(msg)

class NonConvergenceError(SelfPredError):
    """Error that occurs when an iterative procedure fails to converge.
    Carries the final residual and, for ODE integration, the partial trajectory."""
    def __init__(self, msg: str, residual: Optional[float] = None, trajectory: Optional['Trajectory'] = None) -> None:
        self.residual = residual
        self.trajectory = trajectory
        super().__init__(msg)

class ConfigFileError(SelfPredError):
    """Error reading or writing a configuration or MDP file."""

class HarnessError(SelfPredError):
    """Error raised when an experiment cannot produce a valid result."""


@contextmanager
def catch_linalg_error(cls: type[Exception], msg: str) -> Iterator[None]:
    """Catches a numpy LinAlgError and rewraps it as an Exception of the given type."""
    try:
        yield
    except np.linalg.LinAlgError as e:
        raise cls(f'{msg}: {e}') from None
