from collections.abc import Sequence
from enum import Enum
from typing import Annotated, Any, Optional, cast

import numpy as np
import numpy.typing as npt
from pydantic import BeforeValidator, ConfigDict, PlainSerializer
import scipy.linalg
from typing_extensions import TypeAlias

from selfpred.errors import InvalidArgumentError


FloatArray: TypeAlias = npt.NDArray[np.float64]
IntArray: TypeAlias = npt.NDArray[np.int64]

# pydantic config for dataclasses holding numpy arrays
ARRAY_CONFIG = ConfigDict(arbitrary_types_allowed=True)


def _to_readonly_array(obj: Any) -> FloatArray:
    arr = np.array(obj, dtype=np.float64)
    arr.setflags(write=False)
    return arr

def _array_to_list(arr: FloatArray) -> list[Any]:
    return cast(list[Any], arr.tolist())


# float64 array field, copied on validation and frozen
ArrayField: TypeAlias = Annotated[  # type: ignore[type-arg]
    np.ndarray,
    BeforeValidator(_to_readonly_array),
    PlainSerializer(_array_to_list, return_type=list),
]


#########
# ENUMS #
#########

class StrEnum(str, Enum):
    """Enum class whose __str__ representation is just a plain string value.
    NOTE: this class exists in the standard library in Python >= 3.11."""

    def __str__(self) -> str:
        return cast(str, self.value)


###################
# STRING HANDLING #
###################

def count_fmt(n: int, name: str, plural_suffix: str = 's', plural_form: Optional[str] = None) -> str:
    """Renders an integer and item name as a string indicating how many items there are.
    For example:
        - `count_fmt(1, 'run') == "1 run"`
        - `count_fmt(3, 'run') == "3 runs"`
        - `count_fmt(3, 'matrix', plural_form='matrices') == "3 matrices"`
    """
    if n != 1:
        if plural_form is None:
            name = name + plural_suffix
        else:
            name = plural_form
    return f'{n} {name}'


##########
# RANDOM #
##########

def make_rng(seed: int, *stream: int) -> np.random.Generator:
    """Creates a random generator for the stream identified by (seed, *stream).
    Streams with different keys are statistically independent, so results never depend on the order in which streams are consumed."""
    if seed < 0 or any(s < 0 for s in stream):
        raise InvalidArgumentError(f'Seeds must be nonnegative, got {(seed, *stream)}')
    return np.random.default_rng([seed, *stream])


SeedLike: TypeAlias = int | np.random.Generator

def as_rng(seed: SeedLike) -> np.random.Generator:
    """Converts an integer seed to a random generator (generators are passed through unchanged)."""
    return seed if isinstance(seed, np.random.Generator) else make_rng(seed)


##################
# LINEAR ALGEBRA #
##################

def max_abs(arr: npt.ArrayLike) -> float:
    """Gets the entrywise max-norm of an array (0 for empty arrays)."""
    a = np.asarray(arr)
    return float(np.max(np.abs(a))) if a.size else 0.0

def symmetric_part(mat: FloatArray) -> FloatArray:
    """Gets (A + Aᵀ)/2."""
    return cast(FloatArray, 0.5 * (mat + mat.T))

def thin_orthogonal(mat: FloatArray) -> FloatArray:
    """Gets the thin orthogonal factor Q of a QR factorization of an n x k matrix.
    Columns are signed so that R has a nonnegative diagonal, which makes the map continuous (a retraction) near orthonormal inputs."""
    (q, r) = scipy.linalg.qr(mat, mode='economic')
    signs = np.sign(np.diag(r))
    signs[signs == 0] = 1.0
    return cast(FloatArray, q * signs)

def normalize_column_signs(mat: FloatArray, tol: float = 1e-12) -> FloatArray:
    """Flips column signs so that the first entry exceeding tol in absolute value is positive."""
    out = mat.copy()
    for j in range(out.shape[1]):
        nonzero = np.flatnonzero(np.abs(out[:, j]) > tol)
        if nonzero.size and (out[nonzero[0], j] < 0):
            out[:, j] = -out[:, j]
    return out

def stable_argsort_desc(scores: Sequence[float] | FloatArray) -> IntArray:
    """Sorts indices by descending score, breaking ties by lower index."""
    vals = np.asarray(scores, dtype=np.float64)
    return cast(IntArray, np.argsort(-vals, kind='stable').astype(np.int64))


##############
# STATISTICS #
##############

def mean_and_stderr(values: Sequence[float] | FloatArray, scale: float = 1.0) -> tuple[float, float]:
    """Gets the sample mean and (scaled) standard error of the mean.
    With fewer than two values the standard error is 0."""
    vals = np.asarray(values, dtype=np.float64)
    if vals.size == 0:
        return (float('nan'), 0.0)
    mean = float(vals.mean())
    if vals.size < 2:
        return (mean, 0.0)
    return (mean, scale * float(vals.std(ddof=1) / np.sqrt(vals.size)))
