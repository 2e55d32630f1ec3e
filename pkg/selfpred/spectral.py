"""Eigendecompositions of transition matrices, the per-objective eigenvalue criteria, and subspace distances."""

from itertools import combinations
from typing import Any, Optional, cast

import numpy as np
from pydantic.dataclasses import dataclass
import scipy.linalg

from selfpred import logger
from selfpred.config import get_config
from selfpred.errors import AssumptionViolationError, InvalidArgumentError
from selfpred.io import JSONWritable
from selfpred.mdp import Mdp, check_action_weights
from selfpred.objectives import ObjectiveKind
from selfpred.utils import ARRAY_CONFIG, ArrayField, FloatArray, StrEnum, max_abs, normalize_column_signs, stable_argsort_desc, thin_orthogonal


SYMMETRIC_EIG_TOL = 1e-10
# relative gap under which eigenvalues of the averaged matrix are treated as one cluster
CLUSTER_TOL = 1e-8
# max deviation of ΦᵀΦ from I for principal angle inputs
PRINCIPAL_ANGLE_ORTHO_TOL = 1e-6
# swap curvatures up to this value count as flat
SWAP_TOL = 1e-12


class Criterion(StrEnum):
    """Per-eigenvector scores by which each objective ranks the shared eigenvectors of the transition matrices."""
    square_of_mean = 'square-of-mean'
    mean_of_squares = 'mean-of-squares'
    variance = 'variance'

    @classmethod
    def for_objective(cls, kind: ObjectiveKind) -> 'Criterion':
        """Gets the criterion whose top-k eigenvectors maximize an objective's trace."""
        return _KIND_CRITERIA[ObjectiveKind(kind)]


_KIND_CRITERIA = {
    ObjectiveKind.pi: Criterion.square_of_mean,
    ObjectiveKind.ac: Criterion.mean_of_squares,
    ObjectiveKind.var: Criterion.variance,
}


######################
# EIGENDECOMPOSITION #
######################

def sym_eigendecomposition(mat: FloatArray, tol: float = SYMMETRIC_EIG_TOL) -> tuple[FloatArray, FloatArray]:
    """Diagonalizes a symmetric matrix as T = Q diag(λ) Qᵀ.
    Returns (Q, λ) with eigenvalues in descending order and each eigenvector's first nonzero entry positive.
    Raises an InvalidArgumentError if the matrix is not symmetric to within tol."""
    if (mat.ndim != 2) or (mat.shape[0] != mat.shape[1]):
        raise InvalidArgumentError(f'expected a square matrix, got shape {mat.shape}')
    asym = max_abs(mat - mat.T)
    if asym > tol:
        raise InvalidArgumentError(f'matrix is not symmetric (max asymmetry {asym:.3g})')
    (vals, vecs) = scipy.linalg.eigh(0.5 * (mat + mat.T))
    order = np.arange(len(vals))[::-1]
    return (normalize_column_signs(vecs[:, order]), cast(FloatArray, vals[order]))


def _eigen_clusters(vals: FloatArray) -> list[list[int]]:
    # groups indices of (sorted) eigenvalues whose consecutive gaps are negligible
    scale = max(1.0, max_abs(vals))
    clusters = [[0]]
    for i in range(1, len(vals)):
        if abs(vals[i - 1] - vals[i]) <= CLUSTER_TOL * scale:
            clusters[-1].append(i)
        else:
            clusters.append([i])
    return clusters


def _refine_clusters(basis: FloatArray, avg_vals: FloatArray, transitions: FloatArray) -> FloatArray:
    # within a repeated eigenvalue of the average, rotate the basis to diagonalize a differently weighted combination
    m = len(transitions)
    generic = np.einsum('a,axy->xy', np.arange(1, m + 1) / m, transitions)
    basis = basis.copy()
    for cluster in _eigen_clusters(avg_vals):
        if len(cluster) > 1:
            sub = basis[:, cluster]
            (_, rot) = scipy.linalg.eigh(sub.T @ generic @ sub)
            basis[:, cluster] = sub @ rot[:, ::-1]
    return basis


def criterion_scores(eigvals: FloatArray, weights: Optional[FloatArray] = None) -> dict[Criterion, FloatArray]:
    """Given an (n_actions, n) array of per-action eigenvalues λ_{a,i} and action weights w (uniform by default), computes per index i:
        - square-of-mean: (Σ_a w_a λ_{a,i})²
        - mean-of-squares: Σ_a w_a λ_{a,i}²
        - variance: Σ_a w_a (λ_{a,i} − Σ_b w_b λ_{b,i})², equal to mean-of-squares minus square-of-mean"""
    lam = np.asarray(eigvals, dtype=np.float64)
    if lam.ndim != 2:
        raise InvalidArgumentError(f'eigenvalues must be an (n_actions, n) array, got shape {lam.shape}')
    m = lam.shape[0]
    w = np.full(m, 1.0 / m) if (weights is None) else check_action_weights(weights, m)
    mean = w @ lam
    return {
        Criterion.square_of_mean: mean ** 2,
        Criterion.mean_of_squares: w @ (lam ** 2),
        Criterion.variance: w @ ((lam - mean) ** 2),
    }


def topk_indices(scores: FloatArray, k: int) -> list[int]:
    """Gets the indices of the k largest scores, in descending score order (ties go to the lower index)."""
    if not (1 <= k <= len(scores)):
        raise InvalidArgumentError(f'need 1 <= k <= {len(scores)}, got k={k}')
    return [int(i) for i in stable_argsort_desc(scores)[:k]]


###################
# SPECTRAL REPORT #
###################

@dataclass(frozen=True, eq=False, config=ARRAY_CONFIG)
class SpectralReport(JSONWritable):
    """Shared eigenbasis of a commuting family of symmetric transition matrices, T_a = Q diag(λ_a) Qᵀ.
    eigvals has one row of eigenvalues per action, aligned with the columns of the basis.
    leakage is the largest off-diagonal entry of any QᵀT_aQ."""
    basis: ArrayField
    eigvals: ArrayField
    weights: ArrayField
    criterion_scores: dict[Criterion, ArrayField]
    topk_indices: dict[Criterion, list[int]]
    leakage: float = 0.0

    @property
    def n_states(self) -> int:
        """Gets the dimension of the state space."""
        return int(self.basis.shape[0])

    def reconstruct(self, action: int) -> FloatArray:
        """Gets Q diag(λ_a) Qᵀ for an action."""
        return cast(FloatArray, (self.basis * self.eigvals[action]) @ self.basis.T)

    def to_json_obj(self) -> dict[str, Any]:
        """Converts the report to a JSON object."""
        return {
            'basis': self.basis,
            'eigvals': self.eigvals,
            'weights': self.weights,
            'leakage': self.leakage,
            'criterion_scores': {str(crit): scores for (crit, scores) in self.criterion_scores.items()},
            'topk_indices': {str(crit): idx for (crit, idx) in self.topk_indices.items()},
        }


def joint_eigendecomposition(mdp: Mdp, k: Optional[int] = None, weights: Optional[FloatArray] = None) -> SpectralReport:
    """Finds one orthogonal basis Q diagonalizing every (symmetric) T_a, by diagonalizing the weighted average Σ_a w_a T_a.
    The per-action eigenvalues are read off as diag(QᵀT_aQ), and each criterion is scored (with action weights w, uniform by default).
    If k is given, the top-k indices for each criterion are included.
    Raises an AssumptionViolationError if some pair of matrices fails to commute."""
    tol = get_config().tolerance.commute
    comm = mdp.max_commutator()
    if comm > tol:
        raise AssumptionViolationError(f'transition matrices do not commute (max commutator norm {comm:.3g})', commutator_norm=comm)
    w = np.full(mdp.n_actions, 1.0 / mdp.n_actions) if (weights is None) else check_action_weights(weights, mdp.n_actions)
    (basis, avg_vals) = sym_eigendecomposition(mdp.mean_transition(w))
    if mdp.n_actions > 1:
        basis = normalize_column_signs(_refine_clusters(basis, avg_vals, cast(FloatArray, mdp.transitions)))
    diagonalized = np.einsum('xi,axy,yj->aij', basis, mdp.transitions, basis)
    eigvals = np.stack([np.diag(mat) for mat in diagonalized])
    off_diag = diagonalized - np.stack([np.diag(vals) for vals in eigvals])
    leakage = max_abs(off_diag)
    if leakage > tol:
        logger.warning(f'Joint diagonalization leaves off-diagonal entries up to {leakage:.3g}')
    scores = criterion_scores(eigvals, w)
    topk = {} if (k is None) else {crit: topk_indices(vals, k) for (crit, vals) in scores.items()}
    return SpectralReport(basis=basis, eigvals=eigvals, weights=w, criterion_scores=scores, topk_indices=topk, leakage=leakage)


def topk_subspace(report: SpectralReport, criterion: Criterion, k: int) -> FloatArray:
    """Gets the n x k matrix of eigenvectors at the k largest scores of a criterion (ties go to the lower eigen-index)."""
    idx = topk_indices(report.criterion_scores[Criterion(criterion)], k)
    return cast(FloatArray, report.basis[:, idx])


def topk_eigenvectors(mat: FloatArray, k: int) -> FloatArray:
    """Gets the n x k matrix of eigenvectors of a symmetric matrix with the k largest eigenvalues."""
    (basis, vals) = sym_eigendecomposition(mat)
    return cast(FloatArray, basis[:, topk_indices(vals, k)])


####################
# EIGENVECTOR SETS #
####################

def criterion_gram(eigvals: FloatArray, criterion: Criterion, weights: Optional[FloatArray] = None) -> FloatArray:
    """Given an (n_actions, n) array of per-action eigenvalues, gets the n x n matrix K of pairwise criterion products:
    μ_iμ_j for square-of-mean (μ the weighted mean eigenvalue), Σ_a w_a λ_{a,i}λ_{a,j} for mean-of-squares, and the
    weighted covariance over actions for variance. The diagonal of K holds the criterion scores."""
    lam = np.asarray(eigvals, dtype=np.float64)
    m = lam.shape[0]
    w = np.full(m, 1.0 / m) if (weights is None) else check_action_weights(weights, m)
    mean = w @ lam
    criterion = Criterion(criterion)
    if criterion == Criterion.square_of_mean:
        return cast(FloatArray, np.outer(mean, mean))
    if criterion == Criterion.mean_of_squares:
        return cast(FloatArray, (w[:, np.newaxis] * lam).T @ lam)
    centered = lam - mean
    return cast(FloatArray, (w[:, np.newaxis] * centered).T @ centered)


def swap_curvatures(report: SpectralReport, criterion: Criterion) -> FloatArray:
    """Gets the n x n matrix G with G[i, j] = K[i, j] − K[i, i] (K from criterion_gram).
    Rotating a selected eigenvector i toward an unselected eigenvector j by angle θ changes the objective's trace
    by 2·G[i, j]·θ² to second order, so a set of eigenvectors is a local maximum of the trace objective iff
    G[i, j] ≤ 0 for every selected i and unselected j."""
    gram = criterion_gram(report.eigvals, criterion, report.weights)
    return cast(FloatArray, gram - np.diag(gram)[:, np.newaxis])


def stable_eigen_subsets(report: SpectralReport, criterion: Criterion, k: int, tol: float = SWAP_TOL) -> list[list[int]]:
    """Gets every k-subset of shared eigenvectors (as sorted index lists) at which the trace objective has a local
    maximum, i.e. no swap curvature exceeds tol. These are where trajectories from generic initializations can settle."""
    n = report.n_states
    if not (1 <= k <= n):
        raise InvalidArgumentError(f'need 1 <= k <= {n}, got k={k}')
    curv = swap_curvatures(report, criterion)
    stable = []
    for subset in combinations(range(n), k):
        rest = [j for j in range(n) if (j not in subset)]
        if (not rest) or (np.max(curv[np.ix_(subset, rest)]) <= tol):
            stable.append(list(subset))
    return stable


def spurious_maxima(report: SpectralReport, criterion: Criterion, k: int, tol: float = SWAP_TOL) -> list[list[int]]:
    """Gets the stable k-subsets of shared eigenvectors whose trace value falls short of the top-k value by more than tol.
    If this is empty, the dynamics can only settle on a maximizer of the trace objective."""
    scores = report.criterion_scores[Criterion(criterion)]
    best = float(np.sum(scores[topk_indices(scores, k)]))
    return [subset for subset in stable_eigen_subsets(report, criterion, k, tol) if (float(np.sum(scores[subset])) < best - tol)]


#####################
# SUBSPACE DISTANCE #
#####################

@dataclass(frozen=True, eq=False, config=ARRAY_CONFIG)
class SubspaceDistance:
    """Principal angles (ascending, in [0, π/2]) between two k-dimensional subspaces, and their Grassmann distance √Σθ_i²."""
    principal_angles: ArrayField
    grassmann: float


def _orthonormalize_input(name: str, phi: FloatArray) -> FloatArray:
    if phi.ndim != 2:
        raise InvalidArgumentError(f'{name} must be a matrix, got shape {phi.shape}')
    dev = max_abs(phi.T @ phi - np.eye(phi.shape[1]))
    if dev > PRINCIPAL_ANGLE_ORTHO_TOL:
        raise InvalidArgumentError(f'{name} does not have orthonormal columns (max |ΦᵀΦ − I| = {dev:.3g})')
    return thin_orthogonal(phi)


def principal_angles(phi1: FloatArray, phi2: FloatArray) -> SubspaceDistance:
    """Computes the principal angles between the column spans of two n x k matrices with orthonormal columns.
    Inputs within the tolerance of orthonormality are re-orthonormalized; others raise an InvalidArgumentError.
    Small angles are resolved from sines rather than cosines, so identical spans give angles of 0 to machine precision."""
    if phi1.shape != phi2.shape:
        raise InvalidArgumentError(f'subspaces must have the same shape, got {phi1.shape} and {phi2.shape}')
    q1 = _orthonormalize_input('phi1', np.asarray(phi1, dtype=np.float64))
    q2 = _orthonormalize_input('phi2', np.asarray(phi2, dtype=np.float64))
    angles = np.sort(np.clip(scipy.linalg.subspace_angles(q1, q2), 0.0, np.pi / 2))
    return SubspaceDistance(principal_angles=angles, grassmann=float(np.linalg.norm(angles)))


def grassmann_distance(phi1: FloatArray, phi2: FloatArray) -> float:
    """Gets the Grassmann distance between the column spans of two matrices with orthonormal columns."""
    return principal_angles(phi1, phi2).grassmann
