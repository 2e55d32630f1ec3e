from itertools import combinations

import numpy as np
import pytest

from selfpred.errors import AssumptionViolationError, InvalidArgumentError
from selfpred.mdp import Mdp, gen_common_eigenbasis_family, gen_symmetric_stochastic, make_uniform_policy
from selfpred.objectives import ObjectiveKind, trace_objective
from selfpred.spectral import (
    Criterion,
    SpectralReport,
    criterion_gram,
    criterion_scores,
    grassmann_distance,
    joint_eigendecomposition,
    principal_angles,
    spurious_maxima,
    stable_eigen_subsets,
    swap_curvatures,
    sym_eigendecomposition,
    topk_eigenvectors,
    topk_indices,
    topk_subspace,
)

from . import random_orthonormal


class TestEigendecomposition:

    @pytest.mark.parametrize('seed', range(5))
    def test_reconstruct(self, seed):
        mat = gen_symmetric_stochastic(8, seed=seed)
        (basis, vals) = sym_eigendecomposition(mat)
        np.testing.assert_allclose(basis @ np.diag(vals) @ basis.T, mat, atol=1e-12)
        np.testing.assert_allclose(basis.T @ basis, np.eye(8), atol=1e-12)
        assert np.all(np.diff(vals) <= 0)
        # doubly stochastic, so the top eigenvalue is 1
        np.testing.assert_allclose(vals[0], 1.0)

    def test_sign_convention(self):
        (basis, _) = sym_eigendecomposition(gen_symmetric_stochastic(6, seed=0))
        for col in basis.T:
            nonzero = col[np.abs(col) > 1e-12]
            assert nonzero[0] > 0

    @pytest.mark.parametrize(['mat', 'match'], [
        (np.array([[0.0, 1.0], [0.0, 0.0]]), 'not symmetric'),
        (np.ones((2, 3)), 'square'),
    ])
    def test_invalid(self, mat, match):
        with pytest.raises(InvalidArgumentError, match=match):
            sym_eigendecomposition(mat)

    def test_topk_eigenvectors(self):
        mat = np.diag([0.1, 0.7, -0.9, 0.4])
        vecs = topk_eigenvectors(mat, 2)
        np.testing.assert_allclose(np.abs(vecs), np.eye(4)[:, [1, 3]])


class TestCriteria:

    def test_example(self):
        lam = np.array([[1.0, 0.5], [-1.0, 0.5]])
        scores = criterion_scores(lam)
        np.testing.assert_allclose(scores[Criterion.square_of_mean], [0.0, 0.25])
        np.testing.assert_allclose(scores[Criterion.mean_of_squares], [1.0, 0.25])
        np.testing.assert_allclose(scores[Criterion.variance], [1.0, 0.0])

    @pytest.mark.parametrize('seed', range(5))
    def test_variance_decomposition(self, seed):
        rng = np.random.default_rng(seed)
        lam = rng.uniform(-1, 1, size=(4, 9))
        weights = rng.dirichlet(np.ones(4))
        scores = criterion_scores(lam, weights)
        np.testing.assert_allclose(scores[Criterion.variance], scores[Criterion.mean_of_squares] - scores[Criterion.square_of_mean], atol=1e-14)
        assert np.all(scores[Criterion.variance] >= 0)

    def test_invalid(self):
        with pytest.raises(InvalidArgumentError, match='n_actions, n'):
            criterion_scores(np.ones(3))
        with pytest.raises(InvalidArgumentError):
            criterion_scores(np.ones((2, 3)), weights=np.array([0.5, 0.6]))

    @pytest.mark.parametrize(['scores', 'k', 'expected'], [
        ([0.3, 0.9, 0.1], 2, [1, 0]),
        ([0.5, 0.5, 0.5], 2, [0, 1]),
        ([0.1, 0.5, 0.2, 0.5], 3, [1, 3, 2]),
    ])
    def test_topk_indices(self, scores, k, expected):
        assert topk_indices(np.array(scores), k) == expected

    @pytest.mark.parametrize('k', [0, 4])
    def test_topk_invalid(self, k):
        with pytest.raises(InvalidArgumentError, match='need 1 <= k'):
            topk_indices(np.zeros(3), k)

    def test_for_objective(self):
        assert [str(Criterion.for_objective(kind)) for kind in ['pi', 'ac', 'var']] == ['square-of-mean', 'mean-of-squares', 'variance']


class TestJointEigendecomposition:

    @pytest.mark.parametrize('seed', range(5))
    def test_reconstruct(self, seed):
        mdp = gen_common_eigenbasis_family(9, 4, seed=seed)
        report = joint_eigendecomposition(mdp, k=3)
        assert report.leakage < 1e-8
        np.testing.assert_allclose(report.basis.T @ report.basis, np.eye(9), atol=1e-10)
        for a in range(4):
            np.testing.assert_allclose(report.reconstruct(a), mdp.transitions[a], atol=1e-10)
        assert report.eigvals.shape == (4, 9)
        assert set(report.topk_indices) == set(Criterion)
        assert all(len(idx) == 3 for idx in report.topk_indices.values())

    def test_constant_eigenvector(self, commuting_mdp):
        """The constant vector is shared by every doubly stochastic matrix, with eigenvalue 1."""
        report = joint_eigendecomposition(commuting_mdp, k=1)
        assert report.topk_indices[Criterion.square_of_mean] == [0]
        np.testing.assert_allclose(np.abs(report.basis[:, 0]), np.full(7, 1 / np.sqrt(7)), atol=1e-10)
        np.testing.assert_allclose(report.eigvals[:, 0], 1.0, atol=1e-10)
        np.testing.assert_allclose(report.criterion_scores[Criterion.variance][0], 0.0, atol=1e-12)

    def test_non_commuting(self, symmetric_mdp):
        with pytest.raises(AssumptionViolationError, match='do not commute') as exc_info:
            joint_eigendecomposition(symmetric_mdp)
        assert exc_info.value.commutator_norm > 1e-8

    def test_identical_actions(self):
        """With one repeated transition matrix, var scores vanish and pi, ac pick the same top-k."""
        mat = gen_symmetric_stochastic(6, seed=4)
        mdp = Mdp(transitions=np.stack([mat, mat]), reward=np.zeros(6), symmetric=True)
        report = joint_eigendecomposition(mdp, k=3)
        np.testing.assert_allclose(report.criterion_scores[Criterion.variance], 0.0, atol=1e-12)
        assert report.topk_indices[Criterion.square_of_mean] == report.topk_indices[Criterion.mean_of_squares]
        np.testing.assert_allclose(report.reconstruct(1), mat, atol=1e-12)

    def test_weights(self, commuting_mdp):
        weights = np.array([0.6, 0.3, 0.1])
        report = joint_eigendecomposition(commuting_mdp, weights=weights)
        np.testing.assert_allclose(report.weights, weights)
        mean = weights @ report.eigvals
        np.testing.assert_allclose(report.criterion_scores[Criterion.square_of_mean], mean ** 2, atol=1e-14)

    def test_topk_subspace(self, commuting_mdp):
        report = joint_eigendecomposition(commuting_mdp, k=2)
        sub = topk_subspace(report, Criterion.variance, 2)
        np.testing.assert_array_equal(sub, report.basis[:, report.topk_indices[Criterion.variance]])

    @pytest.mark.parametrize('seed', range(3))
    def test_variance_matrix(self, seed):
        """The variance scores are the eigenvalues of the mean of T_a² minus (T^π)²."""
        mdp = gen_common_eigenbasis_family(8, 3, seed=seed)
        report = joint_eigendecomposition(mdp)
        t_pi = mdp.mean_transition()
        mat = np.mean([t @ t for t in mdp.transitions], axis=0) - t_pi @ t_pi
        diag = np.diag(report.basis.T @ mat @ report.basis)
        np.testing.assert_allclose(diag, report.criterion_scores[Criterion.variance], atol=1e-8)

    @pytest.mark.parametrize('kind', list(ObjectiveKind))
    @pytest.mark.parametrize('seed', range(3))
    def test_topk_maximizes_over_subsets(self, kind, seed):
        """Among all k-subsets of the shared eigenvectors, the criterion's top-k attains the largest trace objective."""
        mdp = gen_common_eigenbasis_family(6, 3, seed=seed)
        policy = make_uniform_policy(6, 3)
        report = joint_eigendecomposition(mdp)
        best = max(trace_objective(report.basis[:, list(subset)], mdp, policy, kind) for subset in combinations(range(6), 3))
        selected = trace_objective(topk_subspace(report, Criterion.for_objective(kind), 3), mdp, policy, kind)
        np.testing.assert_allclose(selected, best, atol=1e-12)

    def test_to_json_obj(self, commuting_mdp):
        obj = joint_eigendecomposition(commuting_mdp, k=2).to_json_obj()
        assert set(obj['criterion_scores']) == {'square-of-mean', 'mean-of-squares', 'variance'}
        assert obj['topk_indices']['square-of-mean'][0] == 0


class TestEigenvectorSets:

    @staticmethod
    def _single_action_report(eigvals):
        lam = np.array([eigvals])
        n = lam.shape[1]
        return SpectralReport(basis=np.eye(n), eigvals=lam, weights=np.ones(1), criterion_scores=criterion_scores(lam), topk_indices={})

    @pytest.mark.parametrize('seed', range(3))
    def test_criterion_gram(self, seed):
        rng = np.random.default_rng(seed)
        lam = rng.uniform(-1, 1, size=(3, 6))
        weights = rng.dirichlet(np.ones(3))
        scores = criterion_scores(lam, weights)
        grams = {crit: criterion_gram(lam, crit, weights) for crit in Criterion}
        for (crit, gram) in grams.items():
            np.testing.assert_allclose(gram, gram.T, atol=1e-14)
            np.testing.assert_allclose(np.diag(gram), scores[crit], atol=1e-14)
        diff = grams[Criterion.mean_of_squares] - grams[Criterion.square_of_mean]
        np.testing.assert_allclose(grams[Criterion.variance], diff, atol=1e-14)

    @pytest.mark.parametrize('kind', list(ObjectiveKind))
    def test_swap_curvatures(self, commuting_mdp, kind):
        """Rotating a selected eigenvector i toward an unselected j by θ changes the trace by 2·G[i, j]·θ²."""
        policy = make_uniform_policy(7, 3)
        report = joint_eigendecomposition(commuting_mdp)
        curv = swap_curvatures(report, Criterion.for_objective(kind))
        np.testing.assert_allclose(np.diag(curv), 0.0, atol=1e-14)
        phi = report.basis[:, [0, 2, 5]]
        base = trace_objective(phi, commuting_mdp, policy, kind)
        theta = 1e-3
        for (col, i) in enumerate([0, 2, 5]):
            for j in [1, 3, 4, 6]:
                rotated = phi.copy()
                rotated[:, col] = np.cos(theta) * report.basis[:, i] + np.sin(theta) * report.basis[:, j]
                change = trace_objective(rotated, commuting_mdp, policy, kind) - base
                np.testing.assert_allclose(change / theta ** 2, 2 * curv[i, j], atol=1e-5)

    def test_example(self):
        """With a negative eigenvalue, its eigenvector is a local maximum of the square-of-mean trace, but not the global one."""
        report = self._single_action_report([1.0, -0.9, 0.2])
        assert stable_eigen_subsets(report, Criterion.square_of_mean, 1) == [[0], [1]]
        assert spurious_maxima(report, Criterion.square_of_mean, 1) == [[1]]
        # shifting eigenvalues to be nonnegative removes the spurious maximum
        lazy = self._single_action_report([1.0, 0.05, 0.6])
        assert stable_eigen_subsets(lazy, Criterion.square_of_mean, 1) == [[0]]
        assert spurious_maxima(lazy, Criterion.square_of_mean, 1) == []

    @pytest.mark.parametrize('seed', range(3))
    def test_lazy_family(self, seed):
        """For a family with nonnegative eigenvalues the only stable square-of-mean subsets are optimal."""
        mdp = gen_common_eigenbasis_family(8, 3, seed=seed)
        report = joint_eigendecomposition(mdp, k=3)
        assert np.all(report.eigvals >= -1e-12)
        stable = stable_eigen_subsets(report, Criterion.square_of_mean, 3)
        assert sorted(report.topk_indices[Criterion.square_of_mean]) in stable
        assert spurious_maxima(report, Criterion.square_of_mean, 3) == []

    def test_full_set(self, commuting_mdp):
        report = joint_eigendecomposition(commuting_mdp)
        assert stable_eigen_subsets(report, Criterion.variance, 7) == [list(range(7))]
        assert spurious_maxima(report, Criterion.variance, 7) == []

    @pytest.mark.parametrize('k', [0, 8])
    def test_invalid(self, commuting_mdp, k):
        report = joint_eigendecomposition(commuting_mdp)
        with pytest.raises(InvalidArgumentError, match='need 1 <= k'):
            stable_eigen_subsets(report, Criterion.square_of_mean, k)


class TestPrincipalAngles:

    def test_same_span(self):
        phi = random_orthonormal(8, 3, seed=0)
        rot = random_orthonormal(3, 3, seed=1)
        dist = principal_angles(phi, phi @ rot)
        np.testing.assert_allclose(dist.principal_angles, 0.0, atol=1e-7)
        assert dist.grassmann < 1e-7

    def test_orthogonal_spans(self):
        eye = np.eye(6)
        dist = principal_angles(eye[:, :2], eye[:, 2:4])
        np.testing.assert_allclose(dist.principal_angles, np.pi / 2)
        np.testing.assert_allclose(dist.grassmann, np.pi / np.sqrt(2))

    @pytest.mark.parametrize('angle', [0.1, 0.7, 1.3])
    def test_planar(self, angle):
        phi1 = np.array([[1.0], [0.0], [0.0]])
        phi2 = np.array([[np.cos(angle)], [np.sin(angle)], [0.0]])
        np.testing.assert_allclose(grassmann_distance(phi1, phi2), angle, atol=1e-12)

    def test_symmetric(self):
        phi1 = random_orthonormal(7, 2, seed=2)
        phi2 = random_orthonormal(7, 2, seed=3)
        np.testing.assert_allclose(grassmann_distance(phi1, phi2), grassmann_distance(phi2, phi1), atol=1e-12)
        assert 0 <= grassmann_distance(phi1, phi2) <= np.sqrt(2) * np.pi / 2

    def test_rotation_invariant(self):
        phi1 = random_orthonormal(10, 4, seed=4)
        phi2 = random_orthonormal(10, 4, seed=5)
        dist = grassmann_distance(phi1, phi2)
        rotated = grassmann_distance(phi1 @ random_orthonormal(4, 4, seed=6), phi2 @ random_orthonormal(4, 4, seed=7))
        np.testing.assert_allclose(rotated, dist, atol=1e-10)

    def test_invalid(self):
        phi = random_orthonormal(5, 2, seed=0)
        with pytest.raises(InvalidArgumentError, match='orthonormal'):
            principal_angles(phi, 2.0 * phi)
        with pytest.raises(InvalidArgumentError, match='same shape'):
            principal_angles(phi, random_orthonormal(5, 3, seed=1))
