import numpy as np
import pytest

from selfpred.errors import AssumptionViolationError, InvalidArgumentError
from selfpred.mdp import Mdp, Policy, gen_random_mdp, induced_transition, make_random_policy, make_uniform_policy
from selfpred.objectives import (
    MseReport,
    ObjectiveKind,
    ValueTarget,
    constant_term,
    evaluate_objective,
    fit_mse,
    model_based_residual,
    model_based_value,
    model_free_value_analytic,
    model_free_value_mc,
    target_family,
    trace_objective,
    trace_value,
)

from . import random_orthonormal


KINDS = list(ObjectiveKind)


class TestTraceObjective:

    @pytest.mark.parametrize('kind', KINDS)
    def test_full_rank(self, symmetric_mdp, uniform_policy, kind):
        """With k = n, the latent model is a change of basis, so f equals the constant term."""
        policy = uniform_policy(symmetric_mdp)
        phi = random_orthonormal(6, 6, seed=0)
        np.testing.assert_allclose(trace_objective(phi, symmetric_mdp, policy, kind), constant_term(symmetric_mdp, policy, kind), rtol=1e-10)

    def test_explicit_pi(self, symmetric_mdp, uniform_policy):
        policy = uniform_policy(symmetric_mdp)
        phi = random_orthonormal(6, 2, seed=1)
        t_pi = symmetric_mdp.transitions.mean(axis=0)
        latent = phi.T @ t_pi @ phi
        np.testing.assert_allclose(trace_objective(phi, symmetric_mdp, policy, ObjectiveKind.pi), np.trace(latent @ latent), rtol=1e-12)

    @pytest.mark.parametrize('seed', range(5))
    def test_var_is_pointwise_variance(self, seed):
        """The var trace (ac minus pi) equals the weighted sum of traces of squared residual latent models."""
        mdp = gen_random_mdp(6, 3, seed=seed)
        policy = Policy(np.tile([0.2, 0.5, 0.3], (6, 1)))
        phi = random_orthonormal(6, 3, seed=seed + 100)
        (mats, weights) = target_family(mdp, policy, ObjectiveKind.var)
        latents = [phi.T @ mat @ phi for mat in mats]
        expected = sum(w * np.trace(lat @ lat) for (w, lat) in zip(weights, latents))
        np.testing.assert_allclose(trace_objective(phi, mdp, policy, ObjectiveKind.var), expected, atol=1e-10)
        assert trace_objective(phi, mdp, policy, ObjectiveKind.var) >= -1e-12

    def test_invariant_to_rotation(self, symmetric_mdp, uniform_policy):
        policy = uniform_policy(symmetric_mdp)
        phi = random_orthonormal(6, 3, seed=2)
        rot = random_orthonormal(3, 3, seed=3)
        for kind in KINDS:
            np.testing.assert_allclose(trace_objective(phi @ rot, symmetric_mdp, policy, kind), trace_objective(phi, symmetric_mdp, policy, kind), rtol=1e-10)

    def test_not_orthonormal(self, symmetric_mdp, uniform_policy):
        phi = 2.0 * random_orthonormal(6, 2, seed=0)
        with pytest.raises(InvalidArgumentError, match='not orthonormal'):
            trace_objective(phi, symmetric_mdp, uniform_policy(symmetric_mdp), ObjectiveKind.pi)
        # the unchecked value is still computable
        assert trace_value(phi, symmetric_mdp, uniform_policy(symmetric_mdp), ObjectiveKind.pi) > 0

    def test_wrong_rows(self, symmetric_mdp, uniform_policy):
        with pytest.raises(InvalidArgumentError, match='rows'):
            trace_objective(random_orthonormal(5, 2, seed=0), symmetric_mdp, uniform_policy(symmetric_mdp), ObjectiveKind.ac)


class TestEquivalence:

    @pytest.mark.parametrize('kind', KINDS)
    @pytest.mark.parametrize('seed', range(10))
    def test_model_based(self, kind, seed):
        """For symmetric dynamics, C − f(Φ) equals the model-based residual."""
        mdp = gen_random_mdp(7, 3, seed=seed)
        policy = make_uniform_policy(7, 3)
        phi = random_orthonormal(7, 1 + seed % 4, seed=seed + 50)
        value = evaluate_objective(phi, mdp, policy, kind)
        assert value.equivalence_gap < 1e-8
        np.testing.assert_allclose(value.model_based_residual, model_based_value(phi, mdp, policy, kind))

    @pytest.mark.parametrize('kind', KINDS)
    @pytest.mark.parametrize('seed', range(10))
    def test_model_free_analytic(self, kind, seed):
        """For symmetric dynamics and a uniform policy, the model-free value matches the model-based one."""
        mdp = gen_random_mdp(7, 3, seed=seed)
        policy = make_uniform_policy(7, 3)
        phi = random_orthonormal(7, 3, seed=seed + 50)
        free = model_free_value_analytic(phi, mdp, policy, kind)
        np.testing.assert_allclose(free, model_based_value(phi, mdp, policy, kind), atol=1e-8)

    def test_model_based_residual(self):
        mat = np.diag([0.5, 0.3, 0.2])
        phi = np.eye(3)[:, :2]
        (resid, pred) = model_based_residual(phi, mat)
        np.testing.assert_allclose(pred, np.diag([0.5, 0.3]))
        np.testing.assert_allclose(resid, 0.04)
        with pytest.raises(InvalidArgumentError, match='transition has shape'):
            model_based_residual(phi, np.eye(4))

    def test_non_symmetric_gap(self, nonsymmetric_mdp, uniform_policy):
        """Without symmetry the trace route is only a surrogate."""
        phi = random_orthonormal(6, 2, seed=0)
        value = evaluate_objective(phi, nonsymmetric_mdp, uniform_policy(nonsymmetric_mdp), ObjectiveKind.pi)
        assert value.equivalence_gap > 1e-8

    def test_model_free_requires_uniform(self, symmetric_mdp):
        phi = random_orthonormal(6, 2, seed=0)
        policy = Policy(np.tile([0.5, 0.3, 0.2], (6, 1)))
        with pytest.raises(AssumptionViolationError, match='uniform policy'):
            model_free_value_analytic(phi, symmetric_mdp, policy, ObjectiveKind.ac)
        with pytest.raises(AssumptionViolationError, match='uniform policy'):
            model_free_value_mc(phi, symmetric_mdp, policy, ObjectiveKind.var, 10, seed=0)
        # pi has no such requirement
        model_free_value_analytic(phi, symmetric_mdp, policy, ObjectiveKind.pi)
        value = evaluate_objective(phi, symmetric_mdp, policy, ObjectiveKind.ac)
        assert value.model_free_value is None
        assert 'model_free_value' not in value.to_json_obj()

    @pytest.mark.parametrize('kind', KINDS)
    def test_model_free_mc(self, symmetric_mdp, uniform_policy, kind):
        policy = uniform_policy(symmetric_mdp)
        phi = random_orthonormal(6, 2, seed=7)
        (mean, stderr) = model_free_value_mc(phi, symmetric_mdp, policy, kind, 20_000, seed=8)
        analytic = model_free_value_analytic(phi, symmetric_mdp, policy, kind)
        assert stderr > 0
        assert abs(mean - analytic) < 4 * stderr
        # reproducible
        assert model_free_value_mc(phi, symmetric_mdp, policy, kind, 100, seed=8) == model_free_value_mc(phi, symmetric_mdp, policy, kind, 100, seed=8)
        with pytest.raises(InvalidArgumentError, match='n_samples'):
            model_free_value_mc(phi, symmetric_mdp, policy, kind, 1, seed=8)

    @pytest.mark.slow
    @pytest.mark.parametrize('kind', KINDS)
    def test_model_free_mc_coverage(self, kind):
        covered = 0
        for seed in range(100):
            mdp = gen_random_mdp(8, 3, seed=seed)
            policy = make_uniform_policy(8, 3)
            phi = random_orthonormal(8, 3, seed=seed + 1000)
            (mean, stderr) = model_free_value_mc(phi, mdp, policy, kind, 10_000, seed=seed + 2000)
            covered += abs(mean - model_free_value_analytic(phi, mdp, policy, kind)) <= 3 * stderr
        assert covered >= 95


class TestFitMse:

    def test_full_rank(self, symmetric_mdp, uniform_policy):
        report = fit_mse(np.eye(6), symmetric_mdp, uniform_policy(symmetric_mdp), 20, seed=0)
        for target in ValueTarget:
            assert report.get(target) < 1e-20

    def test_reproducible(self, symmetric_mdp, uniform_policy):
        policy = uniform_policy(symmetric_mdp)
        phi = random_orthonormal(6, 2, seed=0)
        assert fit_mse(phi, symmetric_mdp, policy, 30, seed=1) == fit_mse(phi, symmetric_mdp, policy, 30, seed=1)
        assert fit_mse(phi, symmetric_mdp, policy, 30, seed=1) != fit_mse(phi, symmetric_mdp, policy, 30, seed=2)

    def test_nested_subspaces(self, symmetric_mdp, uniform_policy):
        """Adding columns to Φ can only decrease the projection error."""
        policy = uniform_policy(symmetric_mdp)
        phi = random_orthonormal(6, 4, seed=3)
        small = fit_mse(phi[:, :2], symmetric_mdp, policy, 40, seed=4)
        large = fit_mse(phi, symmetric_mdp, policy, 40, seed=4)
        for target in ValueTarget:
            assert large.get(target) <= small.get(target) + 1e-15

    def test_identical_actions(self):
        """If every action has the same dynamics, the advantage function is identically zero."""
        mat = gen_random_mdp(5, 1, seed=0).transitions[0]
        mdp = Mdp(transitions=np.stack([mat, mat, mat]), reward=np.zeros(5), symmetric=True)
        report = fit_mse(random_orthonormal(5, 2, seed=1), mdp, make_random_policy(5, 3, seed=2), 25, seed=3)
        assert report.adv_mse < 1e-16
        assert report.v_mse > 0

    def test_which(self, symmetric_mdp, uniform_policy):
        report = fit_mse(random_orthonormal(6, 2, seed=0), symmetric_mdp, uniform_policy(symmetric_mdp), 10, seed=0, which=[ValueTarget.v])
        assert isinstance(report, MseReport)
        assert report.v_mse is not None
        assert report.q_mse is None
        assert report.get(ValueTarget.advantage) is None
        assert set(report.to_json_obj()) == {'n_samples', 'v_mse', 'v_stderr'}

    def test_reward_scale(self, symmetric_mdp, uniform_policy):
        policy = uniform_policy(symmetric_mdp)
        phi = random_orthonormal(6, 2, seed=0)
        base = fit_mse(phi, symmetric_mdp, policy, 10, seed=5)
        scaled = fit_mse(phi, symmetric_mdp, policy, 10, seed=5, reward_scale=3.0)
        np.testing.assert_allclose(scaled.v_mse, 9.0 * base.v_mse, rtol=1e-10)

    def test_invalid(self, symmetric_mdp, uniform_policy):
        with pytest.raises(InvalidArgumentError, match='n_reward_samples'):
            fit_mse(np.eye(6), symmetric_mdp, uniform_policy(symmetric_mdp), 1, seed=0)


def test_induced_transition_for_state_independent_policy(symmetric_mdp):
    policy = Policy(np.tile([0.2, 0.5, 0.3], (6, 1)))
    np.testing.assert_allclose(induced_transition(symmetric_mdp, policy), symmetric_mdp.mean_transition(np.array([0.2, 0.5, 0.3])), atol=1e-15)
