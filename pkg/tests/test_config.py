from pathlib import Path

from pydantic import ValidationError
import pytest

from selfpred.config import (
    DEFAULT_EPSILONS,
    Config,
    ExperimentConfig,
    IntegratorConfig,
    ToleranceConfig,
    get_config,
    user_config_path,
    user_dir,
)
from selfpred.harness import map_instances


def _config_hash(seed):
    return ExperimentConfig(seed=seed).config_hash


def test_config_path():
    assert user_dir() == Path.home() / '.selfpred'
    assert user_config_path() == Path.home() / '.selfpred' / 'config.toml'


class TestGlobalConfig:

    def test_defaults(self):
        cfg = get_config()
        assert cfg.log_level == 'INFO'
        assert cfg.tolerance.stochastic == 1e-12
        assert cfg.tolerance.tie == 1e-9
        assert cfg.integrator.max_iters == 20_000
        assert cfg.file.json_indent == 2

    def test_toml_sections(self):
        toml_str = Config().to_toml_string()
        for section in ['tolerance', 'integrator', 'file']:
            assert f'[{section}]' in toml_str

    def test_invalid_tolerance(self):
        with pytest.raises(ValidationError):
            ToleranceConfig(commute=0.0)


class TestIntegratorConfig:

    @pytest.mark.parametrize(['step_size', 'n_states', 'expected'], [
        (None, 10, 5.0),
        (None, 1, 0.5),
        (0.1, 10, 0.1),
    ])
    def test_resolve_step_size(self, step_size, n_states, expected):
        assert IntegratorConfig(step_size=step_size).resolve_step_size(n_states) == expected

    @pytest.mark.parametrize('kwargs', [
        {'max_iters': 0},
        {'grad_tol': 0.0},
        {'retraction_period': -1},
        {'min_step': -1e-3},
    ])
    def test_invalid(self, kwargs):
        with pytest.raises(ValidationError):
            IntegratorConfig(**kwargs)


class TestExperimentConfig:

    def test_defaults(self):
        cfg = ExperimentConfig()
        assert (cfg.n_states, cfg.n_actions, cfg.k, cfg.n_mdps) == (10, 4, 4, 100)
        assert cfg.n_runs_robustness == 200
        assert cfg.epsilon_list == DEFAULT_EPSILONS
        assert cfg.format == 'csv'
        assert cfg.output_path == Path('results')

    def test_epsilon_list_not_shared(self):
        cfg1 = ExperimentConfig()
        cfg1.epsilon_list.append(0.5)
        assert ExperimentConfig().epsilon_list == DEFAULT_EPSILONS

    @pytest.mark.parametrize(['kwargs', 'match'], [
        ({'n_states': 3, 'k': 4}, 'exceeds'),
        ({'epsilon_list': [0.1, 1.5]}, 'outside'),
        ({'epsilon_list': [-0.1]}, 'outside'),
    ])
    def test_invariants(self, kwargs, match):
        with pytest.raises(ValueError, match=match):
            ExperimentConfig(**kwargs)

    @pytest.mark.parametrize('kwargs', [
        {'n_mdps': 0},
        {'gamma': 1.0},
        {'reward_scale': 0.0},
        {'n_reward_samples': 1},
        {'curve_stride': 0},
        {'laziness': -0.1},
        {'laziness': 1.5},
    ])
    def test_field_constraints(self, kwargs):
        with pytest.raises(ValidationError):
            ExperimentConfig(**kwargs)

    def test_config_hash(self):
        cfg = ExperimentConfig(seed=3)
        assert cfg.config_hash == ExperimentConfig(seed=3).config_hash
        assert len(cfg.config_hash) == 64
        assert cfg.config_hash != ExperimentConfig(seed=4).config_hash
        assert cfg.config_hash != ExperimentConfig(seed=3, laziness=0.5).config_hash
        assert cfg.config_hash != ExperimentConfig(seed=3, integrator=IntegratorConfig(max_iters=10)).config_hash

    def test_canonical_dict(self):
        obj = ExperimentConfig(seed=3).canonical_dict()
        assert obj['integrator']['step_size'] is None
        assert obj['format'] == 'csv'
        assert obj['epsilon_list'] == DEFAULT_EPSILONS
        # the canonical form loads back to an equal configuration
        assert ExperimentConfig.from_dict(obj).config_hash == ExperimentConfig(seed=3).config_hash
        assert '"step_size":null' in ExperimentConfig().canonical_json()

    def test_config_hash_across_processes(self):
        hashes = map_instances(_config_hash, [3, 3], n_workers=2)
        assert hashes == [ExperimentConfig(seed=3).config_hash] * 2
