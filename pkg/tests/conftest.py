from pathlib import Path

import pytest

from selfpred.mdp import Mdp, gen_common_eigenbasis_family, gen_random_mdp, make_uniform_policy


@pytest.fixture(scope='session', autouse=True)
def _tmp_home_dir(tmp_path_factory):
    """Sets the user's home directory to a temporary path."""
    home_dir = tmp_path_factory.mktemp('home')
    with pytest.MonkeyPatch.context() as ctx:
        ctx.setattr(Path, 'home', lambda: home_dir)
        yield

@pytest.fixture(scope='module')
def symmetric_mdp() -> Mdp:
    """Fixture returning a random MDP with 6 states, 3 actions, and symmetric (non-commuting) dynamics."""
    return gen_random_mdp(6, 3, seed=1)

@pytest.fixture(scope='module')
def nonsymmetric_mdp() -> Mdp:
    """Fixture returning a random MDP with 6 states, 3 actions, and non-symmetric dynamics."""
    return gen_random_mdp(6, 3, seed=2, symmetric=False)

@pytest.fixture(scope='module')
def commuting_mdp() -> Mdp:
    """Fixture returning an MDP with 7 states and 3 commuting symmetric circulant transition matrices."""
    return gen_common_eigenbasis_family(7, 3, seed=3)

@pytest.fixture
def uniform_policy():
    """Fixture returning a function that makes the uniform policy for an MDP."""
    return lambda mdp: make_uniform_policy(mdp.n_states, mdp.n_actions)
