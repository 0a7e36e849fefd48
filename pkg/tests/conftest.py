import numpy as np
import pytest

from neuralpg.envs import generate_env, random_mdp
from neuralpg.mdp import TabularMdp, build_embedding
from neuralpg.network import NetShape, init_net
from neuralpg.policy import EnergyPolicy


def one_state_mdp(rewards, gamma=0.9):
    rewards = np.atleast_1d(np.asarray(rewards, dtype=float))
    A = rewards.size
    return TabularMdp(np.ones((1, A, 1)), rewards.reshape(1, A), gamma, np.ones(1))


def random_policy(rng, S, A):
    p = rng.random((S, A)) + 0.05
    return p / p.sum(axis=1, keepdims=True)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def small_mdp():
    return random_mdp(4, 3, 0.8, seed=11)


@pytest.fixture
def small_setup():
    """A 4x3 random MDP, its embedding, a width-16 network and a policy away from W_init."""
    mdp, emb = generate_env("random:S=4,A=3,gamma=0.8", seed=5, dim=4)
    init = init_net(NetShape(16, 4, 2.0), seed=3)
    theta = init.w_init + 0.3 * np.random.default_rng(0).standard_normal(init.w_init.shape)
    policy = EnergyPolicy(theta, 1.5, init, emb)
    return mdp, emb, init, policy


@pytest.fixture
def embedding_for():
    def make(mdp, dim=4, seed=0):
        return build_embedding(mdp, dim, seed)

    return make


def pytest_terminal_summary(terminalreporter):
    from test_acceptance import LINES

    if LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(LINES, key=lambda s: int(s.split("]")[1].split()[0])):
            terminalreporter.write_line(line)
