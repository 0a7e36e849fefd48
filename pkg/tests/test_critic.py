import math

import numpy as np
import pytest

from neuralpg.envs import generate_env
from neuralpg.mdp import Embedding, TabularMdp, exact_values
from neuralpg.network import NetInit, NetShape, dist_to_init, forward_all, init_net
from neuralpg.critic import (
    CriticState,
    clipped_critic_eval,
    clipped_critic_table,
    critic_error,
    default_td_rate,
    default_td_steps,
    mean_squared_td_error,
    td_step,
    train_critic,
)
from neuralpg.sampling import sample_stationary_transitions

HAND_INIT = NetInit(np.eye(2), np.array([1.0, -1.0]))
HAND_EMB = Embedding(np.array([[[1.0, 0.0]], [[0.0, 1.0]]]))


def test_defaults():
    assert default_td_steps(512) == 10_000
    assert default_td_steps(20_000) == 20_000
    assert default_td_rate(0.9, 10_000) == pytest.approx(0.01)
    assert default_td_rate(0.9, 100) == pytest.approx(0.0125)
    assert default_td_rate(0.0, 100) == pytest.approx(0.1)


def test_td_step_hand_arithmetic():
    state = CriticState.start(HAND_INIT)
    new = td_step(state, (0, 0, 1.0, 1, 0), 0.1, HAND_INIT, 10.0, embedding=HAND_EMB, gamma=0.5)
    c = 1 / math.sqrt(2)
    delta = c - 0.5 * 1.0 - 0.5 * (-c)
    expected = np.eye(2)
    expected[0, 0] -= 0.1 * delta * c
    np.testing.assert_allclose(new.omega, expected, atol=1e-15)
    np.testing.assert_allclose(new.omega_bar, 0.5 * (np.eye(2) + expected), atol=1e-15)
    assert new.t == 1


def test_td_step_projects():
    state = CriticState.start(HAND_INIT)
    new = td_step(state, (0, 0, 100.0, 1, 0), 1.0, HAND_INIT, 0.5, embedding=HAND_EMB, gamma=0.5)
    assert dist_to_init(new.omega, HAND_INIT) == pytest.approx(0.5)


def test_td_step_zero_critic_zero_reward():
    init = NetInit(np.eye(2), np.array([1.0, 1.0]))
    zero = np.zeros((2, 2))
    state = CriticState(zero, zero.copy(), 3)
    new = td_step(state, (0, 0, 0.0, 1, 0), 0.5, init, 5.0, embedding=HAND_EMB, gamma=0.9)
    assert np.array_equal(new.omega, zero)
    np.testing.assert_allclose(new.omega_bar, zero)
    assert new.t == 4


def test_td_step_at_exact_q_is_fixed():
    init = NetInit(np.array([[1.0, 0.0]]), np.array([1.0]))
    emb = Embedding(np.array([[[0.6, 0.8]]]))
    c = 0.7
    omega = c * emb(0, 0)[None, :]
    assert forward_all(init, omega, emb.table)[0, 0] == pytest.approx(c)
    state = CriticState(omega, omega.copy(), 0)
    new = td_step(state, (0, 0, c, 0, 0), 0.3, init, 5.0, embedding=emb, gamma=0.8)
    np.testing.assert_allclose(new.omega, omega, atol=1e-15)


@pytest.fixture(scope="module")
def td_problem():
    mdp, emb = generate_env("random:S=5,A=3,gamma=0.7", seed=2, dim=8)
    init = init_net(NetShape(64, 8, 2.0), seed=4)
    pi = np.full((5, 3), 1 / 3)
    return mdp, emb, init, pi


def test_train_matches_repeated_td_steps(td_problem):
    mdp, emb, init, pi = td_problem
    res = train_critic(mdp, pi, init, T_td=60, eta_td=0.05, R=2.0, seed=7, embedding=emb, keep_iterates=True)
    batch = sample_stationary_transitions(mdp, pi, 60, seed=7)
    state = CriticState.start(init)
    for t in range(60):
        tr = (batch.states[t], batch.actions[t], batch.rewards[t], batch.next_states[t], batch.next_actions[t])
        state = td_step(state, tr, 0.05, init, 2.0, embedding=emb, gamma=mdp.discount)
        np.testing.assert_allclose(state.omega, res.iterates[t + 1], atol=1e-13)
    np.testing.assert_allclose(state.omega_bar, res.omega_bar, atol=1e-12)


def test_average_is_mean_of_iterates(td_problem):
    mdp, emb, init, pi = td_problem
    res = train_critic(mdp, pi, init, T_td=200, R=1.5, seed=1, embedding=emb, keep_iterates=True)
    assert len(res.iterates) == 201
    np.testing.assert_allclose(res.omega_bar, np.mean(res.iterates, axis=0), atol=1e-13)
    assert np.array_equal(res.iterates[0], init.w_init)
    assert max(dist_to_init(w, init) for w in res.iterates) <= 1.5 + 1e-12


def test_train_is_deterministic(td_problem):
    mdp, emb, init, pi = td_problem
    a = train_critic(mdp, pi, init, T_td=100, seed=3, embedding=emb)
    b = train_critic(mdp, pi, init, T_td=100, seed=3, embedding=emb)
    assert np.array_equal(a.omega_bar, b.omega_bar)


def test_zero_reward_error_does_not_grow(td_problem):
    mdp, emb, init, pi = td_problem
    zero = TabularMdp(mdp.transition, np.zeros((5, 3)), mdp.discount, mdp.init_dist)
    res = train_critic(zero, pi, init, T_td=3000, seed=0, embedding=emb)
    assert res.final_error <= res.initial_error


def test_history_rows(td_problem):
    mdp, emb, init, pi = td_problem
    res = train_critic(mdp, pi, init, T_td=500, seed=0, embedding=emb, log_every=100)
    assert [h[0] for h in res.history] == [0, 100, 200, 300, 400, 500]
    assert res.history[-1][3] == pytest.approx(res.final_error)
    assert all(h[2] <= 2.0 + 1e-12 for h in res.history)


def test_held_out_td_error_decreases(td_problem):
    mdp, emb, init, pi = td_problem
    held = sample_stationary_transitions(mdp, pi, 20_000, seed=999)
    short, long = [], []
    for seed in range(5):
        short.append(mean_squared_td_error(init, train_critic(mdp, pi, init, T_td=400, seed=seed, embedding=emb).omega_bar,
                                           emb, held, mdp.discount))
        long.append(mean_squared_td_error(init, train_critic(mdp, pi, init, T_td=4000, seed=seed, embedding=emb).omega_bar,
                                          emb, held, mdp.discount))
    assert np.median(long) < np.median(short)


def test_critic_error_against_exact(td_problem):
    mdp, emb, init, pi = td_problem
    q = exact_values(mdp, pi).q
    w = np.full((5, 3), 1 / 15)
    direct = np.sqrt(np.sum(w * (forward_all(init, init.w_init, emb.table) - q) ** 2))
    assert critic_error(init, init.w_init, emb, q, w) == pytest.approx(direct)


def test_clipped_critic(td_problem):
    mdp, emb, init, pi = td_problem
    big = init.w_init * 50.0
    table = clipped_critic_table(big, 0.25, init=init, embedding=emb)
    assert np.abs(table).max() <= 0.25
    raw = forward_all(init, big, emb.table)
    for s in range(5):
        for a in range(3):
            assert clipped_critic_eval(big, s, a, 0.25, init=init, embedding=emb) == pytest.approx(
                np.clip(raw[s, a], -0.25, 0.25)
            )
    small = clipped_critic_table(init.w_init, 1e6, init=init, embedding=emb)
    np.testing.assert_array_equal(small, forward_all(init, init.w_init, emb.table))
