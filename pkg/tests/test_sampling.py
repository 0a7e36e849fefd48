import numpy as np
import pytest
from scipy import stats

from conftest import one_state_mdp, random_policy
from neuralpg.envs import random_mdp
from neuralpg.mdp import TabularMdp, stationary_measures, visitation_measures
from neuralpg.sampling import (
    default_burn_in,
    empirical_pairs,
    sample_stationary_transitions,
    sample_visitation,
    total_variation,
)


def cycle_mdp(S=4):
    P = np.zeros((S, 1, S))
    for s in range(S):
        P[s, 0, (s + 1) % S] = 1.0
    return TabularMdp(P, np.arange(S, dtype=float).reshape(S, 1), 0.9, np.eye(S)[0], q_max=S)


def test_default_burn_in():
    assert default_burn_in(0.9) == 100
    assert default_burn_in(0.5) == 20


def test_batch_length_and_ranges(small_mdp, rng):
    batch = sample_visitation(small_mdp, random_policy(rng, 4, 3), 500, seed=1)
    assert len(batch) == 500 and not batch.has_transitions
    assert batch.states.min() >= 0 and batch.states.max() < 4
    assert batch.actions.min() >= 0 and batch.actions.max() < 3
    with pytest.raises(ValueError):
        sample_visitation(small_mdp, random_policy(rng, 4, 3), 0)


def test_seed_determinism(small_mdp, rng):
    pi = random_policy(rng, 4, 3)
    a = sample_visitation(small_mdp, pi, 300, seed=9)
    b = sample_visitation(small_mdp, pi, 300, seed=9)
    c = sample_visitation(small_mdp, pi, 300, seed=10)
    assert np.array_equal(a.states, b.states) and np.array_equal(a.actions, b.actions)
    assert not np.array_equal(a.states, c.states)
    t1 = sample_stationary_transitions(small_mdp, pi, 300, seed=9)
    t2 = sample_stationary_transitions(small_mdp, pi, 300, seed=9)
    assert np.array_equal(t1.next_states, t2.next_states)


def test_tiny_gamma_visits_initial_distribution(small_mdp, rng):
    zeta = np.array([0.1, 0.2, 0.3, 0.4])
    mdp = TabularMdp(small_mdp.transition, small_mdp.reward, 1e-9, zeta)
    batch = sample_visitation(mdp, random_policy(rng, 4, 3), 100_000, seed=0)
    nu_hat = empirical_pairs(batch, 4, 3).sum(axis=1)
    assert total_variation(nu_hat, zeta) <= 0.02


def test_visitation_tv_and_chi_square():
    mdp = random_mdp(5, 3, 0.9, seed=3)
    pi = random_policy(np.random.default_rng(3), 5, 3)
    sigma = visitation_measures(mdp, pi).sigma
    batch = sample_visitation(mdp, pi, 100_000, burn_in=100, seed=2)
    counts = batch.pair_counts(5, 3).ravel()
    assert total_variation(counts / len(batch), sigma.ravel()) <= 0.05
    p = stats.chisquare(counts, len(batch) * sigma.ravel()).pvalue
    assert p >= 0.01


def test_restart_frequency(small_mdp, rng):
    batch = sample_visitation(small_mdp, random_policy(rng, 4, 3), 200_000, seed=4)
    p = 1.0 - small_mdp.discount
    frac = batch.restarts / batch.steps
    assert abs(frac - p) <= 3.0 * np.sqrt(p * (1 - p) / batch.steps)


def test_cycle_transitions_follow_cycle():
    mdp = cycle_mdp()
    batch = sample_stationary_transitions(mdp, np.ones((4, 1)), 200, seed=0)
    assert np.array_equal(batch.next_states, (batch.states + 1) % 4)
    assert np.array_equal(batch.states[1:], batch.next_states[:-1])
    assert np.array_equal(batch.rewards, batch.states.astype(float))


def test_one_state_tuples(rng):
    mdp = one_state_mdp([0.2, -0.4, 1.0], gamma=0.5)
    pi = np.array([[0.2, 0.3, 0.5]])
    batch = sample_stationary_transitions(mdp, pi, 50_000, seed=1)
    assert (batch.states == 0).all() and (batch.next_states == 0).all()
    np.testing.assert_array_equal(batch.rewards, mdp.reward[0, batch.actions])
    freq = np.bincount(batch.actions, minlength=3) / len(batch)
    assert total_variation(freq, pi[0]) <= 0.01


def test_stationary_sampler_tv(rng):
    mdp = random_mdp(5, 3, 0.9, seed=5)
    pi = random_policy(rng, 5, 3)
    varsigma = stationary_measures(mdp, pi).varsigma
    batch = sample_stationary_transitions(mdp, pi, 100_000, seed=3)
    assert total_variation(empirical_pairs(batch, 5, 3), varsigma) <= 0.05


def test_transition_internals_consistent(small_mdp, rng):
    pi = random_policy(rng, 4, 3)
    batch = sample_stationary_transitions(small_mdp, pi, 2000, seed=6)
    assert np.array_equal(batch.rewards, small_mdp.reward[batch.states, batch.actions])
    assert (small_mdp.transition[batch.states, batch.actions, batch.next_states] > 0).all()


def test_batch_csv(tmp_path, small_mdp, rng):
    pi = random_policy(rng, 4, 3)
    pairs = sample_visitation(small_mdp, pi, 5, seed=0)
    pairs.to_csv(tmp_path / "pairs.csv")
    lines = (tmp_path / "pairs.csv").read_text().splitlines()
    assert lines[0] == "s,a" and len(lines) == 6
    tr = sample_stationary_transitions(small_mdp, pi, 5, seed=0)
    tr.to_csv(tmp_path / "tr.csv")
    rows = [line.split(",") for line in (tmp_path / "tr.csv").read_text().splitlines()]
    assert rows[0] == ["s", "a", "r", "s_next", "a_next"]
    assert float(rows[1][2]) == tr.rewards[0]
