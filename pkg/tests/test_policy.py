import numpy as np
import pytest

from neuralpg.mdp import Embedding
from neuralpg.network import NetInit, NetShape, feature_map, forward, init_net
from neuralpg.policy import (
    EnergyPolicy,
    action_probs,
    centered_feature,
    log_prob_grad,
    log_softmax_rows,
    softmax_rows,
)


def test_softmax_stable_and_shift_invariant():
    z = np.array([[1000.0, 1001.0, 999.0]])
    p = softmax_rows(z)
    assert np.isfinite(p).all() and p.sum() == pytest.approx(1.0)
    np.testing.assert_allclose(p, softmax_rows(z - 1000.0))
    np.testing.assert_allclose(np.exp(log_softmax_rows(z)), p)


def test_zero_temperature_is_uniform(small_setup):
    _, emb, init, policy = small_setup
    flat = EnergyPolicy(policy.theta, 0.0, init, emb)
    np.testing.assert_allclose(flat.probs, 1 / 3)
    assert not log_prob_grad(flat, 0, 1).any()
    with pytest.raises(ValueError):
        EnergyPolicy(policy.theta, -1.0, init, emb)


def test_rows_sum_to_one(small_setup):
    policy = small_setup[3]
    np.testing.assert_allclose(policy.probs.sum(axis=1), 1.0)
    np.testing.assert_allclose(action_probs(policy, 2), policy.probs[2])


def test_two_action_closed_form(small_setup):
    _, emb, init, policy = small_setup
    f = policy.energies
    expected = 1.0 / (1.0 + np.exp(-policy.tau * (f[:, 0] - f[:, 1])))
    sub = Embedding(np.array(emb.table[:, :2]))
    two = EnergyPolicy(policy.theta, policy.tau, init, sub)
    np.testing.assert_allclose(two.probs[:, 0], expected, rtol=1e-12)


def test_equal_energies_uniform():
    init = NetInit(np.array([[1.0, 0.0], [0.5, 0.5]]), np.array([1.0, -1.0]))
    x = np.array([1.0, 0.0])
    emb = Embedding(np.array([[x, x, x]]))
    np.testing.assert_allclose(EnergyPolicy(init.w_init, 3.0, init, emb).probs, 1 / 3)


def test_energies_match_pointwise_forward(small_setup):
    _, emb, init, policy = small_setup
    for s in range(4):
        for a in range(3):
            assert policy.energies[s, a] == pytest.approx(forward(init, policy.theta, emb(s, a)), abs=1e-13)


def test_temperature_sharpens(small_setup):
    _, emb, init, policy = small_setup
    f = policy.energies
    best = f.argmax(axis=1)
    prev = None
    for tau in (0.5, 1.0, 4.0, 16.0):
        p = EnergyPolicy(policy.theta, tau, init, emb).probs[np.arange(4), best]
        if prev is not None:
            assert (p >= prev - 1e-15).all()
        prev = p


def test_centered_features(small_setup):
    _, emb, init, policy = small_setup
    p = policy.probs
    for s in range(4):
        mean = sum(p[s, a] * centered_feature(policy, s, a) for a in range(3))
        np.testing.assert_allclose(mean, 0.0, atol=1e-14)
        raw = feature_map(policy.theta, emb(s, 1), init)
        avg = sum(p[s, b] * feature_map(policy.theta, emb(s, b), init) for b in range(3))
        np.testing.assert_allclose(centered_feature(policy, s, 1), raw - avg, atol=1e-14)
    # at W_init: features at the initialization, centered under the policy's own theta
    at0 = centered_feature(policy, 0, 2, init.w_init)
    raw0 = feature_map(init.w_init, emb(0, 2), init)
    avg0 = sum(p[0, b] * feature_map(init.w_init, emb(0, b), init) for b in range(3))
    np.testing.assert_allclose(at0, raw0 - avg0, atol=1e-14)


def test_single_action_centered_feature_is_zero():
    init = init_net(NetShape(8, 3, 2.0), seed=0)
    x = np.array([0.0, 0.6, 0.8])
    policy = EnergyPolicy(init.w_init, 1.0, init, Embedding(np.array([[x]])))
    assert not centered_feature(policy, 0, 0).any()


def test_score_is_log_prob_gradient(small_setup):
    _, emb, init, policy = small_setup
    eps = 1e-6
    theta = policy.theta
    X = emb.flat
    assert np.abs(X @ theta.T).min() > 10 * eps
    for s, a in [(0, 0), (2, 1), (3, 2)]:
        g = log_prob_grad(policy, s, a)
        fd = np.zeros_like(theta)
        for idx in np.ndindex(theta.shape):
            e = np.zeros_like(theta)
            e[idx] = eps
            up = EnergyPolicy(theta + e, policy.tau, init, emb).log_probs()[s, a]
            dn = EnergyPolicy(theta - e, policy.tau, init, emb).log_probs()[s, a]
            fd[idx] = (up - dn) / (2 * eps)
        np.testing.assert_allclose(fd, g, atol=1e-5)


def test_basis_dense_matches_rows(small_setup):
    policy = small_setup[3]
    basis = policy.basis()
    dense = basis.dense()
    for s in range(4):
        for a in range(3):
            np.testing.assert_allclose(dense[s * 3 + a], basis.row(s, a).ravel(), atol=1e-14)
    v = np.random.default_rng(0).standard_normal(policy.theta.shape)
    np.testing.assert_allclose(basis.dots(v).ravel(), dense @ v.ravel(), atol=1e-13)
