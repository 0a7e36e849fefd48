"""Exact tabular computations of the quantities the algorithms only estimate.

Everything here sums over the finite state-action space with exact values
and exact occupancy measures from ``neuralpg.mdp``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from neuralpg.actor import ball_lstsq
from neuralpg.errors import InvalidDimensionError, SupportError
from neuralpg.mdp import (
    TabularMdp,
    as_probs,
    exact_values,
    expected_total_reward,
    stationary_measures,
    visitation_measures,
)
from neuralpg.network import FeatureBasis, NetInit, forward_all, project_ball
from neuralpg.policy import EnergyPolicy

SUPPORT_EPS = 1e-14
FISHER_MAX_SIZE = 500


def exact_policy_gradient(mdp: TabularMdp, policy: EnergyPolicy, *, method: str = "combine") -> np.ndarray:
    """The derivative of J(pi_theta) in theta, from exact Q and sigma.

    With J, Q and sigma all carrying the (1 - gamma) factor, the
    derivative is tau / (1 - gamma) * E_sigma[Q centered_phi_theta]. The
    sampled estimator (``actor.estimate_policy_gradient``) omits the
    1 / (1 - gamma), so its mean is (1 - gamma) times this vector.

    ``method="rows"`` accumulates one centered feature per pair instead of
    the vectorized reduction; the two agree to rounding.
    """
    return score_expectation(mdp, policy, method=method) / (1.0 - mdp.discount)


def score_expectation(mdp: TabularMdp, policy: EnergyPolicy, *, method: str = "combine") -> np.ndarray:
    """tau * E_sigma[Q(s, a) centered_phi_theta(s, a)], the mean of the sampled estimator."""
    if policy.tau == 0:
        return np.zeros_like(policy.theta)
    probs = policy.probs
    q = exact_values(mdp, probs).q
    sigma = visitation_measures(mdp, probs).sigma
    basis = policy.basis()
    if method == "combine":
        return policy.tau * basis.combine(sigma * q)
    if method != "rows":
        raise ValueError(f"unknown method {method!r}")
    g = np.zeros_like(policy.theta)
    for s in range(mdp.n_states):
        for a in range(mdp.n_actions):
            g += sigma[s, a] * q[s, a] * basis.row(s, a)
    return policy.tau * g


def exact_fisher(mdp: TabularMdp, policy: EnergyPolicy) -> np.ndarray:
    """tau^2 E_sigma[centered_phi centered_phi^T] as a dense (md, md) matrix."""
    size = policy.theta.size
    if size > FISHER_MAX_SIZE:
        raise InvalidDimensionError(f"exact_fisher needs m*d <= {FISHER_MAX_SIZE}, got {size}")
    sigma = visitation_measures(mdp, policy.probs).sigma.ravel()
    U = policy.basis().dense()
    F = policy.tau**2 * (U.T * sigma) @ U
    return 0.5 * (F + F.T)


def exact_j(mdp: TabularMdp, policy) -> float:
    return expected_total_reward(mdp, policy)


def gradient_mapping(theta: np.ndarray, exact_grad: np.ndarray, eta: float, init: NetInit, R: float) -> np.ndarray:
    """rho = (Pi_B(theta + eta grad) - theta) / eta."""
    return (project_ball(theta + eta * exact_grad, init, R) - theta) / eta


def performance_difference_check(mdp: TabularMdp, pi, pi_tilde):
    """Return (J(pi~) - J(pi), E_{sigma_pi~}[A^pi] / (1 - gamma))."""
    lhs = expected_total_reward(mdp, pi_tilde) - expected_total_reward(mdp, pi)
    adv = exact_values(mdp, pi).adv
    sigma_t = visitation_measures(mdp, pi_tilde).sigma
    rhs = float(np.sum(sigma_t * adv)) / (1.0 - mdp.discount)
    return lhs, rhs


def _chi_norm(num: np.ndarray, den: np.ndarray, name: str) -> float:
    """{E_den[(num / den)^2]}^{1/2} = sqrt(sum num^2 / den)."""
    num = np.asarray(num, dtype=float)
    den = np.asarray(den, dtype=float)
    bad = (den <= SUPPORT_EPS) & (num > 0)
    if bad.any():
        where = tuple(int(i) for i in np.argwhere(bad)[0])
        raise SupportError(f"{name}: numerator positive where denominator vanishes at {where}", where)
    ok = den > SUPPORT_EPS
    return float(np.sqrt(np.sum(num[ok] ** 2 / den[ok])))


@dataclass(frozen=True)
class ConcentrabilityReport:
    kappa: float  # sigma_i against varsigma_i
    phi: float  # sigma_* against sigma_i
    psi: float  # nu_* against nu_i
    phi_prime: float  # sigma_* against varsigma_i
    psi_prime: float  # nu_* against rho_i


def concentrability(mdp: TabularMdp, policy, pi_star) -> ConcentrabilityReport:
    probs = as_probs(policy)
    vis = visitation_measures(mdp, probs)
    stat = stationary_measures(mdp, probs)
    star = visitation_measures(mdp, pi_star)
    return ConcentrabilityReport(
        kappa=_chi_norm(vis.sigma, stat.varsigma, "kappa"),
        phi=_chi_norm(star.sigma, vis.sigma, "phi"),
        psi=_chi_norm(star.nu, vis.nu, "psi"),
        phi_prime=_chi_norm(star.sigma, stat.varsigma, "phi_prime"),
        psi_prime=_chi_norm(star.nu, stat.rho, "psi_prime"),
    )


def compatibility_error(theta: np.ndarray, omega: np.ndarray, policy: EnergyPolicy, measure) -> float:
    """|| centered_phi_theta^T omega - centered_phi_omega^T omega ||_sigma.

    Both feature maps are centered under ``policy``; ``measure`` is a
    MeasureSet (its sigma is used) or a weight table over pairs.
    """
    sigma = np.asarray(getattr(measure, "sigma", measure), dtype=float)
    diff = policy.basis(theta).dots(omega) - policy.basis(omega).dots(omega)
    return float(np.sqrt(np.sum(sigma * diff**2)))


def kl_per_state(p: np.ndarray, q: np.ndarray) -> np.ndarray:
    """D_KL(p(.|s) || q(.|s)) for every state, with 0 log 0 = 0."""
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        terms = np.where(p > 0, p * (np.log(p) - np.log(q)), 0.0)
    return terms.sum(axis=1)


@dataclass(frozen=True)
class OptimalityCertificate:
    gap: float  # J(pi*) - J(pi_hat)
    bound: float  # 2 q_max ||u - phi^T theta_fit||_sigma
    u_residual: float  # ||u - phi^T theta_fit||_sigma
    stationarity_slack: float  # (1 - gamma) max(0, grad J^T (theta_fit - theta_hat)) / tau
    solver_mapping_norm: float
    holds: bool  # (1 - gamma) gap <= bound + stationarity slack (+ 1e-12)


def u_function(mdp: TabularMdp, policy: EnergyPolicy, pi_star) -> np.ndarray:
    """u(s, a) = dsigma_*/dsigma (s, a) - dnu_*/dnu (s) + f((s, a); theta)."""
    probs = policy.probs
    vis = visitation_measures(mdp, probs)
    star = visitation_measures(mdp, pi_star)
    _chi_norm(star.sigma, vis.sigma, "u_function")  # support check
    ok_sa = vis.sigma > SUPPORT_EPS
    ok_s = vis.nu > SUPPORT_EPS
    ratio_sa = np.divide(star.sigma, vis.sigma, out=np.zeros_like(vis.sigma), where=ok_sa)
    ratio_s = np.divide(star.nu, vis.nu, out=np.zeros_like(vis.nu), where=ok_s)
    return ratio_sa - ratio_s[:, None] + policy.energies


def optimality_certificate(
    mdp: TabularMdp,
    theta_hat: np.ndarray,
    policy: EnergyPolicy,
    pi_star,
    R: float,
    *,
    max_iters: int = 2000,
    tol: float = 1e-8,
) -> OptimalityCertificate:
    """Fit u by phi_theta_hat^T theta over the ball and compare against the gap.

    For every theta the exact identity

        (1 - gamma) gap = sum_p sigma_p A_p (u_p - phi_p^T theta)
                          + (1 - gamma) grad J(theta_hat)^T (theta - theta_hat) / tau

    holds. Cauchy-Schwarz with |A| <= 2 q_max bounds the first term by the
    reported bound, and the second term is the stationarity slack, which is
    non-positive at an exact stationary point.
    """
    init = policy.init
    probs = policy.probs
    sigma = visitation_measures(mdp, probs).sigma.ravel()
    u = u_function(mdp, policy, pi_star).ravel()
    feats = FeatureBasis(init, theta_hat, policy.embedding.flat)
    w = np.sqrt(sigma)

    def apply(th):
        return w * feats.dots(th)

    def adjoint(r):
        return feats.combine(w * r)

    fit = ball_lstsq(apply, adjoint, w * u, init.w_init, R, theta_hat, max_iters=max_iters, tol=tol)
    resid = fit.residual  # already sigma-weighted
    grad = exact_policy_gradient(mdp, policy)
    slack = 0.0
    if policy.tau > 0:
        slack = (1.0 - mdp.discount) * max(0.0, float(np.vdot(grad, fit.x - theta_hat))) / policy.tau
    j_star = expected_total_reward(mdp, pi_star)
    gap = j_star - expected_total_reward(mdp, probs)
    bound = 2.0 * mdp.q_max * resid
    holds = (1.0 - mdp.discount) * gap <= bound + slack + 1e-12
    return OptimalityCertificate(gap, bound, resid, slack, fit.mapping_norm, bool(holds))


def stationarity_audit(theta_hat, grad, init: NetInit, R: float, n_probes: int, rng) -> float:
    """max over random ball points theta of grad^T (theta - theta_hat) / ||theta - theta_hat||."""
    worst = -np.inf
    for _ in range(n_probes):
        d = rng.standard_normal(theta_hat.shape)
        d /= np.linalg.norm(d)
        theta = init.w_init + R * rng.random() ** (1.0 / d.size) * d
        step = theta - theta_hat
        n = np.linalg.norm(step)
        if n > 0:
            worst = max(worst, float(np.vdot(grad, step)) / n)
    return worst


def q_network_table(init: NetInit, omega: np.ndarray, embedding) -> np.ndarray:
    return forward_all(init, omega, embedding.table)
