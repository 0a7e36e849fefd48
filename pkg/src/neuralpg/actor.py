"""Actor updates: sampled policy gradient, the Fisher operator, PG / NPG steps.

All batch reductions aggregate the batch into per-pair weights ``n_p / B``
first. With a finite state-action space this turns every O(B m d) sum into an
O(|S||A| m d) one and makes the estimators exact sample means regardless.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from neuralpg.errors import InvalidDimensionError
from neuralpg.network import NetInit, project_ball
from neuralpg.policy import EnergyPolicy
from neuralpg.rng import make_rng

DEFAULT_MEMORY_BUDGET = 200_000_000  # reals


def _pair_weights(batch, n_states: int, n_actions: int) -> np.ndarray:
    if len(batch) == 0:
        raise ValueError("empty batch")
    return batch.pair_counts(n_states, n_actions) / len(batch)


def critic_table(critic, n_states: int, n_actions: int) -> np.ndarray:
    """Evaluate a critic once per pair: accepts an (S, A) table or a callable (s, a) -> float."""
    if callable(critic):
        return np.array([[float(critic(s, a)) for a in range(n_actions)] for s in range(n_states)])
    table = np.asarray(critic, dtype=float)
    if table.shape != (n_states, n_actions):
        raise InvalidDimensionError(f"critic table has shape {table.shape}, expected {(n_states, n_actions)}")
    return table


@dataclass(frozen=True, eq=False)
class GradientEstimate:
    ghat: np.ndarray  # (m, d)
    batch_size: int


def estimate_policy_gradient(policy: EnergyPolicy, critic_eval, batch) -> GradientEstimate:
    """ghat = (1/B) sum_l Q(s_l, a_l) grad log pi_theta(a_l | s_l)."""
    S, A = policy.n_states, policy.n_actions
    w = _pair_weights(batch, S, A)
    q = critic_table(critic_eval, S, A)
    return GradientEstimate(weighted_policy_gradient(policy, q, w), len(batch))


def weighted_policy_gradient(policy: EnergyPolicy, q: np.ndarray, weights: np.ndarray) -> np.ndarray:
    """tau * sum_{s,a} weights[s, a] q[s, a] centered_phi_theta(s, a)."""
    if policy.tau == 0:
        return np.zeros_like(policy.theta)
    return policy.tau * policy.basis().combine(weights * q)


class FisherOperator:
    """F_hat = (tau^2 / B) sum_l u_l u_l^T with u_l the centered feature of pair l.

    Stored as per-pair weights over the distinct pairs. When the distinct
    centered features fit in ``memory_budget`` reals they are materialized;
    otherwise products go through the implicit activation-pattern basis.
    """

    def __init__(self, policy: EnergyPolicy, weights: np.ndarray, *, memory_budget: int = DEFAULT_MEMORY_BUDGET,
                 materialize: bool | None = None):
        self.tau = float(policy.tau)
        self.shape = policy.theta.shape
        self.weights = np.asarray(weights, dtype=float)
        self._basis = policy.basis()
        support = np.flatnonzero(self.weights.ravel() > 0)
        self._support = support
        n_cells = support.size * self.theta_size
        if materialize is None:
            materialize = n_cells <= memory_budget
        self.materialized = bool(materialize)
        if self.materialized:
            self._U = self._basis.dense()[support]
            self._w = self.weights.ravel()[support]

    @classmethod
    def from_batch(cls, policy: EnergyPolicy, batch, **kwargs) -> "FisherOperator":
        return cls(policy, _pair_weights(batch, policy.n_states, policy.n_actions), **kwargs)

    @property
    def theta_size(self) -> int:
        return self.shape[0] * self.shape[1]

    def apply(self, v: np.ndarray) -> np.ndarray:
        v = np.asarray(v, dtype=float)
        if v.size != self.theta_size:
            raise InvalidDimensionError(f"vector of size {v.size}, expected {self.theta_size}")
        scale = self.tau**2
        if self.materialized:
            return (scale * (self._U.T @ (self._w * (self._U @ v.ravel())))).reshape(self.shape)
        proj = self._basis.dots(v.reshape(self.shape))
        return scale * self._basis.combine(self.weights * proj)

    __call__ = apply

    def dense(self) -> np.ndarray:
        U = self._basis.dense()
        w = self.weights.ravel()
        return self.tau**2 * (U.T * w) @ U


def fisher_apply(op: FisherOperator, v: np.ndarray) -> np.ndarray:
    return op.apply(v)


def vanilla_pg_update(theta: np.ndarray, ghat: np.ndarray, eta: float, init: NetInit, R: float) -> np.ndarray:
    """theta <- Pi_B(theta + eta * ghat)."""
    return project_ball(theta + eta * ghat, init, R)


@dataclass(frozen=True, eq=False)
class BallLstsqResult:
    x: np.ndarray
    residual: float
    start_residual: float
    iters: int
    converged: bool
    mapping_norm: float
    residuals: list


def _power_norm_sq(apply, adjoint, shape, rng, iters=20) -> float:
    """Estimate ||A||_op^2 by power iteration on A^T A."""
    v = rng.standard_normal(shape)
    v /= np.linalg.norm(v)
    lam = 0.0
    for _ in range(iters):
        w = adjoint(apply(v))
        lam = float(np.linalg.norm(w))
        if lam == 0.0:
            return 0.0
        v = w / lam
    return lam


def ball_lstsq(
    apply: Callable,
    adjoint: Callable,
    target: np.ndarray,
    center: np.ndarray,
    R: float,
    x0: np.ndarray,
    max_iters: int = 200,
    tol: float = 1e-8,
    seed: int = 0,
) -> BallLstsqResult:
    """Projected gradient descent for min_{||x - center|| <= R} 0.5 ||A x - target||^2.

    Step 1 / L with L = ||A||^2 from 20 power iterations; any step that would
    raise the residual halves the step and retries, so the residual sequence
    is non-increasing. Stops when the gradient-mapping norm drops below
    ``tol`` and otherwise returns the best iterate with ``converged=False``.
    """
    def proj(x):
        diff = x - center
        n = np.linalg.norm(diff)
        return x if n <= R else center + diff * (R / n)

    x = proj(np.array(x0, dtype=float))
    r = apply(x) - target
    res = float(np.linalg.norm(r))
    start = res
    L = _power_norm_sq(apply, adjoint, x.shape, make_rng(seed, "power_iteration"))
    residuals = [res]
    if L == 0.0:
        return BallLstsqResult(x, res, start, 0, True, 0.0, residuals)
    step = 1.0 / L
    mapping = float("inf")
    it = 0
    converged = False
    while it < max_iters:
        it += 1
        g = adjoint(r)
        x_new = proj(x - step * g)
        mapping = float(np.linalg.norm(x_new - x)) / step
        if mapping <= tol:
            converged = True
            break
        r_new = apply(x_new) - target
        res_new = float(np.linalg.norm(r_new))
        if res_new > res:
            step *= 0.5
            residuals.append(res)
            continue
        x, r, res = x_new, r_new, res_new
        residuals.append(res)
    return BallLstsqResult(x, res, start, it, converged, mapping, residuals)


@dataclass(frozen=True, eq=False)
class NpgDirection:
    delta: np.ndarray
    residual: float
    solver_iters: int
    converged: bool = True
    warm_residual: float = float("nan")
    mapping_norm: float = float("nan")


def npg_solve(
    op: FisherOperator,
    target: np.ndarray,
    init: NetInit,
    R: float,
    warm_start: np.ndarray | None = None,
    max_iters: int = 200,
    tol: float = 1e-8,
) -> NpgDirection:
    """delta ~ argmin_{alpha in B} ||F_hat alpha - target||, with target = tau * ghat.

    The ball is centered at W_init. The warm start defaults to W_init.
    """
    x0 = init.w_init if warm_start is None else warm_start
    out = ball_lstsq(op.apply, op.apply, np.asarray(target, dtype=float), init.w_init, R, x0, max_iters, tol)
    return NpgDirection(out.x, out.residual, out.iters, out.converged, out.start_residual, out.mapping_norm)


def npg_update(tau_i: float, theta_i: np.ndarray, delta, eta: float):
    """tau_{i+1} = tau_i + eta; theta_{i+1} = (tau_i theta_i + eta delta) / tau_{i+1}."""
    if not eta > 0:
        raise ValueError(f"eta must be positive, got {eta}")
    d = delta.delta if isinstance(delta, NpgDirection) else delta
    tau_next = tau_i + eta
    if tau_i == 0:
        # the update forgets theta_i; skip the eta * d / eta round trip
        return tau_next, np.array(d, dtype=float)
    return tau_next, (tau_i * theta_i + eta * d) / tau_next


def projection_free_update(theta: np.ndarray, policy: EnergyPolicy, clipped_critic, batch, eta: float) -> np.ndarray:
    """theta + eta * ghat with the clipped critic and no projection."""
    g = estimate_policy_gradient(policy, clipped_critic, batch).ghat
    return theta + eta * g


def step_bound(eta: float, tau: float, q_max: float) -> float:
    """Upper bound 2 eta tau q_max on one projection-free step."""
    return 2.0 * eta * tau * q_max


def ghat_noise(policy: EnergyPolicy, critic_eval, batches, reference: np.ndarray) -> float:
    """RMS of ||ghat - reference|| over resampled batches (a diagnostic)."""
    errs = [np.linalg.norm(estimate_policy_gradient(policy, critic_eval, b).ghat - reference) for b in batches]
    return float(math.sqrt(np.mean(np.square(errs))))
