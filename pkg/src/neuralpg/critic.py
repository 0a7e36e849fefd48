"""Neural TD(0) critic with ball projection and iterate averaging.

The TD residual keeps the (1 - gamma) reward factor of the scaled value
convention:

    delta = Q_w(s, a) - (1 - gamma) r - gamma Q_w(s', a')

Most TD code drops that factor. Leaving it in makes the fixed point the scaled
Q-function returned by ``mdp.exact_values``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from neuralpg.mdp import TabularMdp, as_probs, stationary_measures, exact_values
from neuralpg.network import NetInit, forward_all, project_ball
from neuralpg.sampling import sample_stationary_transitions


@dataclass(frozen=True, eq=False)
class CriticState:
    omega: np.ndarray
    omega_bar: np.ndarray
    t: int = 0

    @classmethod
    def start(cls, init: NetInit) -> "CriticState":
        w = np.array(init.w_init)
        return cls(w, w.copy(), 0)


def default_td_steps(width: int) -> int:
    return max(width, 10_000)


def default_td_rate(gamma: float, T_td: int) -> float:
    """eta_TD = min{(1 - gamma) / 8, 1 / sqrt(T_TD)}."""
    return min((1.0 - gamma) / 8.0, 1.0 / math.sqrt(T_td))


def _q_and_grad_coef(omega, coef, x):
    pre = omega @ x
    act = pre > 0
    return float(coef[act] @ pre[act]), act


def _td_update(omega, coef, x, x_next, r, gamma, eta):
    q, act = _q_and_grad_coef(omega, coef, x)
    q_next, _ = _q_and_grad_coef(omega, coef, x_next)
    delta = q - (1.0 - gamma) * r - gamma * q_next
    new = omega.copy()
    if delta != 0.0:
        # grad_w Q_w(s,a) = phi_w(s,a): rows (b_r / sqrt m) 1{x^T w_r > 0} x
        new[act] -= (eta * delta * coef[act])[:, None] * x[None, :]
    return new, delta


def td_step(state: CriticState, transition, eta_td: float, init: NetInit, R: float, *, embedding, gamma: float):
    """One projected semigradient step followed by the averaging update.

    ``transition`` is ``(s, a, r, s_next, a_next)``.
    """
    s, a, r, s2, a2 = transition
    coef = init.signs / math.sqrt(init.width)
    half, _ = _td_update(state.omega, coef, embedding(s, a), embedding(s2, a2), float(r), gamma, eta_td)
    omega = project_ball(half, init, R)
    t = state.t
    bar = (t + 1) / (t + 2) * state.omega_bar + omega / (t + 2)
    return CriticState(omega, bar, t + 1)


def critic_error(init: NetInit, omega: np.ndarray, embedding, q_true: np.ndarray, weights: np.ndarray) -> float:
    """||Q_omega - Q||_w over all pairs."""
    diff = forward_all(init, omega, embedding.table) - q_true
    return float(np.sqrt(np.sum(weights * diff**2)))


@dataclass(frozen=True, eq=False)
class CriticResult:
    omega_bar: np.ndarray
    omega: np.ndarray
    initial_error: float
    final_error: float
    history: list = field(default_factory=list)  # (t, td_error, dist_to_init, exact_critic_error)
    T_td: int = 0
    eta_td: float = 0.0


def train_critic(
    mdp: TabularMdp,
    policy,
    init: NetInit,
    T_td: int | None = None,
    eta_td: float | None = None,
    R: float = 2.0,
    seed: int = 0,
    *,
    embedding=None,
    log_every: int = 0,
    burn_in: int | None = None,
    keep_iterates: bool = False,
) -> CriticResult:
    """Run neural TD for ``T_td`` steps from omega(0) = W_init; return the averaged iterate.

    ``policy`` is an EnergyPolicy (its embedding is used) or any probability
    table together with an explicit ``embedding``. The error columns in the
    history are exact, measured under the stationary pair distribution.
    ``td_error`` is the mean squared TD residual since the previous log row.
    """
    if embedding is None:
        embedding = policy.embedding
    T_td = default_td_steps(init.width) if T_td is None else int(T_td)
    eta_td = default_td_rate(mdp.discount, T_td) if eta_td is None else float(eta_td)
    gamma = mdp.discount

    probs = as_probs(policy)
    varsigma = stationary_measures(mdp, probs).varsigma
    q_true = exact_values(mdp, probs).q
    batch = sample_stationary_transitions(mdp, probs, T_td, burn_in=burn_in, seed=seed)

    A = mdp.n_actions
    X = embedding.flat
    coef = init.signs / math.sqrt(init.width)
    p_now = (batch.states * A + batch.actions).tolist()
    p_next = (batch.next_states * A + batch.next_actions).tolist()
    rewards = batch.rewards.tolist()

    omega = np.array(init.w_init)
    total = omega.copy()  # sum of omega(0..t)
    w0 = init.w_init
    initial = critic_error(init, omega, embedding, q_true, varsigma)
    history = [(0, float("nan"), 0.0, initial)] if log_every else []
    iterates = [omega] if keep_iterates else None
    sq_sum, sq_n = 0.0, 0
    for t in range(T_td):
        half, delta = _td_update(omega, coef, X[p_now[t]], X[p_next[t]], rewards[t], gamma, eta_td)
        diff = half - w0
        dist = math.sqrt(float(np.vdot(diff, diff)))
        omega = half if dist <= R else w0 + diff * (R / dist)
        total += omega
        sq_sum += delta * delta
        sq_n += 1
        if keep_iterates:
            iterates.append(omega)
        if log_every and (t + 1) % log_every == 0:
            bar = total / (t + 2)
            history.append(
                (t + 1, sq_sum / sq_n, min(dist, R), critic_error(init, bar, embedding, q_true, varsigma))
            )
            sq_sum, sq_n = 0.0, 0
    omega_bar = total / (T_td + 1)
    result = CriticResult(
        omega_bar=omega_bar,
        omega=omega,
        initial_error=initial,
        final_error=critic_error(init, omega_bar, embedding, q_true, varsigma),
        history=history,
        T_td=T_td,
        eta_td=eta_td,
    )
    if keep_iterates:
        object.__setattr__(result, "iterates", iterates)
    return result


def clipped_critic_eval(omega: np.ndarray, s: int, a: int, q_max: float, *, init: NetInit, embedding) -> float:
    """Q_omega(s, a) clamped to [-q_max, q_max]."""
    q = float(forward_all(init, omega, embedding(s, a)))
    return min(max(q, -q_max), q_max)


def clipped_critic_table(omega: np.ndarray, q_max: float, *, init: NetInit, embedding) -> np.ndarray:
    return np.clip(forward_all(init, omega, embedding.table), -q_max, q_max)


def mean_squared_td_error(init: NetInit, omega: np.ndarray, embedding, batch, gamma: float) -> float:
    """Empirical mean of delta^2 over a batch of stationary transitions."""
    Q = forward_all(init, omega, embedding.table)
    delta = (
        Q[batch.states, batch.actions]
        - (1.0 - gamma) * batch.rewards
        - gamma * Q[batch.next_states, batch.next_actions]
    )
    return float(np.mean(delta**2))
