"""Monte-Carlo batches from the visitation measure and the stationary distribution.

Both samplers run one continued trajectory: after ``burn_in`` discarded steps
the next ``B`` steps form the batch, so samples are only approximately
independent.
"""

from __future__ import annotations

import bisect
import csv
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from neuralpg.mdp import TabularMdp, as_probs
from neuralpg.rng import make_rng


@dataclass(frozen=True, eq=False)
class Batch:
    states: np.ndarray
    actions: np.ndarray
    rewards: np.ndarray | None = None
    next_states: np.ndarray | None = None
    next_actions: np.ndarray | None = None
    restarts: int = 0  # restart transitions taken while producing the batch
    steps: int = 0  # total transitions simulated, burn-in included

    def __len__(self) -> int:
        return len(self.states)

    @property
    def has_transitions(self) -> bool:
        return self.next_states is not None

    def pair_counts(self, n_states: int, n_actions: int) -> np.ndarray:
        counts = np.zeros((n_states, n_actions))
        np.add.at(counts, (self.states, self.actions), 1.0)
        return counts

    def pair_values(self, table: np.ndarray) -> np.ndarray:
        return table[self.states, self.actions]

    def to_csv(self, path) -> None:
        path = Path(path)
        with path.open("w", newline="") as fh:
            w = csv.writer(fh)
            if self.has_transitions:
                w.writerow(["s", "a", "r", "s_next", "a_next"])
                for row in zip(self.states, self.actions, self.rewards, self.next_states, self.next_actions):
                    w.writerow([int(row[0]), int(row[1]), repr(float(row[2])), int(row[3]), int(row[4])])
            else:
                w.writerow(["s", "a"])
                w.writerows(zip(self.states.tolist(), self.actions.tolist()))


def default_burn_in(gamma: float) -> int:
    # the tolerance keeps 1 / (1 - 0.9) = 10.000000000000002 from rounding up to 11
    return 10 * math.ceil(1.0 / (1.0 - gamma) - 1e-9)


def _cdf_rows(table: np.ndarray) -> list:
    cdf = np.cumsum(table, axis=-1)
    cdf[..., -1] = 1.0
    return cdf.tolist()


def _draw(cdf_row, u) -> int:
    return bisect.bisect_right(cdf_row, u)


def sample_visitation(
    mdp: TabularMdp, policy, B: int, burn_in: int | None = None, seed: int = 0
):
    """Pairs from the restart chain P~ = gamma P + (1 - gamma) zeta, whose
    stationary state-action law is the visitation measure sigma_pi."""
    if B < 1:
        raise ValueError(f"batch size must be >= 1, got {B}")
    if burn_in is None:
        burn_in = default_burn_in(mdp.discount)
    pi = as_probs(policy)
    rng = make_rng(seed, "visitation")
    S, A = mdp.n_states, mdp.n_actions
    pi_cdf = _cdf_rows(pi)
    P_cdf = [_cdf_rows(mdp.transition[s]) for s in range(S)]
    zeta_cdf = _cdf_rows(mdp.init_dist)
    gamma = mdp.discount
    n = burn_in + B
    # per step: action draw, restart coin, next-state draw
    U = rng.random((n, 3)).tolist()

    states = np.empty(B, dtype=np.int64)
    actions = np.empty(B, dtype=np.int64)
    s = _draw(zeta_cdf, rng.random())
    restarts = 0
    for t in range(n):
        ua, uc, us = U[t]
        a = _draw(pi_cdf[s], ua)
        if t >= burn_in:
            states[t - burn_in] = s
            actions[t - burn_in] = a
        if uc < 1.0 - gamma:
            restarts += 1
            s = _draw(zeta_cdf, us)
        else:
            s = _draw(P_cdf[s][a], us)
    return Batch(states, actions, restarts=restarts, steps=n)


def sample_stationary_transitions(
    mdp: TabularMdp, policy, B: int, burn_in: int | None = None, seed: int = 0
) -> Batch:
    """Tuples (s, a, r, s', a') from the chain induced by ``policy`` run past burn-in."""
    if B < 1:
        raise ValueError(f"batch size must be >= 1, got {B}")
    if burn_in is None:
        burn_in = max(100, default_burn_in(mdp.discount))
    pi = as_probs(policy)
    rng = make_rng(seed, "stationary")
    S = mdp.n_states
    pi_cdf = _cdf_rows(pi)
    P_cdf = [_cdf_rows(mdp.transition[s]) for s in range(S)]
    n = burn_in + B
    U = rng.random((n + 1, 2)).tolist()

    s = _draw(_cdf_rows(mdp.init_dist), rng.random())
    a = _draw(pi_cdf[s], U[0][0])
    traj_s = np.empty(B + 1, dtype=np.int64)
    traj_a = np.empty(B + 1, dtype=np.int64)
    for t in range(n + 1):
        if t >= burn_in:
            traj_s[t - burn_in] = s
            traj_a[t - burn_in] = a
        if t == n:
            break
        us, ua = U[t + 1]
        s = _draw(P_cdf[s][a], us)
        a = _draw(pi_cdf[s], ua)
    states, actions = traj_s[:-1], traj_a[:-1]
    return Batch(
        states,
        actions,
        rewards=mdp.reward[states, actions],
        next_states=traj_s[1:],
        next_actions=traj_a[1:],
        steps=n,
    )


def empirical_pairs(batch: Batch, n_states: int, n_actions: int) -> np.ndarray:
    return batch.pair_counts(n_states, n_actions) / len(batch)


def total_variation(p: np.ndarray, q: np.ndarray) -> float:
    return 0.5 * float(np.abs(np.asarray(p) - np.asarray(q)).sum())
