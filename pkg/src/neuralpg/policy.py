"""Energy-based softmax policy over network outputs.

pi_theta(a|s) is proportional to exp(tau * f((s, a); theta)). The policy is an
immutable snapshot; updates build a new one.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np

from neuralpg.mdp import Embedding, TabularPolicy
from neuralpg.network import FeatureBasis, NetInit, forward_all


def softmax_rows(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def log_softmax_rows(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=-1, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=-1, keepdims=True))


@dataclass(frozen=True, eq=False)
class EnergyPolicy:
    theta: np.ndarray
    tau: float
    init: NetInit
    embedding: Embedding

    def __post_init__(self):
        if self.tau < 0:
            raise ValueError(f"tau must be >= 0, got {self.tau}")

    @property
    def n_states(self) -> int:
        return self.embedding.table.shape[0]

    @property
    def n_actions(self) -> int:
        return self.embedding.table.shape[1]

    @cached_property
    def energies(self) -> np.ndarray:
        """f((s, a); theta) for all pairs, shape (S, A)."""
        return forward_all(self.init, self.theta, self.embedding.table)

    @cached_property
    def probs(self) -> np.ndarray:
        p = softmax_rows(self.tau * self.energies)
        p.setflags(write=False)
        return p

    def table(self) -> TabularPolicy:
        return TabularPolicy(self.probs)

    def log_probs(self) -> np.ndarray:
        return log_softmax_rows(self.tau * self.energies)

    def basis(self, at_params: np.ndarray | None = None) -> "CenteredBasis":
        """Centered features at ``at_params`` (default theta), centered under this policy."""
        params = self.theta if at_params is None else at_params
        return CenteredBasis(FeatureBasis(self.init, params, self.embedding.flat), self.probs)


class CenteredBasis:
    """phi(s, a) - E_{a' ~ pi(.|s)} phi(s, a') over all pairs, kept implicit."""

    def __init__(self, basis: FeatureBasis, probs: np.ndarray):
        self.basis = basis
        self.probs = np.asarray(probs)
        self.shape = self.probs.shape

    def dots(self, v: np.ndarray) -> np.ndarray:
        """Table of centered-feature inner products with v, shape (S, A)."""
        raw = self.basis.dots(v).reshape(self.shape)
        return raw - (self.probs * raw).sum(axis=1, keepdims=True)

    def combine(self, w: np.ndarray) -> np.ndarray:
        """sum_{s,a} w[s, a] * centered phi(s, a), as an (m, d) array."""
        w = np.asarray(w, dtype=float).reshape(self.shape)
        shifted = w - self.probs * w.sum(axis=1, keepdims=True)
        return self.basis.combine(shifted.ravel())

    def row(self, s: int, a: int) -> np.ndarray:
        A = self.shape[1]
        mean = sum(self.probs[s, b] * self.basis.row(s * A + b) for b in range(A))
        return self.basis.row(s * A + a) - mean

    def dense(self) -> np.ndarray:
        """Materialized centered features, shape (S*A, m*d)."""
        S, A = self.shape
        F = self.basis.dense().reshape(S, A, -1)
        F = F - np.einsum("sa,saj->sj", self.probs, F)[:, None, :]
        return F.reshape(S * A, -1)


def action_probs(policy: EnergyPolicy, s: int) -> np.ndarray:
    return policy.probs[s]


def centered_feature(policy: EnergyPolicy, s: int, a: int, at_params: np.ndarray | None = None) -> np.ndarray:
    """phi_{at}(s, a) - E_{pi_theta}[phi_{at}(s, a')].

    With ``at_params = W_init`` this is the centered feature map at the
    initialization; the expectation is always under the policy's own theta.
    """
    return policy.basis(at_params).row(s, a)


def log_prob_grad(policy: EnergyPolicy, s: int, a: int) -> np.ndarray:
    """grad_theta log pi_theta(a|s) = tau * centered phi_theta(s, a)."""
    return policy.tau * centered_feature(policy, s, a, policy.theta)
