"""Finite MDPs, unit-sphere embeddings of state-action pairs and exact solvers.

All value quantities use the scaled convention: ``V``, ``Q`` and ``J`` carry
a ``(1 - gamma)`` prefactor, so they are bounded by ``max |r|``.

State-action pairs are flattened row-major, ``p = s * n_actions + a``.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from neuralpg.errors import (
    ConvergenceError,
    InvalidDimensionError,
    InvalidMdpError,
    NonMixingError,
    SolverError,
)
from neuralpg.rng import make_rng

PROB_ATOL = 1e-12


@dataclass(frozen=True, eq=False)
class TabularMdp:
    transition: np.ndarray  # (S, A, S)
    reward: np.ndarray  # (S, A)
    discount: float
    init_dist: np.ndarray  # (S,)
    q_max: float | None = None

    def __post_init__(self):
        P = np.asarray(self.transition, dtype=float)
        r = np.asarray(self.reward, dtype=float)
        zeta = np.asarray(self.init_dist, dtype=float)
        if P.ndim != 3 or P.shape[0] != P.shape[2]:
            raise InvalidMdpError(f"transition must have shape (S, A, S), got {P.shape}")
        S, A, _ = P.shape
        if r.shape != (S, A):
            raise InvalidMdpError(f"reward must have shape {(S, A)}, got {r.shape}")
        if zeta.shape != (S,):
            raise InvalidMdpError(f"init_dist must have shape {(S,)}, got {zeta.shape}")
        if not 0.0 < self.discount < 1.0:
            raise InvalidMdpError(f"discount must lie in (0, 1), got {self.discount}")
        if (P < 0).any() or np.abs(P.sum(axis=2) - 1.0).max() > PROB_ATOL:
            raise InvalidMdpError("transition rows must be probability vectors")
        if (zeta < 0).any() or abs(zeta.sum() - 1.0) > PROB_ATOL:
            raise InvalidMdpError("init_dist must be a probability vector")
        if not np.isfinite(r).all():
            raise InvalidMdpError("reward must be finite")
        r_abs = float(np.abs(r).max())
        q_max = self.q_max
        if q_max is None:
            q_max = r_abs if r_abs > 0 else 1.0
        if q_max <= 0 or r_abs > q_max:
            raise InvalidMdpError(f"q_max={q_max} does not bound |r| (max {r_abs})")
        for name, value in (("transition", P), ("reward", r), ("init_dist", zeta)):
            value.setflags(write=False)
            object.__setattr__(self, name, value)
        object.__setattr__(self, "q_max", float(q_max))
        object.__setattr__(self, "discount", float(self.discount))

    @property
    def n_states(self) -> int:
        return self.transition.shape[0]

    @property
    def n_actions(self) -> int:
        return self.transition.shape[1]

    @property
    def n_pairs(self) -> int:
        return self.n_states * self.n_actions


@dataclass(frozen=True, eq=False)
class Embedding:
    """Unit vectors ``x(s, a)``; ``table`` has shape (S, A, dim)."""

    table: np.ndarray

    @property
    def dim(self) -> int:
        return self.table.shape[-1]

    @property
    def flat(self) -> np.ndarray:
        """(S*A, dim) view in pair order."""
        return self.table.reshape(-1, self.dim)

    def __call__(self, s: int, a: int) -> np.ndarray:
        return self.table[s, a]


@dataclass(frozen=True, eq=False)
class TabularPolicy:
    probs: np.ndarray  # (S, A)

    def __post_init__(self):
        p = np.asarray(self.probs, dtype=float)
        if p.ndim != 2:
            raise InvalidMdpError(f"policy table must be 2-d, got shape {p.shape}")
        if (p < 0).any() or np.abs(p.sum(axis=1) - 1.0).max() > PROB_ATOL:
            raise InvalidMdpError("policy rows must be probability vectors")
        p.setflags(write=False)
        object.__setattr__(self, "probs", p)

    @classmethod
    def uniform(cls, n_states: int, n_actions: int) -> "TabularPolicy":
        return cls(np.full((n_states, n_actions), 1.0 / n_actions))

    @classmethod
    def deterministic(cls, actions, n_actions: int) -> "TabularPolicy":
        actions = np.asarray(actions, dtype=int)
        probs = np.zeros((actions.size, n_actions))
        probs[np.arange(actions.size), actions] = 1.0
        return cls(probs)


@dataclass(frozen=True, eq=False)
class ValueTables:
    v: np.ndarray
    q: np.ndarray
    adv: np.ndarray


@dataclass(frozen=True, eq=False)
class MeasureSet:
    """Visitation (``nu``, ``sigma``) and stationary (``rho``, ``varsigma``) measures.

    Either half may be ``None`` when only one was computed.
    """

    nu: np.ndarray | None = None
    sigma: np.ndarray | None = None
    rho: np.ndarray | None = None
    varsigma: np.ndarray | None = None

    def merge(self, other: "MeasureSet") -> "MeasureSet":
        pick = lambda a, b: a if a is not None else b  # noqa: E731
        return MeasureSet(
            nu=pick(self.nu, other.nu),
            sigma=pick(self.sigma, other.sigma),
            rho=pick(self.rho, other.rho),
            varsigma=pick(self.varsigma, other.varsigma),
        )


def as_probs(policy) -> np.ndarray:
    """Probability table from a TabularPolicy, an EnergyPolicy or an array."""
    if isinstance(policy, TabularPolicy):
        return policy.probs
    if hasattr(policy, "table"):
        return policy.table().probs
    return TabularPolicy(policy).probs


def build_embedding(mdp: TabularMdp, dim: int, seed: int) -> Embedding:
    """Gaussian vectors normalized onto the unit sphere, one per (s, a)."""
    if dim < 2:
        raise InvalidDimensionError(f"embedding dim must be >= 2, got {dim}")
    rng = make_rng(seed, "embedding")
    x = rng.standard_normal((mdp.n_states, mdp.n_actions, dim))
    x /= np.linalg.norm(x, axis=-1, keepdims=True)
    x.setflags(write=False)
    return Embedding(x)


def state_transition(mdp: TabularMdp, probs: np.ndarray) -> np.ndarray:
    """P_pi[s, s'] = sum_a pi(a|s) P(s'|s,a)."""
    return np.einsum("sa,sat->st", probs, mdp.transition)


def exact_values(mdp: TabularMdp, policy) -> ValueTables:
    pi = as_probs(policy)
    g = mdp.discount
    P_pi = state_transition(mdp, pi)
    r_pi = np.einsum("sa,sa->s", pi, mdp.reward)
    try:
        v = np.linalg.solve(np.eye(mdp.n_states) - g * P_pi, (1.0 - g) * r_pi)
    except np.linalg.LinAlgError as exc:
        raise SolverError(f"policy evaluation failed: {exc}") from exc
    q = (1.0 - g) * mdp.reward + g * mdp.transition @ v
    return ValueTables(v=v, q=q, adv=q - v[:, None])


def bellman_residual(mdp: TabularMdp, policy, q: np.ndarray) -> float:
    pi = as_probs(policy)
    target = (1.0 - mdp.discount) * mdp.reward + mdp.discount * mdp.transition @ (pi * q).sum(1)
    return float(np.abs(q - target).max())


def visitation_measures(mdp: TabularMdp, policy) -> MeasureSet:
    pi = as_probs(policy)
    g = mdp.discount
    P_pi = state_transition(mdp, pi)
    nu = (1.0 - g) * np.linalg.solve(np.eye(mdp.n_states) - g * P_pi.T, mdp.init_dist)
    nu = np.clip(nu, 0.0, None)
    nu /= nu.sum()
    return MeasureSet(nu=nu, sigma=pi * nu[:, None])


def stationary_measures(
    mdp: TabularMdp, policy, max_iters: int = 100_000, tol: float = 1e-10
) -> MeasureSet:
    """Stationary distribution of the chain induced by ``policy``.

    Iterates the lazy chain ``(I + P_pi) / 2``, which shares its fixed points
    with ``P_pi`` and also settles for periodic irreducible chains. The
    residual is always measured against ``P_pi`` itself.
    """
    pi = as_probs(policy)
    P_pi = state_transition(mdp, pi)
    lazy = 0.5 * (np.eye(mdp.n_states) + P_pi)
    rho = np.full(mdp.n_states, 1.0 / mdp.n_states)
    residual = np.inf
    for _ in range(max_iters):
        nxt = rho @ lazy
        nxt /= nxt.sum()
        rho = nxt
        residual = float(np.abs(rho @ P_pi - rho).sum())
        if residual <= tol:
            return MeasureSet(rho=rho, varsigma=pi * rho[:, None])
    raise NonMixingError(
        f"stationary power iteration did not converge in {max_iters} steps "
        f"(residual {residual:.3e})",
        residual,
    )


def all_measures(mdp: TabularMdp, policy) -> MeasureSet:
    return visitation_measures(mdp, policy).merge(stationary_measures(mdp, policy))


def expected_total_reward(mdp: TabularMdp, policy) -> float:
    """J(pi) = E_zeta[V^pi]."""
    return float(mdp.init_dist @ exact_values(mdp, policy).v)


def expected_reward_under_visitation(mdp: TabularMdp, policy) -> float:
    """J(pi) computed the other way, as E_{sigma_pi}[r]."""
    return float((visitation_measures(mdp, policy).sigma * mdp.reward).sum())


def optimal_values(mdp: TabularMdp, tol: float = 1e-12, max_iters: int = 1_000_000):
    """Value iteration on Q* = (1-g) r + g P max_a Q*. Returns (Q*, iterations)."""
    g = mdp.discount
    q = np.zeros((mdp.n_states, mdp.n_actions))
    base = (1.0 - g) * mdp.reward
    for k in range(1, max_iters + 1):
        nxt = base + g * mdp.transition @ q.max(axis=1)
        diff = float(np.abs(nxt - q).max())
        q = nxt
        if diff <= tol:
            return q, k
    raise ConvergenceError(f"value iteration exceeded {max_iters} iterations")


def optimal_policy(mdp: TabularMdp, tol: float = 1e-12, max_iters: int = 1_000_000) -> TabularPolicy:
    """Greedy deterministic policy for Q*; ties go to the lowest action index."""
    q, _ = optimal_values(mdp, tol=tol, max_iters=max_iters)
    return TabularPolicy.deterministic(np.argmax(q, axis=1), mdp.n_actions)


# --- MDP definition files -------------------------------------------------
#
# [mdp]
# n_states = 2
# n_actions = 2
# gamma = 0.9
# q_max = 1.0            (optional)
# [reward]
# r(0,0) r(0,1) r(1,0) r(1,1)        <- row-major over (s, a)
# [transition]
# P(0,0,0) P(0,0,1) P(0,1,0) ...      <- row-major over (s, a, s')
# [init_dist]
# zeta(0) zeta(1)
#
# Numbers may be split over any number of lines and separated by whitespace
# or commas. '#' starts a comment.

_LIST_SECTIONS = ("reward", "transition", "init_dist")


def parse_mdp_text(text: str) -> TabularMdp:
    sections: dict[str, list[str]] = {}
    current = None
    for raw in text.splitlines():
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("[") and line.endswith("]"):
            current = line[1:-1].strip().lower()
            if current in sections:
                raise InvalidMdpError(f"duplicate section [{current}]")
            sections[current] = []
            continue
        if current is None:
            raise InvalidMdpError(f"content outside of a section: {raw!r}")
        sections[current].append(line)
    missing = [s for s in ("mdp", *_LIST_SECTIONS) if s not in sections]
    if missing:
        raise InvalidMdpError(f"missing sections: {', '.join(missing)}")
    header = {}
    for line in sections["mdp"]:
        key, sep, value = line.partition("=")
        if not sep:
            raise InvalidMdpError(f"expected key = value in [mdp], got {line!r}")
        header[key.strip().lower()] = value.strip()
    try:
        S = int(header["n_states"])
        A = int(header["n_actions"])
        gamma = float(header["gamma"])
    except KeyError as exc:
        raise InvalidMdpError(f"[mdp] is missing {exc.args[0]}") from None
    q_max = float(header["q_max"]) if "q_max" in header else None

    def numbers(name, count):
        tokens = " ".join(sections[name]).replace(",", " ").split()
        if len(tokens) != count:
            raise InvalidMdpError(f"[{name}] needs {count} numbers, found {len(tokens)}")
        return np.array([float(t) for t in tokens])

    return TabularMdp(
        transition=numbers("transition", S * A * S).reshape(S, A, S),
        reward=numbers("reward", S * A).reshape(S, A),
        discount=gamma,
        init_dist=numbers("init_dist", S),
        q_max=q_max,
    )


def format_mdp_text(mdp: TabularMdp) -> str:
    fmt = lambda xs: " ".join(repr(float(x)) for x in xs)  # noqa: E731
    S, A = mdp.n_states, mdp.n_actions
    lines = [
        "[mdp]",
        f"n_states = {S}",
        f"n_actions = {A}",
        f"gamma = {mdp.discount!r}",
        f"q_max = {mdp.q_max!r}",
        "[reward]",
        *(fmt(mdp.reward[s]) for s in range(S)),
        "[transition]",
        *(fmt(mdp.transition[s, a]) for s in range(S) for a in range(A)),
        "[init_dist]",
        fmt(mdp.init_dist),
    ]
    return "\n".join(lines) + "\n"


def load_mdp(path) -> TabularMdp:
    return parse_mdp_text(Path(path).read_text())


def save_mdp(mdp: TabularMdp, path) -> None:
    Path(path).write_text(format_mdp_text(mdp))
