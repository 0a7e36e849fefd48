"""Named tabular environments and a small spec-string parser.

Spec strings look like ``name:key=value,key=value``:

    chain:S=4[,gamma=0.9,reward=10]
    garnet:S=10,A=4,branching=3,gamma=0.9
    gridworld:4x4[,slip=0.1,gamma=0.9]
    random:S=5,A=3,gamma=0.9
    file:path/to/env.mdp
"""

from __future__ import annotations

import numpy as np

from neuralpg.errors import UnknownEnvError
from neuralpg.mdp import Embedding, TabularMdp, build_embedding, load_mdp
from neuralpg.rng import make_rng


def parse_spec(spec: str):
    name, _, rest = spec.strip().partition(":")
    params = {}
    if name == "file":
        return name, {"path": rest}
    for item in filter(None, (p.strip() for p in rest.split(","))):
        key, eq, value = item.partition("=")
        if not eq:
            params["size"] = key  # bare token, e.g. "4x4"
        else:
            params[key.strip()] = value.strip()
    return name, params


def chain(S: int = 4, gamma: float = 0.9, reward: float | None = None) -> TabularMdp:
    """Deterministic chain. Action 0 steps left, action 1 steps right (walls
    at both ends); ``reward`` for stepping right in the last state, which
    loops there. Starts in state 0.

    The default reward 1 / (1 - gamma) makes the scaled values of this chain
    equal the usual unscaled values of the same chain with reward 1.
    """
    if reward is None:
        reward = 1.0 / (1.0 - gamma)
    P = np.zeros((S, 2, S))
    for s in range(S):
        P[s, 0, max(s - 1, 0)] = 1.0
        P[s, 1, min(s + 1, S - 1)] = 1.0
    r = np.zeros((S, 2))
    r[S - 1, 1] = reward
    zeta = np.zeros(S)
    zeta[0] = 1.0
    return TabularMdp(P, r, gamma, zeta)


def garnet(S: int, A: int, branching: int, gamma: float, seed: int) -> TabularMdp:
    """Each (s, a) reaches ``branching`` distinct states with random split
    probabilities; rewards uniform on [0, 1]; uniform start."""
    if not 1 <= branching <= S:
        raise ValueError(f"branching must be in [1, {S}], got {branching}")
    rng = make_rng(seed, "garnet")
    P = np.zeros((S, A, S))
    for s in range(S):
        for a in range(A):
            nxt = rng.choice(S, size=branching, replace=False)
            P[s, a, nxt] = rng.dirichlet(np.ones(branching))
    r = rng.random((S, A))
    return TabularMdp(P, r, gamma, np.full(S, 1.0 / S))


def random_mdp(S: int, A: int, gamma: float, seed: int) -> TabularMdp:
    """Dense Dirichlet(1) transitions, rewards uniform on [-1, 1], uniform start."""
    rng = make_rng(seed, "random_mdp")
    P = rng.dirichlet(np.ones(S), size=(S, A))
    r = rng.uniform(-1.0, 1.0, size=(S, A))
    return TabularMdp(P, r, gamma, np.full(S, 1.0 / S))


_MOVES = ((-1, 0), (0, 1), (1, 0), (0, -1))  # up, right, down, left


def gridworld(rows: int = 4, cols: int = 4, slip: float = 0.1, gamma: float = 0.9) -> TabularMdp:
    """Grid with walls. The intended move happens with probability 1 - slip;
    otherwise a uniformly random move. Any action in the bottom-right goal
    pays 1 and returns to the top-left start."""
    S = rows * cols
    goal, start = S - 1, 0
    P = np.zeros((S, 4, S))
    r = np.zeros((S, 4))

    def moved(s, k):
        i, j = divmod(s, cols)
        di, dj = _MOVES[k]
        i2, j2 = min(max(i + di, 0), rows - 1), min(max(j + dj, 0), cols - 1)
        return i2 * cols + j2

    for s in range(S):
        for a in range(4):
            if s == goal:
                P[s, a, start] = 1.0
                r[s, a] = 1.0
                continue
            P[s, a, moved(s, a)] += 1.0 - slip
            for k in range(4):
                P[s, a, moved(s, k)] += slip / 4
    zeta = np.zeros(S)
    zeta[start] = 1.0
    return TabularMdp(P, r, gamma, zeta)


def make_mdp(spec: str, seed: int = 0) -> TabularMdp:
    name, p = parse_spec(spec)
    try:
        if name == "chain":
            return chain(int(p.get("S", 4)), float(p.get("gamma", 0.9)), float(p["reward"]) if "reward" in p else None)
        if name == "garnet":
            return garnet(int(p["S"]), int(p["A"]), int(p["branching"]), float(p.get("gamma", 0.9)), seed)
        if name == "gridworld":
            rows, _, cols = p.get("size", "4x4").partition("x")
            return gridworld(int(rows), int(cols or rows), float(p.get("slip", 0.1)), float(p.get("gamma", 0.9)))
        if name == "random":
            return random_mdp(int(p["S"]), int(p["A"]), float(p.get("gamma", 0.9)), seed)
        if name == "file":
            return load_mdp(p["path"])
    except KeyError as exc:
        raise UnknownEnvError(f"env spec {spec!r} is missing parameter {exc}") from None
    raise UnknownEnvError(f"unknown env {name!r} in spec {spec!r}")


def generate_env(spec: str, seed: int = 0, dim: int = 8) -> tuple[TabularMdp, Embedding]:
    """Build the MDP named by ``spec`` and a seeded unit-sphere embedding of its pairs."""
    mdp = make_mdp(spec, seed)
    return mdp, build_embedding(mdp, dim, seed)
