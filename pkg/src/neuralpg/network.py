"""Width-m two-layer ReLU network, its feature map and the parameter ball.

Parameters are stored as ``(m, d)`` arrays whose rows are the blocks
``[theta]_r``; the flat ``md`` vector is ``theta.ravel()``. The sign layer
``b`` is drawn once at initialization and never trained.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from neuralpg.errors import InvalidDimensionError
from neuralpg.rng import make_rng


@dataclass(frozen=True)
class NetShape:
    width: int
    input_dim: int
    radius: float

    def __post_init__(self):
        if self.width < 1:
            raise InvalidDimensionError(f"width must be >= 1, got {self.width}")
        if self.input_dim < 2:
            raise InvalidDimensionError(f"input_dim must be >= 2, got {self.input_dim}")
        if not self.radius > 1:
            raise ValueError(f"radius must exceed 1, got {self.radius}")


@dataclass(frozen=True, eq=False)
class NetInit:
    w_init: np.ndarray  # (m, d)
    signs: np.ndarray  # (m,), entries +-1
    seed: int | None = None

    def __post_init__(self):
        w = np.array(self.w_init, dtype=float)
        b = np.array(self.signs, dtype=float)
        if w.ndim != 2 or b.shape != (w.shape[0],):
            raise InvalidDimensionError("w_init must be (m, d) and signs (m,)")
        if not np.isin(b, (-1.0, 1.0)).all():
            raise ValueError("signs must be exactly +-1")
        w.setflags(write=False)
        b.setflags(write=False)
        object.__setattr__(self, "w_init", w)
        object.__setattr__(self, "signs", b)

    @property
    def width(self) -> int:
        return self.w_init.shape[0]

    @property
    def input_dim(self) -> int:
        return self.w_init.shape[1]


def init_net(shape: NetShape, seed: int) -> NetInit:
    """[W_init]_r ~ N(0, I_d / d), b_r ~ Unif{-1, +1}."""
    rng = make_rng(seed, "net_init")
    m, d = shape.width, shape.input_dim
    w = rng.standard_normal((m, d)) / np.sqrt(d)
    b = rng.choice(np.array([-1.0, 1.0]), size=m)
    return NetInit(w, b, seed=seed)


def _check(init: NetInit, theta: np.ndarray, x: np.ndarray):
    if theta.shape != init.w_init.shape:
        raise InvalidDimensionError(f"theta has shape {theta.shape}, expected {init.w_init.shape}")
    if x.shape[-1] != init.input_dim:
        raise InvalidDimensionError(f"input has dim {x.shape[-1]}, expected {init.input_dim}")


def forward(init: NetInit, theta: np.ndarray, x: np.ndarray) -> float:
    """f(x; theta) = m^{-1/2} sum_r b_r ReLU(x^T [theta]_r)."""
    x = np.asarray(x, dtype=float)
    _check(init, theta, x)
    pre = theta @ x
    return float(init.signs @ np.maximum(pre, 0.0) / np.sqrt(init.width))


def forward_all(init: NetInit, theta: np.ndarray, X: np.ndarray) -> np.ndarray:
    """Network output for every row of ``X`` (shape (..., d))."""
    _check(init, theta, X)
    pre = X @ theta.T
    return np.maximum(pre, 0.0) @ init.signs / np.sqrt(init.width)


def feature_map(theta: np.ndarray, x: np.ndarray, init: NetInit) -> np.ndarray:
    """[phi_theta(x)]_r = (b_r / sqrt(m)) 1{x^T [theta]_r > 0} x, as an (m, d) array."""
    x = np.asarray(x, dtype=float)
    _check(init, theta, x)
    active = (theta @ x > 0).astype(float)
    return np.outer(init.signs * active / np.sqrt(init.width), x)


def linearized_forward(init: NetInit, theta: np.ndarray, x: np.ndarray) -> float:
    """Network linearized at W_init: indicators frozen at the initial parameters."""
    x = np.asarray(x, dtype=float)
    _check(init, theta, x)
    active = init.w_init @ x > 0
    return float((init.signs * active) @ (theta @ x) / np.sqrt(init.width))


def project_ball(theta: np.ndarray, init: NetInit, R: float) -> np.ndarray:
    """Euclidean projection onto {alpha : ||alpha - W_init||_2 <= R}."""
    diff = theta - init.w_init
    dist = np.linalg.norm(diff)
    if dist <= R:
        return theta
    return init.w_init + diff * (R / dist)


def dist_to_init(theta: np.ndarray, init: NetInit) -> float:
    return float(np.linalg.norm(theta - init.w_init))


class FeatureBasis:
    """Feature vectors phi_theta(x_p) for a finite set of inputs, kept implicit.

    Stores only the activation pattern and the inputs; ``dots`` and
    ``combine`` apply the (n_inputs, md) feature matrix and its transpose
    without materializing it.
    """

    def __init__(self, init: NetInit, params: np.ndarray, X: np.ndarray):
        _check(init, params, X)
        self.init = init
        self.X = np.asarray(X, dtype=float)
        self.active = (self.X @ params.T > 0).astype(float)  # (n, m)
        self._coef = init.signs / np.sqrt(init.width)

    @property
    def n(self) -> int:
        return self.X.shape[0]

    def dots(self, v: np.ndarray) -> np.ndarray:
        """phi(x_p)^T v for every input p."""
        return (self.active * (self.X @ v.T)) @ self._coef

    def combine(self, w: np.ndarray) -> np.ndarray:
        """sum_p w_p phi(x_p), as an (m, d) array."""
        return self._coef[:, None] * (self.active.T @ (w[:, None] * self.X))

    def row(self, p: int) -> np.ndarray:
        return np.outer(self._coef * self.active[p], self.X[p])

    def dense(self) -> np.ndarray:
        """Materialized feature matrix, shape (n, m*d)."""
        out = (self.active * self._coef)[:, :, None] * self.X[:, None, :]
        return out.reshape(self.n, -1)


def linearization_error(init: NetInit, theta, theta_prime, measure, embedding) -> float:
    """|| phi_theta^T theta' - phi_0^T theta' ||_sigma, summed exactly over pairs."""
    sigma = _sigma_of(measure)
    X = embedding.flat
    diff = FeatureBasis(init, theta, X).dots(theta_prime) - FeatureBasis(
        init, init.w_init, X
    ).dots(theta_prime)
    return float(np.sqrt(sigma @ diff**2))


def worst_case_partner(init: NetInit, theta, measure, embedding, R: float) -> np.ndarray:
    """A point theta' of the ball that (nearly) maximizes the linearization error at theta.

    The error is affine in theta' = W_init + delta; we take delta of norm R
    along the top right-singular vector of the sigma-weighted difference
    operator, signed to add to the W_init term.
    """
    sigma = _sigma_of(measure)
    X = embedding.flat
    D = FeatureBasis(init, theta, X).dense() - FeatureBasis(init, init.w_init, X).dense()
    D *= np.sqrt(sigma)[:, None]
    base = D @ init.w_init.ravel()
    _, s, vt = np.linalg.svd(D, full_matrices=False)
    if s.size == 0 or s[0] == 0:
        return init.w_init.copy()
    v = vt[0]
    if base @ (D @ v) < 0:
        v = -v
    return init.w_init + R * v.reshape(init.w_init.shape)


def random_ball_point(init: NetInit, R: float, rng, on_sphere: bool = False) -> np.ndarray:
    """Uniform point of the ball around W_init (or of its boundary sphere)."""
    direction = rng.standard_normal(init.w_init.shape)
    direction /= np.linalg.norm(direction)
    radius = R if on_sphere else R * rng.random() ** (1.0 / direction.size)
    return init.w_init + radius * direction


def _sigma_of(measure) -> np.ndarray:
    sigma = getattr(measure, "sigma", measure)
    return np.asarray(sigma, dtype=float).ravel()


# --- parameter checkpoints -------------------------------------------------
#
# Text file: one header line
#   # neuralpg-params m=<m> d=<d> seed=<seed> [tau=<tau>]
# followed by the m*d entries of theta.ravel(), one per line, printed with 17
# significant digits so that a reload is bit-exact.


def save_params(path, theta: np.ndarray, seed=None, tau=None) -> None:
    m, d = theta.shape
    header = f"neuralpg-params m={m} d={d} seed={seed if seed is not None else 'none'}"
    if tau is not None:
        header += f" tau={float(tau)!r}"
    np.savetxt(Path(path), theta.ravel(), fmt="%.17g", header=header)


def load_params(path):
    """Return (theta, meta) where meta holds m, d, seed and optionally tau."""
    path = Path(path)
    with path.open() as fh:
        first = fh.readline()
    if not first.startswith("# neuralpg-params"):
        raise ValueError(f"{path}: not a parameter checkpoint")
    meta = {}
    for item in first.split()[2:]:
        key, _, value = item.partition("=")
        meta[key] = value
    m, d = int(meta["m"]), int(meta["d"])
    values = np.loadtxt(path, ndmin=1)
    if values.size != m * d:
        raise ValueError(f"{path}: expected {m * d} values, found {values.size}")
    out = {"m": m, "d": d, "seed": None if meta["seed"] == "none" else int(meta["seed"])}
    if "tau" in meta:
        out["tau"] = float(meta["tau"])
    return values.reshape(m, d), out
