"""The acceptance suite as plain functions.

Each check returns a ``CheckResult`` with the measured values next to the
thresholds. ``run_all`` powers the ``check`` CLI command and
``tests/test_acceptance.py`` calls the checks one by one. ``quick=True``
shrinks seed counts and grids for a fast smoke pass; the thresholds stay
the same.
"""

from __future__ import annotations

import math
import time
from dataclasses import asdict, dataclass, field
from functools import lru_cache

import numpy as np

from neuralpg.actor import FisherOperator
from neuralpg.config import preset
from neuralpg.critic import train_critic
from neuralpg.envs import generate_env, random_mdp
from neuralpg.mdp import (
    TabularPolicy,
    build_embedding,
    expected_total_reward,
    optimal_policy,
    visitation_measures,
)
from neuralpg.network import (
    NetShape,
    init_net,
    linearization_error,
    random_ball_point,
    worst_case_partner,
)
from neuralpg.oracles import (
    compatibility_error,
    exact_fisher,
    exact_policy_gradient,
    kl_per_state,
    optimality_certificate,
    performance_difference_check,
)
from neuralpg.policy import EnergyPolicy
from neuralpg.rng import make_rng
from neuralpg.runner import run_experiment, run_init
from neuralpg.sampling import sample_visitation, total_variation

WIDTHS = (64, 256, 1024, 4096)
TD_ENV = "random:S=5,A=3,gamma=0.7"


@dataclass
class CheckResult:
    number: int
    name: str
    passed: bool
    measured: dict = field(default_factory=dict)
    runtime_s: float = 0.0

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        shown = ", ".join(f"{k}={_short(v)}" for k, v in self.measured.items() if not isinstance(v, (list, dict)))
        return f"[{status}] {self.number:2d} {self.name}: {shown} ({self.runtime_s:.1f}s)"

    def to_dict(self) -> dict:
        return asdict(self)


def _short(v):
    if isinstance(v, float):
        return f"{v:.4g}"
    return v


def _timed(number, name):
    def wrap(fn):
        def run(*args, **kwargs):
            t0 = time.perf_counter()
            passed, measured = fn(*args, **kwargs)
            return CheckResult(number, name, bool(passed), measured, time.perf_counter() - t0)

        run.__name__ = fn.__name__
        run.__doc__ = fn.__doc__
        return run

    return wrap


def _kink_free_theta(init, X, rng, eps, scale=0.5):
    """A point near W_init with every pre-activation at least 10 eps from zero."""
    for _ in range(1000):
        theta = init.w_init + scale * rng.standard_normal(init.w_init.shape) / math.sqrt(init.w_init.size)
        if np.abs(X @ theta.T).min() > 10 * eps:
            return theta
    raise RuntimeError("could not find a kink-free parameter")


def fd_gradient_of_j(mdp, init, emb, theta, tau, eps):
    g = np.zeros_like(theta)
    flat = g.ravel()
    for k in range(theta.size):
        th = theta.copy().ravel()
        th[k] += eps
        jp = expected_total_reward(mdp, EnergyPolicy(th.reshape(theta.shape), tau, init, emb).probs)
        th[k] -= 2 * eps
        jm = expected_total_reward(mdp, EnergyPolicy(th.reshape(theta.shape), tau, init, emb).probs)
        flat[k] = (jp - jm) / (2 * eps)
    return g


@_timed(1, "policy-gradient identity vs finite differences")
def check_policy_gradient(quick=False, n_mdps=20, eps=1e-5):
    n_mdps = 4 if quick else n_mdps
    errs = []
    for k in range(n_mdps):
        mdp = random_mdp(5, 3, 0.9, seed=1000 + k)
        emb = build_embedding(mdp, 8, 1000 + k)
        init = init_net(NetShape(32, 8, 2.0), 1000 + k)
        theta = _kink_free_theta(init, emb.flat, make_rng(k, "fd_theta"), eps, scale=1.0)
        pol = EnergyPolicy(theta, 1.0, init, emb)
        g = exact_policy_gradient(mdp, pol)
        fd = fd_gradient_of_j(mdp, init, emb, theta, 1.0, eps)
        errs.append(float(np.linalg.norm(g - fd) / np.linalg.norm(fd)))
    worst = max(errs)
    return worst <= 1e-4, {"max_rel_err": worst, "threshold": 1e-4, "n_mdps": n_mdps}


def _random_policy(rng, S, A):
    return TabularPolicy(rng.dirichlet(np.ones(A), size=S))


@_timed(2, "performance-difference equality")
def check_performance_difference(quick=False):
    worst = 0.0
    n = 0
    for k in range(3 if quick else 10):
        rng = make_rng(k, "pdl")
        S, A = int(rng.integers(2, 8)), int(rng.integers(2, 5))
        mdp = random_mdp(S, A, float(rng.uniform(0.5, 0.99)), seed=2000 + k)
        for _ in range(10):
            lhs, rhs = performance_difference_check(mdp, _random_policy(rng, S, A), _random_policy(rng, S, A))
            worst = max(worst, abs(lhs - rhs))
            n += 1
    return worst <= 1e-9, {"max_abs_diff": worst, "threshold": 1e-9, "n_pairs": n}


@_timed(3, "Fisher PSD and matrix-free apply")
def check_fisher(quick=False, n_probes=1000):
    mdp = random_mdp(5, 3, 0.9, seed=3000)
    emb = build_embedding(mdp, 8, 3000)
    init = init_net(NetShape(16, 8, 2.0), 3000)  # md = 128
    rng = make_rng(0, "fisher")
    theta = random_ball_point(init, 2.0, rng)
    pol = EnergyPolicy(theta, 1.3, init, emb)
    F = exact_fisher(mdp, pol)
    batch = sample_visitation(mdp, pol.probs, 2000, seed=3000)
    implicit = FisherOperator.from_batch(pol, batch, materialize=False)
    dense_op = FisherOperator.from_batch(pol, batch, materialize=True)
    Fhat = implicit.dense()
    V = rng.standard_normal((200 if quick else n_probes, theta.size))
    q_exact = np.einsum("ij,jk,ik->i", V, F, V).min()
    q_sampled = min(float(v @ implicit.apply(v.reshape(theta.shape)).ravel()) for v in V)
    apply_err = 0.0
    for v in V[:100]:
        ref = Fhat @ v
        for op in (implicit, dense_op):
            apply_err = max(apply_err, float(np.abs(op.apply(v.reshape(theta.shape)).ravel() - ref).max()))
    passed = q_exact >= -1e-10 and q_sampled >= -1e-10 and apply_err <= 1e-10
    return passed, {
        "min_quad_exact": float(q_exact),
        "min_quad_sampled": q_sampled,
        "max_apply_err": apply_err,
        "md": theta.size,
    }


def _slope(widths, values) -> float:
    return float(np.polyfit(np.log(widths), np.log(values), 1)[0])


def _strictly_decreasing(values) -> bool:
    return all(b < a for a, b in zip(values, values[1:]))


def linearization_study(widths=WIDTHS, n_seeds=20, R=2.0, partner="worst"):
    """Median RMS linearization error per width on a fixed 5x3 MDP under the uniform policy.

    theta is uniform on the sphere of radius R around W_init. ``partner="worst"``
    pairs it with the ball point that (nearly) maximizes the error;
    ``partner="random"`` uses an independent point on the sphere.
    """
    mdp = random_mdp(5, 3, 0.9, seed=4000)
    emb = build_embedding(mdp, 8, 4000)
    sigma = visitation_measures(mdp, np.full((5, 3), 1 / 3)).sigma
    medians = []
    for m in widths:
        errs = []
        for k in range(n_seeds):
            init = init_net(NetShape(m, 8, R), 10_000 * m + k)
            rng = make_rng(k, "linearization", m)
            theta = random_ball_point(init, R, rng, on_sphere=True)
            if partner == "worst":
                theta_p = worst_case_partner(init, theta, sigma, emb, R)
            else:
                theta_p = random_ball_point(init, R, rng, on_sphere=True)
            errs.append(linearization_error(init, theta, theta_p, sigma, emb))
        medians.append(float(np.median(errs)))
    return medians


@_timed(4, "linearization-error scaling")
def check_linearization(quick=False):
    n_seeds = 8 if quick else 20
    med = linearization_study(n_seeds=n_seeds)
    slope = _slope(WIDTHS, med)
    passed = _strictly_decreasing(med) and -0.5 <= slope <= -0.1
    return passed, {"slope": slope, "medians": med, "n_seeds": n_seeds, "partner": "worst-case"}


def compatibility_study(widths=WIDTHS, n_seeds=20, R=2.0):
    mdp = random_mdp(5, 3, 0.9, seed=5000)
    emb = build_embedding(mdp, 8, 5000)
    medians = []
    for m in widths:
        errs = []
        for k in range(n_seeds):
            init = init_net(NetShape(m, 8, R), 20_000 * m + k)
            rng = make_rng(k, "compat", m)
            theta = random_ball_point(init, R, rng)
            omega = random_ball_point(init, R, rng)
            pol = EnergyPolicy(theta, 1.0, init, emb)
            sigma = visitation_measures(mdp, pol.probs).sigma
            errs.append(compatibility_error(theta, omega, pol, sigma))
        medians.append(float(np.median(errs)))
    return medians


@_timed(5, "compatibility-error trend")
def check_compatibility(quick=False):
    n_seeds = 8 if quick else 20
    med = compatibility_study(n_seeds=n_seeds)
    return _strictly_decreasing(med), {"slope": _slope(WIDTHS, med), "medians": med, "n_seeds": n_seeds}


@lru_cache(maxsize=None)
def _run(algo: str, T: int, seed: int, trace: bool = False, m: int = 512):
    return run_experiment(preset(algo, T=T, m=m, B=2000, env="chain:S=4"), seed, trace=trace)


@_timed(6, "ball and schedule invariants")
def check_invariants(quick=False):
    T = 40 if quick else 200
    pg = _run("pg", T, 0, True)
    npg = _run("npg", T, 0, True)
    R = pg.config["R"]
    eta = 1.0 / math.sqrt(T)
    max_dist = max(pg.column("dist_to_init").max(), npg.column("dist_to_init").max())
    final_dist = max(pg.summary["final_dist_to_init"], npg.summary["final_dist_to_init"])
    taus = npg.column("tau")
    tau_err = float(np.abs(taus - eta * np.arange(T)).max())
    theta2_is_delta1 = bool(np.array_equal(npg.trace[1]["theta"], npg.trace[0]["delta"]))
    descent = bool(np.all(npg.column("npg_residual") <= npg.column("npg_warm_residual") + 1e-12))
    passed = max(max_dist, final_dist) <= R + 1e-12 and tau_err <= 1e-12 and theta2_is_delta1 and descent
    return passed, {
        "max_dist_to_init": float(max(max_dist, final_dist)),
        "R": R,
        "max_tau_schedule_err": tau_err,
        "theta2_equals_delta1": theta2_is_delta1,
        "npg_descent_every_iteration": descent,
    }


@_timed(7, "visitation sampler fidelity")
def check_sampler(quick=False, B=100_000):
    B = 20_000 if quick else B
    tvs, zs = [], []
    for k in range(5):
        mdp = random_mdp(5, 3, 0.9, seed=7000 + k)
        pi = _random_policy(make_rng(k, "sampler_policy"), 5, 3)
        sigma = visitation_measures(mdp, pi).sigma
        batch = sample_visitation(mdp, pi, B, seed=7000 + k)
        tvs.append(total_variation(batch.pair_counts(5, 3) / B, sigma))
        p = 1 - mdp.discount
        se = math.sqrt(p * (1 - p) / batch.steps)
        zs.append(abs(batch.restarts / batch.steps - p) / se)
    passed = max(tvs) <= 0.05 and max(zs) <= 3.0
    return passed, {"max_tv": max(tvs), "max_restart_z": max(zs), "B": B}


@_timed(8, "neural TD progress")
def check_td(quick=False, n_seeds=10):
    n_seeds = 3 if quick else n_seeds
    ratios = []
    for k in range(n_seeds):
        mdp, emb = generate_env(TD_ENV, 8000 + k)
        init = init_net(NetShape(1024, 8, 2.0), 8000 + k)
        pol = EnergyPolicy(np.array(init.w_init), 1.0, init, emb)
        res = train_critic(mdp, pol, init, 10_000, None, 2.0, seed=8000 + k)
        ratios.append(res.final_error / res.initial_error)
    med = float(np.median(ratios))
    return med <= 0.5, {"median_error_ratio": med, "threshold": 0.5, "ratios": ratios}


@_timed(9, "NPG desk-scale convergence")
def check_npg(quick=False, n_seeds=5):
    n_seeds = 2 if quick else n_seeds
    T = 200
    recs = [_run("npg", T, s) for s in range(n_seeds)]
    best = [r.summary["best_gap"] for r in recs]
    rel = [b / (r.summary["J_star"] - r.summary["J_uniform"]) for b, r in zip(best, recs)]
    med_best = float(np.median(best))
    med_rel = float(np.median(rel))
    return med_rel <= 0.1, {
        "median_best_gap": med_best,
        "median_best_gap_fraction": med_rel,
        "threshold_fraction": 0.1,
        "best_gaps": best,
    }


@_timed(10, "vanilla-PG stationarity trend")
def check_pg(quick=False, n_seeds=5):
    n_seeds = 2 if quick else n_seeds
    ratios = []
    for s in range(n_seeds):
        long = _run("pg", 200, s).summary["min_grad_mapping_norm"]
        short = _run("pg", 20, s).summary["min_grad_mapping_norm"]
        ratios.append(long / short)
    med = float(np.median(ratios))
    return med <= 0.5, {"median_ratio": med, "threshold": 0.5, "ratios": ratios}


@_timed(11, "KL bound at the uniform initial policy")
def check_kl(quick=False):
    worst = -np.inf
    specs = ["chain:S=4", "gridworld:4x4", "garnet:S=10,A=4,branching=3,gamma=0.9", "random:S=5,A=3,gamma=0.9"]
    for k, spec in enumerate(specs):
        mdp, emb = generate_env(spec, 11_000 + k)
        init = init_net(NetShape(64, 8, 2.0), 11_000 + k)
        pol = EnergyPolicy(random_ball_point(init, 2.0, make_rng(k, "kl")), 0.0, init, emb)
        kl = kl_per_state(optimal_policy(mdp).probs, pol.probs)
        worst = max(worst, float((kl - math.log(mdp.n_actions)).max()))
    run_kl = _run("npg", 40 if quick else 200, 0).summary
    worst = max(worst, run_kl["kl_init_max"] - run_kl["log_n_actions"])
    return worst <= 1e-12, {"max_kl_minus_log_A": worst}


@_timed(12, "optimality certificate at a converged PG endpoint")
def check_certificate(quick=False):
    rec = _run("pg", 200, 0, True)
    mdp, emb = generate_env(rec.config["env"], rec.summary["env_seed"], rec.config["d"])
    final = rec.trace[-1]
    pol = EnergyPolicy(final["theta"], final["tau"], run_init(rec), emb)
    cert = optimality_certificate(mdp, final["theta"], pol, optimal_policy(mdp), rec.config["R"])
    return cert.holds, {
        "scaled_gap": (1 - mdp.discount) * cert.gap,
        "bound": cert.bound,
        "u_residual": cert.u_residual,
        "stationarity_slack": cert.stationarity_slack,
        "final_grad_mapping_norm": rec.rows[-1]["grad_mapping_norm"],
    }


ALL_CHECKS = (
    check_policy_gradient,
    check_performance_difference,
    check_fisher,
    check_linearization,
    check_compatibility,
    check_invariants,
    check_sampler,
    check_td,
    check_npg,
    check_pg,
    check_kl,
    check_certificate,
)


def run_all(quick: bool = False, only=None) -> list:
    results = []
    for check in ALL_CHECKS:
        if only and check.__name__ not in only:
            continue
        results.append(check(quick=quick))
    return results
