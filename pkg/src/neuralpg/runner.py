"""The outer actor-critic loop with exact diagnostics at every iteration.

Row ``i`` describes the policy pi_i (theta_i, tau_i) *before* its update:
its exact value, optimality gap and gradient mapping, and the quantities of
the step taken from it. A run of T iterations therefore logs T rows.
"""

from __future__ import annotations

import logging
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from neuralpg.actor import (
    FisherOperator,
    estimate_policy_gradient,
    npg_solve,
    npg_update,
    vanilla_pg_update,
)
from neuralpg.config import ExperimentConfig
from neuralpg.critic import default_td_rate, default_td_steps, train_critic
from neuralpg.envs import generate_env
from neuralpg.mdp import (
    exact_values,
    expected_total_reward,
    optimal_policy,
    visitation_measures,
)
from neuralpg.network import NetShape, dist_to_init, forward_all, init_net
from neuralpg.oracles import compatibility_error, exact_policy_gradient, gradient_mapping, kl_per_state
from neuralpg.policy import EnergyPolicy
from neuralpg.rng import derive_seed
from neuralpg.sampling import sample_visitation

log = logging.getLogger(__name__)

COLUMNS = (
    "i",
    "tau",
    "J",
    "gap",
    "grad_mapping_norm",
    "npg_residual",
    "critic_error",
    "compat_error",
    "dist_to_init",
    "npg_warm_residual",
    "drift_bound",
)


@dataclass
class RunRecord:
    config: dict
    seed: int
    rows: list = field(default_factory=list)
    summary: dict = field(default_factory=dict)
    trace: list | None = None  # per-iteration parameter snapshots when requested

    def column(self, name: str) -> np.ndarray:
        return np.array([row[name] for row in self.rows], dtype=float)

    def summarize(self, **extra) -> dict:
        gaps = self.column("gap")
        rho = self.column("grad_mapping_norm")
        out = dict(self.summary)
        out.update(extra)
        if len(gaps):
            k = int(np.argmin(gaps))
            out.update(
                best_gap=float(gaps[k]),
                argmin_iteration=int(self.rows[k]["i"]),
                final_gap=float(gaps[-1]),
                min_grad_mapping_norm=float(np.nanmin(rho)),
                max_dist_to_init=float(np.max(self.column("dist_to_init"))),
            )
        out["n_rows"] = len(self.rows)
        self.summary = out
        return out


def run_init(record: "RunRecord"):
    """Rebuild the NetInit a record was produced with."""
    c = record.config
    return init_net(NetShape(c["m"], c["d"], c["R"]), derive_seed(record.seed, "init"))


def _critic_step(config, mdp, emb, init, policy, i, seed, R, td_steps, td_rate):
    """Return (q_table, omega, critic_error) for pi_i."""
    q_true = exact_values(mdp, policy.probs).q
    if config.critic_mode == "exact_oracle":
        return q_true, init.w_init, 0.0
    res = train_critic(
        mdp, policy, init, td_steps, td_rate, R, derive_seed(seed, "critic", i), embedding=emb, burn_in=config.burn_in
    )
    q = forward_all(init, res.omega_bar, emb.table)
    return q, res.omega_bar, res.final_error


def run_experiment(config: ExperimentConfig, seed: int | None = None, *, trace: bool = False) -> RunRecord:
    """Run one seed of the configured algorithm; see the module docstring for the row layout."""
    from neuralpg.report import emit_report

    seed = config.seeds[0] if seed is None else int(seed)
    env_seed = seed if config.env_seed is None else config.env_seed
    mdp, emb = generate_env(config.env, env_seed, config.d)
    init = init_net(NetShape(config.m, config.d, config.R), derive_seed(seed, "init"))
    eta = config.actor_rate
    R = config.R
    td_steps = config.T_td or default_td_steps(config.m)
    td_rate = config.eta_td or default_td_rate(mdp.discount, td_steps)
    q_clip = config.q_clip if config.q_clip is not None else mdp.q_max

    pi_star = optimal_policy(mdp)
    j_star = expected_total_reward(mdp, pi_star)
    j_uniform = expected_total_reward(mdp, np.full((mdp.n_states, mdp.n_actions), 1.0 / mdp.n_actions))
    record = RunRecord(config=config.to_dict(), seed=seed, trace=[] if trace else None)
    record.summary = dict(
        seed=seed,
        env_seed=env_seed,
        J_star=j_star,
        J_uniform=j_uniform,
        eta=eta,
        T_td=td_steps if config.critic_mode == "neural_td" else 0,
        eta_td=td_rate if config.critic_mode == "neural_td" else 0.0,
        q_clip=q_clip,
        status="running",
    )

    algo = config.algorithm
    theta = np.array(init.w_init)
    tau = 0.0 if algo == "npg" else 1.0
    drift = 0.0
    t0 = time.perf_counter()
    try:
        for i in range(1, config.T + 1):
            policy = EnergyPolicy(theta, tau, init, emb)
            probs = policy.probs
            if i == 1:
                kl = kl_per_state(pi_star.probs, probs)
                record.summary.update(kl_init_max=float(kl.max()), log_n_actions=math.log(mdp.n_actions))
            j = expected_total_reward(mdp, probs)
            sigma = visitation_measures(mdp, probs).sigma
            grad = exact_policy_gradient(mdp, policy)
            radius = math.inf if algo == "pg_projection_free" else R
            rho = gradient_mapping(theta, grad, eta, init, radius)

            q, omega, c_err = _critic_step(config, mdp, emb, init, policy, i, seed, R, td_steps, td_rate)
            batch = sample_visitation(mdp, probs, config.B, config.burn_in, derive_seed(seed, "actor", i))
            row = dict(
                i=i,
                tau=tau,
                J=j,
                gap=j_star - j,
                grad_mapping_norm=float(np.linalg.norm(rho)),
                npg_residual=math.nan,
                critic_error=c_err,
                compat_error=compatibility_error(theta, omega, policy, sigma),
                dist_to_init=dist_to_init(theta, init),
                npg_warm_residual=math.nan,
                drift_bound=math.nan,
            )
            snapshot = {"i": i, "theta": theta, "tau": tau, "omega": omega} if trace else None

            if algo == "pg":
                ghat = estimate_policy_gradient(policy, q, batch).ghat
                theta = vanilla_pg_update(theta, ghat, eta, init, R)
            elif algo == "npg":
                ghat = estimate_policy_gradient(policy, q, batch).ghat
                op = FisherOperator.from_batch(policy, batch, memory_budget=config.memory_budget)
                direction = npg_solve(op, tau * ghat, init, R, omega, config.npg_max_iters, config.npg_tol)
                row["npg_residual"] = direction.residual
                row["npg_warm_residual"] = direction.warm_residual
                if trace:
                    snapshot["delta"] = direction.delta
                tau, theta = npg_update(tau, theta, direction, eta)
            else:
                clipped = np.clip(q, -q_clip, q_clip)
                ghat = estimate_policy_gradient(policy, clipped, batch).ghat
                theta = theta + eta * ghat
                row["drift_bound"] = drift  # bound on dist_to_init of theta_i
                drift += 2.0 * eta * tau * q_clip
            if trace:
                record.trace.append(snapshot)
            record.rows.append(row)
    except Exception as exc:
        record.summary["status"] = f"failed at iteration {len(record.rows) + 1}: {exc}"
        record.summarize(runtime_s=time.perf_counter() - t0)
        if config.output_dir:
            emit_report(record, config.output_dir)
        raise
    record.summary.update(status="complete", final_tau=tau, final_dist_to_init=dist_to_init(theta, init))
    if trace:
        record.trace.append({"i": config.T + 1, "theta": theta, "tau": tau})
    record.summarize(runtime_s=time.perf_counter() - t0)
    return record


def _run_one(args):
    config, seed = args
    return run_experiment(config, seed)


def run_seeds(config: ExperimentConfig, workers: int = 1) -> list:
    """Run every seed in ``config.seeds``; seeds are independent, so they may fan out to processes."""
    jobs = [(config, s) for s in config.seeds]
    if workers <= 1 or len(jobs) == 1:
        return [_run_one(job) for job in jobs]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(_run_one, jobs))

