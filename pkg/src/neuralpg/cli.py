"""Command line entry point: ``neuralpg run | check | sweep``.

The environment variable ``NEURALPG_OUT`` overrides every output directory.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

log = logging.getLogger("neuralpg")

OUT_ENV = "NEURALPG_OUT"


def _out_dir(cli_value, config_value=None, default="runs") -> Path:
    return Path(os.environ.get(OUT_ENV) or cli_value or config_value or default)


def _build_config(args):
    from neuralpg.config import ExperimentConfig, load_config, preset

    if args.config:
        config = load_config(args.config)
    else:
        config = ExperimentConfig()
    if args.algo:
        config = config.replace(algorithm=args.algo) if args.config else preset(args.algo)
    changes = {}
    for key in ("env", "T", "B", "m", "R", "critic_mode"):
        value = getattr(args, key, None)
        if value is not None:
            changes[key] = value
    if args.seed is not None:
        changes["seeds"] = (args.seed,)
    return config.replace(**changes)


def cmd_run(args) -> int:
    from neuralpg.report import emit_report
    from neuralpg.runner import run_experiment

    config = _build_config(args)
    out = _out_dir(args.out, config.output_dir)
    config = config.replace(output_dir=str(out))
    writer = csv.writer(sys.stdout)
    writer.writerow(["seed", "algorithm", "best_gap", "argmin_iteration", "final_gap", "min_grad_mapping_norm"])
    for seed in config.seeds:
        record = run_experiment(config, seed)
        paths = emit_report(record, out)
        if args.dump_batches:
            _dump_batches(config, seed, Path(paths["csv"]).parent)
        s = record.summary
        writer.writerow(
            [seed, config.algorithm, repr(s["best_gap"]), s["argmin_iteration"], repr(s["final_gap"]),
             repr(s["min_grad_mapping_norm"])]
        )
        log.info("seed %d: wrote %s", seed, Path(paths["csv"]).parent)
    return 0


def _dump_batches(config, seed, directory: Path) -> None:
    """Write the first-iteration actor batch (and one critic batch) for inspection."""
    from neuralpg.envs import generate_env
    from neuralpg.rng import derive_seed
    from neuralpg.sampling import sample_stationary_transitions, sample_visitation

    mdp, _ = generate_env(config.env, seed if config.env_seed is None else config.env_seed, config.d)
    uniform = np.full((mdp.n_states, mdp.n_actions), 1.0 / mdp.n_actions)
    sample_visitation(mdp, uniform, config.B, config.burn_in, derive_seed(seed, "actor", 1)).to_csv(
        directory / "batch_actor_i1.csv"
    )
    sample_stationary_transitions(mdp, uniform, config.B, config.burn_in, derive_seed(seed, "critic", 1)).to_csv(
        directory / "batch_critic_i1.csv"
    )


def cmd_check(args) -> int:
    from neuralpg.checks import run_all

    only = set(args.only.split(",")) if args.only else None
    results = run_all(quick=args.quick, only=only)
    for r in results:
        print(r.line(), file=sys.stderr)
    report = {
        "quick": args.quick,
        "passed": all(r.passed for r in results),
        "checks": [r.to_dict() for r in results],
    }
    text = json.dumps(report, indent=2)
    if args.out or os.environ.get(OUT_ENV):
        out = _out_dir(args.out)
        out.mkdir(parents=True, exist_ok=True)
        (out / "check.json").write_text(text + "\n")
    print(text)
    return 0 if report["passed"] else 1


def _parse_param(spec: str):
    key, _, values = spec.partition("=")
    if not values:
        raise argparse.ArgumentTypeError(f"expected name=v1,v2,..., got {spec!r}")
    kind = float if key.strip() in ("R", "eta") else int
    return key.strip(), [kind(v) for v in values.split(",")]


def cmd_sweep(args) -> int:
    from neuralpg.checks import compatibility_study, linearization_study
    from neuralpg.plotting import plot_scaling

    key, values = args.param
    out = _out_dir(args.out)
    out.mkdir(parents=True, exist_ok=True)
    rows = []
    if args.study in ("linearization", "compatibility"):
        if key != "m":
            raise SystemExit(f"the {args.study} study sweeps m, got {key}")
        if args.study == "linearization":
            series = {
                "worst-case partner": linearization_study(values, args.seeds, args.radius, "worst"),
                "random partner": linearization_study(values, args.seeds, args.radius, "random"),
            }
            ylabel = "median RMS linearization error"
        else:
            series = {"compatibility error": compatibility_study(values, args.seeds, args.radius)}
            ylabel = "median compatibility error"
        for j, m in enumerate(values):
            rows.append({"m": m, **{name: vals[j] for name, vals in series.items()}})
        plot_scaling(values, series, out / f"sweep_{args.study}.svg", ylabel)
    else:
        from neuralpg.runner import run_seeds

        base = _build_config(args)
        series = {"median best gap": [], "median min grad mapping": []}
        for v in values:
            recs = run_seeds(base.replace(**{key: v}), workers=args.workers)
            best = float(np.median([r.summary["best_gap"] for r in recs]))
            rho = float(np.median([r.summary["min_grad_mapping_norm"] for r in recs]))
            series["median best gap"].append(best)
            series["median min grad mapping"].append(rho)
            rows.append({key: v, "median_best_gap": best, "median_min_grad_mapping_norm": rho})
        if key == "m":
            plot_scaling(values, series, out / "sweep_run.svg", "median over seeds")
    path = out / f"sweep_{args.study}.csv"
    with path.open("w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=list(rows[0]))
        w.writeheader()
        for row in rows:
            w.writerow({k: repr(v) if isinstance(v, float) else v for k, v in row.items()})
    sys.stdout.write(path.read_text())
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="neuralpg", description=__doc__)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def run_flags(sp):
        sp.add_argument("--config", help="INI file with an [experiment] section")
        sp.add_argument("--seed", type=int)
        sp.add_argument("--algo", choices=["pg", "npg", "pgfree", "pg_projection_free"])
        sp.add_argument("--env")
        sp.add_argument("--T", type=int)
        sp.add_argument("--B", type=int)
        sp.add_argument("--m", type=int)
        sp.add_argument("--R", type=float)
        sp.add_argument("--critic-mode", dest="critic_mode", choices=["exact_oracle", "neural_td"])
        sp.add_argument("--out", help=f"output directory (overridden by ${OUT_ENV})")

    r = sub.add_parser("run", help="run one configuration; per-seed CSV, JSON, INI and SVG files")
    run_flags(r)
    r.add_argument("--dump-batches", action="store_true", help="also write first-iteration sample batches as CSV")
    r.set_defaults(func=cmd_run)

    c = sub.add_parser("check", help="run the acceptance suite and print a JSON report")
    c.add_argument("--quick", action="store_true", help="fewer seeds and smaller grids")
    c.add_argument("--only", help="comma-separated check function names")
    c.add_argument("--out")
    c.set_defaults(func=cmd_check)

    s = sub.add_parser("sweep", help="scaling studies over one parameter")
    s.add_argument("--param", required=True, type=_parse_param, help="e.g. m=64,256,1024")
    s.add_argument("--study", choices=["linearization", "compatibility", "run"], default="linearization")
    s.add_argument("--seeds", type=int, default=20, help="seeds per value for the scaling studies")
    s.add_argument("--radius", type=float, default=2.0, help="ball radius for the scaling studies")
    s.add_argument("--workers", type=int, default=1)
    run_flags(s)
    s.set_defaults(func=cmd_sweep)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(name)s: %(message)s")
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
