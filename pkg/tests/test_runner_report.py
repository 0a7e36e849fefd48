import json
import math

import numpy as np
import pytest

from neuralpg.config import preset
from neuralpg.network import dist_to_init
from neuralpg.report import ReportError, emit_report, read_csv, write_csv
from neuralpg.runner import COLUMNS, RunRecord, run_experiment, run_init, run_seeds


def small(algo, **kw):
    base = dict(T=5, B=200, m=16, d=4)
    base.update(kw)
    return preset(algo, **base)


def test_single_iteration_logs_one_row():
    rec = run_experiment(small("pg", T=1), seed=0)
    assert len(rec.rows) == 1 and rec.rows[0]["i"] == 1
    assert rec.summary["status"] == "complete" and rec.summary["n_rows"] == 1


def test_rows_and_summary():
    rec = run_experiment(small("pg"), seed=1)
    assert [r["i"] for r in rec.rows] == [1, 2, 3, 4, 5]
    assert set(rec.rows[0]) == set(COLUMNS)
    gaps = rec.column("gap")
    assert rec.summary["best_gap"] == gaps.min() and rec.summary["final_gap"] == gaps[-1]
    assert rec.summary["J_star"] - rec.rows[0]["J"] == pytest.approx(rec.rows[0]["gap"])
    assert (gaps >= -1e-12).all()


def test_npg_schedule_and_uniform_start():
    rec = run_experiment(small("npg", T=6), seed=0, trace=True)
    eta = 1 / math.sqrt(6)
    for row in rec.rows:
        assert abs(row["tau"] - (row["i"] - 1) * eta) <= 1e-12
    assert rec.rows[0]["gap"] == pytest.approx(rec.summary["J_star"] - rec.summary["J_uniform"])
    assert rec.summary["kl_init_max"] <= rec.summary["log_n_actions"] + 1e-12
    # theta_2 is the first direction exactly
    assert np.array_equal(rec.trace[1]["theta"], rec.trace[0]["delta"])
    init = run_init(rec)
    assert max(dist_to_init(snap["theta"], init) for snap in rec.trace) <= 1.1 + 1e-12


def test_pg_stays_in_ball():
    rec = run_experiment(small("pg", T=20, eta=5.0), seed=0)
    assert rec.summary["max_dist_to_init"] <= 1.1 + 1e-12


def test_projection_free_respects_drift_bound():
    rec = run_experiment(small("pgfree", T=10, eta=1.0), seed=2)
    for row in rec.rows:
        assert row["dist_to_init"] <= row["drift_bound"] + 1e-12
    assert math.isnan(rec.rows[0]["npg_residual"])


def test_neural_td_mode_runs():
    rec = run_experiment(small("npg", T=2, critic_mode="neural_td", T_td=200, env="random:S=3,A=2,gamma=0.7"), seed=0)
    assert all(r["critic_error"] > 0 for r in rec.rows)
    assert rec.summary["T_td"] == 200


def test_seed_determinism_bitwise(tmp_path):
    a = run_experiment(small("npg"), seed=4)
    b = run_experiment(small("npg"), seed=4)
    write_csv(a, tmp_path / "a.csv")
    write_csv(b, tmp_path / "b.csv")
    assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()
    c = run_experiment(small("npg"), seed=5)
    assert c.rows != a.rows


def test_run_seeds_parallel_matches_serial():
    config = small("pg", T=3, seeds=(0, 1))
    serial = run_seeds(config)
    parallel = run_seeds(config, workers=2)
    assert repr([r.rows for r in serial]) == repr([r.rows for r in parallel])


def test_failure_flushes_partial_record(tmp_path, monkeypatch):
    import neuralpg.runner as runner

    calls = {"n": 0}
    real = runner.npg_solve

    def flaky(*args, **kwargs):
        calls["n"] += 1
        if calls["n"] == 3:
            raise RuntimeError("solver blew up")
        return real(*args, **kwargs)

    monkeypatch.setattr(runner, "npg_solve", flaky)
    with pytest.raises(RuntimeError):
        run_experiment(small("npg", output_dir=str(tmp_path)), seed=0)
    rows = read_csv(tmp_path / "npg_seed0" / "metrics.csv")
    assert len(rows) == 2
    summary = json.loads((tmp_path / "npg_seed0" / "summary.json").read_text())["summary"]
    assert summary["status"].startswith("failed at iteration 3")


# --- report ------------------------------------------------------------------------


def test_csv_round_trip(tmp_path):
    rec = run_experiment(small("npg", T=3), seed=0)
    path = write_csv(rec, tmp_path / "m.csv")
    back = read_csv(path)
    assert len(back) == 3
    for got, want in zip(back, rec.rows):
        for k in COLUMNS:
            assert got[k] == want[k] or (math.isnan(got[k]) and math.isnan(want[k]))


def test_empty_record_writes_header_only(tmp_path):
    path = write_csv(RunRecord(config={}, seed=0), tmp_path / "e.csv")
    assert path.read_text().strip() == ",".join(COLUMNS)


def test_emit_report_files(tmp_path):
    rec = run_experiment(small("pg", T=3), seed=7)
    paths = emit_report(rec, tmp_path)
    base = tmp_path / "pg_seed7"
    assert {p.name for p in base.iterdir()} == {"metrics.csv", "summary.json", "curves.svg", "config.ini"}
    assert paths["svg"].read_text().lstrip().startswith("<?xml")
    payload = json.loads(paths["json"].read_text())
    assert payload["config"]["T"] == 3 and payload["summary"]["best_gap"] == rec.summary["best_gap"]
    assert "[experiment]" in paths["ini"].read_text()


def test_report_io_error(tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("x")
    rec = run_experiment(small("pg", T=1), seed=0)
    with pytest.raises(ReportError):
        emit_report(rec, blocker)
    with pytest.raises(ReportError):
        write_csv(rec, tmp_path / "missing" / "m.csv")
