"""Writing run records: per-iteration CSV, JSON summary, config echo and SVG plots.

Floats are written with ``repr`` so that ``read_csv`` recovers them exactly.
"""

from __future__ import annotations

import csv
import json
import math
from pathlib import Path

from neuralpg.runner import COLUMNS, RunRecord


class ReportError(OSError):
    pass


def _fmt(value) -> str:
    if isinstance(value, int):
        return str(value)
    return repr(float(value))


def write_csv(record: RunRecord, path) -> Path:
    path = Path(path)
    try:
        with path.open("w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(COLUMNS)
            for row in record.rows:
                w.writerow([_fmt(row[c]) for c in COLUMNS])
    except OSError as exc:
        raise ReportError(f"cannot write {path}: {exc}") from exc
    return path


def read_csv(path) -> list:
    path = Path(path)
    with path.open(newline="") as fh:
        reader = csv.DictReader(fh)
        rows = []
        for raw in reader:
            rows.append({k: int(v) if k == "i" else float(v) for k, v in raw.items()})
    return rows


def _jsonable(obj):
    if isinstance(obj, float) and not math.isfinite(obj):
        return None if math.isnan(obj) else ("inf" if obj > 0 else "-inf")
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    return obj


def write_json(record: RunRecord, path) -> Path:
    path = Path(path)
    payload = {"seed": record.seed, "config": record.config, "summary": record.summary}
    try:
        path.write_text(json.dumps(_jsonable(payload), indent=2, sort_keys=True) + "\n")
    except OSError as exc:
        raise ReportError(f"cannot write {path}: {exc}") from exc
    return path


def write_config_echo(record: RunRecord, path) -> Path:
    from neuralpg.config import ExperimentConfig

    path = Path(path)
    try:
        path.write_text(ExperimentConfig(**record.config).to_ini())
    except OSError as exc:
        raise ReportError(f"cannot write {path}: {exc}") from exc
    return path


def write_svg(record: RunRecord, path) -> Path:
    from neuralpg.plotting import plot_run

    path = Path(path)
    algo = record.config.get("algorithm", "")
    try:
        plot_run(record.rows, path, title=f"{algo}, {record.config.get('env', '')}, seed {record.seed}")
    except OSError as exc:
        raise ReportError(f"cannot write {path}: {exc}") from exc
    return path


_WRITERS = {"csv": write_csv, "json": write_json, "svg": write_svg, "ini": write_config_echo}
_NAMES = {"csv": "metrics.csv", "json": "summary.json", "svg": "curves.svg", "ini": "config.ini"}


def emit_report(record: RunRecord, out_dir, formats=("csv", "json", "svg", "ini")) -> dict:
    """Write the requested formats into ``out_dir/<algorithm>_seed<seed>/``; return their paths."""
    base = Path(out_dir) / f"{record.config.get('algorithm', 'run')}_seed{record.seed}"
    try:
        base.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise ReportError(f"cannot create {base}: {exc}") from exc
    return {fmt: _WRITERS[fmt](record, base / _NAMES[fmt]) for fmt in formats}
