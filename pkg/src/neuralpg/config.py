"""Experiment configuration, named presets and INI loading.

Config files are INI with a single ``[experiment]`` section of ``key = value``
lines. Unset optional keys fall back to the schedule defaults:

    [experiment]
    algorithm = npg          # pg | npg | pg_projection_free
    env = chain:S=4
    T = 200
    B = 2000
    m = 512
    d = 8
    R = 1.1
    critic_mode = exact_oracle   # or neural_td
    seeds = 0, 1, 2, 3, 4
    # eta = ...      default 1 / sqrt(T)
    # T_td = ...     default max(m, 10000)
    # eta_td = ...   default min((1 - gamma) / 8, 1 / sqrt(T_td))
"""

from __future__ import annotations

import configparser
import dataclasses
import math
from dataclasses import dataclass, field
from pathlib import Path

ALGORITHMS = ("pg", "npg", "pg_projection_free")
ALGO_ALIASES = {"pgfree": "pg_projection_free", "projection_free": "pg_projection_free"}
CRITIC_MODES = ("neural_td", "exact_oracle")


@dataclass(frozen=True)
class ExperimentConfig:
    algorithm: str = "pg"
    env: str = "chain:S=4"
    T: int = 200
    B: int = 2000
    m: int = 512
    d: int = 8
    R: float = 1.1
    eta: float | None = None
    T_td: int | None = None
    eta_td: float | None = None
    critic_mode: str = "exact_oracle"
    seeds: tuple = (0,)
    env_seed: int | None = None  # None: reuse the run seed
    burn_in: int | None = None
    npg_max_iters: int = 200
    npg_tol: float = 1e-8
    memory_budget: int = 200_000_000
    q_clip: float | None = None  # projection-free critic clip; None: the MDP's q_max
    output_dir: str | None = None

    def __post_init__(self):
        algo = ALGO_ALIASES.get(self.algorithm, self.algorithm)
        if algo not in ALGORITHMS:
            raise ValueError(f"unknown algorithm {self.algorithm!r}; expected one of {ALGORITHMS}")
        object.__setattr__(self, "algorithm", algo)
        if self.critic_mode not in CRITIC_MODES:
            raise ValueError(f"unknown critic_mode {self.critic_mode!r}")
        for name in ("T", "B", "m", "npg_max_iters"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be positive")
        if self.d < 2:
            raise ValueError("d must be >= 2")
        if not self.R > 1:
            raise ValueError(f"R must exceed 1, got {self.R}")
        for name in ("eta", "eta_td", "T_td"):
            value = getattr(self, name)
            if value is not None and not value > 0:
                raise ValueError(f"{name} must be positive")
        object.__setattr__(self, "seeds", tuple(int(s) for s in self.seeds))

    @property
    def actor_rate(self) -> float:
        return self.eta if self.eta is not None else 1.0 / math.sqrt(self.T)

    def tau_at(self, i: int) -> float:
        """Temperature of pi_i (1-based): 1 for pg variants, (i - 1) eta for npg."""
        return (i - 1) * self.actor_rate if self.algorithm == "npg" else 1.0

    def replace(self, **changes) -> "ExperimentConfig":
        return dataclasses.replace(self, **{k: v for k, v in changes.items() if v is not None})

    def to_dict(self) -> dict:
        out = dataclasses.asdict(self)
        out["seeds"] = list(self.seeds)
        return out

    def to_ini(self) -> str:
        lines = ["[experiment]"]
        for key, value in self.to_dict().items():
            if value is None:
                continue
            if key == "seeds":
                value = ", ".join(str(s) for s in value)
            lines.append(f"{key} = {value}")
        return "\n".join(lines) + "\n"


PRESETS = {
    "pg": ExperimentConfig(algorithm="pg"),
    "npg": ExperimentConfig(algorithm="npg"),
    "pg_projection_free": ExperimentConfig(algorithm="pg_projection_free"),
}


def preset(name: str, **changes) -> ExperimentConfig:
    name = ALGO_ALIASES.get(name, name)
    if name not in PRESETS:
        raise ValueError(f"unknown preset {name!r}")
    return PRESETS[name].replace(**changes)


_FIELD_TYPES = {f.name: f.type for f in dataclasses.fields(ExperimentConfig)}


def _coerce(key: str, raw: str):
    kind = _FIELD_TYPES[key]
    raw = raw.strip()
    if key == "seeds":
        return tuple(int(s) for s in raw.replace(",", " ").split())
    if raw.lower() in ("", "none"):
        return None
    if kind.startswith("int"):
        return int(float(raw)) if "e" in raw.lower() else int(raw)
    if kind.startswith("float"):
        return float(raw)
    return raw


def parse_config_text(text: str, source: str = "<string>") -> ExperimentConfig:
    parser = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    parser.optionxform = str  # keep T and T_td distinct from t
    parser.read_string(text, source=source)
    if not parser.has_section("experiment"):
        raise ValueError(f"{source}: missing [experiment] section")
    values = {}
    for key, raw in parser.items("experiment"):
        if key not in _FIELD_TYPES:
            raise ValueError(f"{source}: unknown key {key!r}")
        values[key] = _coerce(key, raw)
    base = PRESETS.get(ALGO_ALIASES.get(values.get("algorithm", "pg"), values.get("algorithm", "pg")))
    base = base if base is not None else ExperimentConfig()
    return dataclasses.replace(base, **values)


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    return parse_config_text(path.read_text(), source=str(path))
