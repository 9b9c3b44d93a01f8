"""Experiment configuration.

One flat dataclass covers every experiment knob.  Configs load from a
key=value text file ('#' starts a comment, keys match field names) and any
field can be overridden afterwards; the harness treats a config as the full
description of an experiment except for the worker count, which never
affects results.
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass

DEFAULT_DELTA_GRID = (0.0, 1 / 6, 2 / 6, 3 / 6, 4 / 6, 5 / 6, 1.0)
ALL_ALGORITHMS = ("wmv", "metamab", "exp4p", "metacmab", "random")


@dataclass
class ExperimentConfig:
    arms: int = 4
    experts: int = 4
    expert_config: str = "homogeneous"  # homogeneous | heterogeneous | polarized
    delta_grid: tuple[float, ...] = DEFAULT_DELTA_GRID
    t_cdm: int = 1000
    t_tr: int | None = None  # None -> arms * 100
    runs: int = 32
    algorithms: tuple[str, ...] = ALL_ALGORITHMS
    confidence: str = "none"  # none | hindsight | noisy:<eta>
    train_backend: str = "regression"  # regression | kernel_ucb
    grid_side: int = 5
    prior_strength: float = 100.0  # confidence pseudo-count strength M
    exp4p_delta: float = 0.1
    alpha_ucb: float = 1.0
    ridge_lambda: float = 1.0
    kernel_length_scale: float = 0.2
    kernel_reg: float = 1.0
    ucb_eta: float = 1.0
    calibration_tol: float = 0.02
    distance_samples: int = 1024
    confidence_samples: int = 1024
    master_seed: int = 0

    def __post_init__(self):
        if self.arms < 2:
            raise ValueError("arms must be >= 2")
        if self.experts < 1:
            raise ValueError("experts must be >= 1")
        if self.t_cdm < 1 or self.runs < 1:
            raise ValueError("t_cdm and runs must be positive")
        if self.expert_config not in ("homogeneous", "heterogeneous", "polarized"):
            raise ValueError(f"unknown expert_config {self.expert_config!r}")
        for d in self.delta_grid:
            if not 0.0 <= d <= 1.0:
                raise ValueError("delta_grid values must lie in [0, 1]")
        for algo in self.algorithms:
            if algo not in ALL_ALGORITHMS:
                raise ValueError(f"unknown algorithm {algo!r}")
        self.confidence_noise()  # validates the confidence string

    @property
    def trained_steps(self) -> int:
        return self.arms * 100 if self.t_tr is None else self.t_tr

    def confidence_noise(self) -> float | None:
        """None for mode 'none'; the Beta noise level otherwise (0 = exact)."""
        if self.confidence == "none":
            return None
        if self.confidence == "hindsight":
            return 0.0
        if self.confidence.startswith("noisy:"):
            eta = float(self.confidence.split(":", 1)[1])
            if eta < 0.0:
                raise ValueError("confidence noise must be >= 0")
            return eta
        raise ValueError(f"unknown confidence mode {self.confidence!r}")

    def replace(self, **changes) -> "ExperimentConfig":
        return dataclasses.replace(self, **changes)

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["delta_grid"] = list(self.delta_grid)
        d["algorithms"] = list(self.algorithms)
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"


_TUPLE_FLOAT_FIELDS = {"delta_grid"}
_TUPLE_STR_FIELDS = {"algorithms"}


def _coerce(name: str, raw: str):
    fields = {f.name: f for f in dataclasses.fields(ExperimentConfig)}
    if name not in fields:
        raise ValueError(f"unknown config key {name!r}")
    raw = raw.strip()
    if name in _TUPLE_FLOAT_FIELDS:
        return tuple(float(v) for v in raw.split(",") if v.strip())
    if name in _TUPLE_STR_FIELDS:
        return tuple(v.strip() for v in raw.split(",") if v.strip())
    if name == "t_tr":
        return None if raw.lower() in ("none", "") else int(raw)
    default = fields[name].default
    if isinstance(default, bool):
        return raw.lower() in ("1", "true", "yes")
    if isinstance(default, int):
        return int(raw)
    if isinstance(default, float):
        return float(raw)
    return raw


def parse_config_text(text: str) -> dict:
    """Parse key=value lines into a field dict (comments and blanks skipped)."""
    values = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.split("#", 1)[0].strip()
        if not stripped:
            continue
        if "=" not in stripped:
            raise ValueError(f"line {lineno}: expected key=value, got {line!r}")
        key, _, raw = stripped.partition("=")
        key = key.strip()
        values[key] = _coerce(key, raw)
    return values


def load_config(path, overrides: dict | None = None) -> ExperimentConfig:
    with open(path, "r", encoding="utf-8") as fh:
        values = parse_config_text(fh.read())
    if overrides:
        values.update({k: v for k, v in overrides.items() if v is not None})
    return ExperimentConfig(**values)
