"""Reward accounting for episodes.

A RunRecord stores the realized rewards of one episode together with the
per-context oracle value series (best, worst and mean arm of the truth
bandit) and each expert's expected greedy reward series.  Scaling maps the
worst oracle series to 0 and the best to 1, matching the normalized reward
reported by the experiment plots.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass
class RunRecord:
    rewards: np.ndarray  # (T,) realized rewards of the policy
    oracle_best: np.ndarray  # (T,) per-context max arm value
    oracle_worst: np.ndarray  # (T,) per-context min arm value
    oracle_mean: np.ndarray  # (T,) per-context mean arm value
    expert_rewards: np.ndarray  # (N, T) expected reward of each expert's greedy policy
    chosen_arms: np.ndarray  # (T,) arm indices pulled by the policy
    final_weights: np.ndarray | None = None  # per-expert policy weights at the last step

    def __post_init__(self):
        t = len(self.rewards)
        for name in ("oracle_best", "oracle_worst", "oracle_mean", "chosen_arms"):
            if len(getattr(self, name)) != t:
                raise ValueError(f"{name} must have length {t}")
        if self.expert_rewards.ndim != 2 or self.expert_rewards.shape[1] != t:
            raise ValueError("expert_rewards must have shape (N, T)")
        if np.any(self.oracle_worst > self.oracle_mean + 1e-12) or np.any(
            self.oracle_mean > self.oracle_best + 1e-12
        ):
            raise ValueError("oracle series must satisfy worst <= mean <= best")

    @property
    def horizon(self) -> int:
        return len(self.rewards)


def cumulative_reward(rewards: np.ndarray) -> float:
    return float(np.sum(rewards))


def _scale_span(record: RunRecord) -> tuple[float, float]:
    worst = float(np.sum(record.oracle_worst))
    span = float(np.sum(record.oracle_best)) - worst
    if span <= 0.0:
        raise ArithmeticError("degenerate oracle bounds: best equals worst")
    return worst, span


def scale_total(total: float, record: RunRecord) -> float:
    """Scale a cumulative reward so the oracle worst maps to 0 and best to 1."""
    worst, span = _scale_span(record)
    return (total - worst) / span


def scaled_cumulative_reward(record: RunRecord) -> float:
    return scale_total(cumulative_reward(record.rewards), record)


def random_baseline(record: RunRecord) -> float:
    """Scaled expected performance of a uniform random policy."""
    return scale_total(float(np.sum(record.oracle_mean)), record)


def expert_scaled_totals(record: RunRecord) -> np.ndarray:
    """Scaled cumulative expected reward per expert."""
    worst, span = _scale_span(record)
    return (record.expert_rewards.sum(axis=1) - worst) / span


def regret_vs_best_expert(record: RunRecord) -> float:
    """Cumulative reward gap to the single best expert in hindsight."""
    best = float(record.expert_rewards.sum(axis=1).max())
    return best - cumulative_reward(record.rewards)


def anytime_average(rewards: np.ndarray, record: RunRecord) -> np.ndarray:
    """Scaled running mean after each step, length T.

    The same per-prefix worst/best scaling is applied, so the final element
    equals the scaled cumulative reward.
    """
    cum = np.cumsum(rewards)
    worst = np.cumsum(record.oracle_worst)
    span = np.cumsum(record.oracle_best) - worst
    if np.any(span <= 0.0):
        raise ArithmeticError("degenerate oracle bounds in a prefix")
    return (cum - worst) / span


def crossover_step(
    algorithm_series: np.ndarray,
    expert_series: np.ndarray,
    burn_in: int = 10,
    hold: int = 50,
) -> int | None:
    """First step >= burn_in where the algorithm series reaches the expert
    series and stays at or above it for the next `hold` steps (window
    truncated at the horizon).  None if that never happens."""
    algorithm_series = np.asarray(algorithm_series, dtype=float)
    expert_series = np.asarray(expert_series, dtype=float)
    if algorithm_series.shape != expert_series.shape:
        raise ValueError("series must have equal length")
    above = algorithm_series >= expert_series
    t_max = len(above)
    for t in range(burn_in, t_max):
        if above[t : min(t + hold + 1, t_max)].all():
            return t
    return None


def pearson_cc(xs: np.ndarray, ys: np.ndarray) -> float:
    """Sample Pearson correlation coefficient."""
    xs = np.asarray(xs, dtype=float)
    ys = np.asarray(ys, dtype=float)
    if xs.shape != ys.shape:
        raise ValueError("inputs must have equal length")
    dx = xs - xs.mean()
    dy = ys - ys.mean()
    sx = float(np.sqrt(np.sum(dx * dx)))
    sy = float(np.sqrt(np.sum(dy * dy)))
    if sx == 0.0 or sy == 0.0:
        raise ArithmeticError("zero variance in correlation input")
    return float(np.sum(dx * dy) / (sx * sy))
