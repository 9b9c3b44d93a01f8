"""Perlin-noise contextual bandits.

Each arm of a bandit owns a grid of random unit gradient vectors.  The value
of an arm at a context in the unit square is classic 2-d gradient noise:
dot products of the four surrounding gradients with the offsets to them,
blended with the quintic fade, then mapped affinely from [-sqrt(2)/2,
sqrt(2)/2] to [0, 1].  Rewards are Bernoulli draws with that value as the
success probability.

Bias between bandits is introduced by rotating every gradient by an angle
drawn from a wrapped Cauchy distribution; distance between bandits is the
per-arm mean squared difference of their value landscapes, scaled so the
fully inverted bandit sits at distance 1.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

from . import metrics

SQRT2 = math.sqrt(2.0)


class CalibrationError(RuntimeError):
    """Bias calibration failed to reach the target distance.

    Carries the best bandit found and its measured scaled distance.
    """

    def __init__(self, message: str, best_bandit: "PerlinBandit | None" = None, best_achieved: float = float("nan")):
        super().__init__(message)
        self.best_bandit = best_bandit
        self.best_achieved = best_achieved

    def __reduce__(self):
        return (CalibrationError, (self.args[0], self.best_bandit, self.best_achieved))


@dataclass(frozen=True)
class VectorGrid:
    """A grid_side x grid_side lattice of 2-d unit gradient vectors."""

    vectors: np.ndarray  # (G, G, 2), axis 0 indexes x, axis 1 indexes y

    def __post_init__(self):
        v = np.asarray(self.vectors, dtype=float)
        if v.ndim != 3 or v.shape[0] != v.shape[1] or v.shape[2] != 2:
            raise ValueError(f"vector grid must have shape (G, G, 2), got {v.shape}")
        if v.shape[0] < 2:
            raise ValueError("grid_side must be >= 2")
        norms = np.linalg.norm(v, axis=-1)
        if not np.allclose(norms, 1.0, atol=1e-9):
            raise ValueError("gradient vectors must have unit norm")
        object.__setattr__(self, "vectors", v)

    @property
    def grid_side(self) -> int:
        return self.vectors.shape[0]

    def angles(self) -> np.ndarray:
        return np.arctan2(self.vectors[..., 1], self.vectors[..., 0])


@dataclass(frozen=True)
class PerlinBandit:
    """K arms, each with its own gradient grid over the unit square."""

    arms: tuple[VectorGrid, ...]

    def __post_init__(self):
        if len(self.arms) < 2:
            raise ValueError("a bandit needs at least 2 arms")
        sides = {g.grid_side for g in self.arms}
        if len(sides) != 1:
            raise ValueError("all arms must share the same grid_side")
        object.__setattr__(self, "arms", tuple(self.arms))

    @property
    def n_arms(self) -> int:
        return len(self.arms)

    @property
    def grid_side(self) -> int:
        return self.arms[0].grid_side

    context_dim = 2


def sample_unit_contexts(n: int, rng: np.random.Generator) -> np.ndarray:
    """n contexts uniform on the unit square, shape (n, 2)."""
    return rng.uniform(0.0, 1.0, size=(n, 2))


def sample_grid(grid_side: int, rng: np.random.Generator) -> VectorGrid:
    if grid_side < 2:
        raise ValueError("grid_side must be >= 2")
    theta = rng.uniform(0.0, 2.0 * math.pi, size=(grid_side, grid_side))
    return VectorGrid(np.stack([np.cos(theta), np.sin(theta)], axis=-1))


def sample_bandit(n_arms: int, grid_side: int, rng: np.random.Generator) -> PerlinBandit:
    """Sample a fresh bandit: one independent gradient grid per arm."""
    if n_arms < 2:
        raise ValueError("n_arms must be >= 2")
    if grid_side < 2:
        raise ValueError("grid_side must be >= 2")
    return PerlinBandit(tuple(sample_grid(grid_side, rng) for _ in range(n_arms)))


def _fade(t: np.ndarray) -> np.ndarray:
    # quintic smoothing 6t^5 - 15t^4 + 10t^3
    return t * t * t * (t * (t * 6.0 - 15.0) + 10.0)


def grid_values(grid: VectorGrid, xs: np.ndarray) -> np.ndarray:
    """Landscape values in [0, 1] for contexts xs of shape (n, 2)."""
    xs = np.asarray(xs, dtype=float)
    if xs.ndim != 2 or xs.shape[1] != 2:
        raise ValueError("contexts must have shape (n, 2)")
    if np.any(xs < 0.0) or np.any(xs > 1.0):
        raise ValueError("contexts must lie in the unit square")
    g = grid.grid_side
    scaled = xs * (g - 1)
    cell = np.minimum(scaled.astype(int), g - 2)
    fx = scaled[:, 0] - cell[:, 0]
    fy = scaled[:, 1] - cell[:, 1]
    ix, iy = cell[:, 0], cell[:, 1]

    v = grid.vectors
    g00 = v[ix, iy]
    g10 = v[ix + 1, iy]
    g01 = v[ix, iy + 1]
    g11 = v[ix + 1, iy + 1]

    n00 = g00[:, 0] * fx + g00[:, 1] * fy
    n10 = g10[:, 0] * (fx - 1.0) + g10[:, 1] * fy
    n01 = g01[:, 0] * fx + g01[:, 1] * (fy - 1.0)
    n11 = g11[:, 0] * (fx - 1.0) + g11[:, 1] * (fy - 1.0)

    u = _fade(fx)
    w = _fade(fy)
    bottom = n00 + u * (n10 - n00)
    top = n01 + u * (n11 - n01)
    raw = bottom + w * (top - bottom)
    return 0.5 + raw / SQRT2


def landscape_value(grid: VectorGrid, x: np.ndarray) -> float:
    """Landscape value at a single context."""
    return float(grid_values(grid, np.asarray(x, dtype=float).reshape(1, 2))[0])


def bandit_values(bandit: PerlinBandit, xs: np.ndarray) -> np.ndarray:
    """Values of every arm at every context, shape (n, K)."""
    return np.stack([grid_values(g, xs) for g in bandit.arms], axis=1)


def pull(bandit: PerlinBandit, arm: int, x: np.ndarray, rng: np.random.Generator) -> int:
    """Bernoulli reward for pulling `arm` at context x."""
    if not 0 <= arm < bandit.n_arms:
        raise ValueError(f"arm index {arm} out of range for {bandit.n_arms} arms")
    p = landscape_value(bandit.arms[arm], x)
    return int(rng.uniform() < p)


def wrapped_cauchy(mean: float, concentration: float, size, rng: np.random.Generator) -> np.ndarray:
    """Wrapped Cauchy angles with the given mean and concentration in (0, 1].

    concentration -> 1 collapses to a point mass at `mean`; -> 0 approaches
    the uniform distribution on the circle.  Sampled by drawing a Cauchy
    variate with scale -ln(concentration) and wrapping mod 2*pi.
    """
    if not 0.0 < concentration <= 1.0:
        raise ValueError("concentration must lie in (0, 1]")
    gamma = -math.log(concentration)
    u = rng.uniform(0.0, 1.0, size=size)
    theta = mean + gamma * np.tan(math.pi * (u - 0.5))
    return np.mod(theta, 2.0 * math.pi)


def rotate_grid(grid: VectorGrid, mean: float, scale: float, rng: np.random.Generator) -> VectorGrid:
    """Rotate every gradient by mean + a wrapped Cauchy angle with scale `scale`."""
    g = grid.grid_side
    theta = wrapped_cauchy(mean, scale, (g, g), rng)
    new_angle = grid.angles() + theta
    return VectorGrid(np.stack([np.cos(new_angle), np.sin(new_angle)], axis=-1))


def rotate_bandit(bandit: PerlinBandit, mean: float, scale: float, rng: np.random.Generator) -> PerlinBandit:
    return PerlinBandit(tuple(rotate_grid(g, mean, scale, rng) for g in bandit.arms))


def invert_bandit(bandit: PerlinBandit) -> PerlinBandit:
    """Negate every gradient vector; the landscape becomes 1 - original."""
    return PerlinBandit(tuple(VectorGrid(-g.vectors) for g in bandit.arms))


def _mse(values_a: np.ndarray, values_b: np.ndarray) -> float:
    return float(np.mean((values_a - values_b) ** 2))


def bandit_distance(
    a: PerlinBandit,
    b: PerlinBandit,
    n_samples: int = 1024,
    rng: np.random.Generator | None = None,
) -> float:
    """Monte-Carlo estimate of the mean per-arm squared landscape difference."""
    if a.n_arms != b.n_arms:
        raise ValueError("bandits must have the same number of arms")
    if n_samples < 1:
        raise ValueError("n_samples must be >= 1")
    rng = np.random.default_rng() if rng is None else rng
    xs = sample_unit_contexts(n_samples, rng)
    return _mse(bandit_values(a, xs), bandit_values(b, xs))


def scaled_distance(
    a: PerlinBandit,
    b: PerlinBandit,
    n_samples: int = 1024,
    rng: np.random.Generator | None = None,
) -> float:
    """bandit_distance(a, b) divided by the distance to a's full inversion.

    Both distances are estimated on the same context sample, so the inverted
    bandit itself scores exactly 1.
    """
    if a.n_arms != b.n_arms:
        raise ValueError("bandits must have the same number of arms")
    rng = np.random.default_rng() if rng is None else rng
    xs = sample_unit_contexts(n_samples, rng)
    va = bandit_values(a, xs)
    vb = bandit_values(b, xs)
    v_inv = bandit_values(invert_bandit(a), xs)
    denom = _mse(va, v_inv)
    if denom <= 0.0:
        raise ArithmeticError("degenerate flat landscape: zero distance to the inverted bandit")
    return _mse(va, vb) / denom


def value_pcc(
    a: PerlinBandit,
    b: PerlinBandit,
    n_samples: int = 1024,
    rng: np.random.Generator | None = None,
) -> float:
    """Pearson correlation of the two bandits' pooled landscape values."""
    if a.n_arms != b.n_arms:
        raise ValueError("bandits must have the same number of arms")
    rng = np.random.default_rng() if rng is None else rng
    xs = sample_unit_contexts(n_samples, rng)
    va = bandit_values(a, xs).ravel()
    vb = bandit_values(b, xs).ravel()
    return metrics.pearson_cc(va, vb)


# Coarse concentration ladder probed first during calibration; spans the
# near-identity to near-uniform rotation regimes.
_PROBE_LADDER = (0.999, 0.97, 0.9, 0.75, 0.55, 0.35, 0.18, 0.08, 0.02, 1e-4)


def calibrate_bias(
    base: PerlinBandit,
    target_distance: float,
    tol: float = 0.02,
    rng: np.random.Generator | None = None,
    n_samples: int = 1024,
    max_iters: int = 64,
) -> tuple[PerlinBandit, float]:
    """Produce a rotated copy of `base` at the requested scaled distance.

    Targets above 0.5 cannot be reached by mean-zero rotations, so those use
    a 180-degree mean rotation plus noise.  The wrapped Cauchy scale is then
    searched over at most `max_iters` probes, each a fresh rotation draw
    measured against a shared context sample: a coarse concentration ladder,
    a short bisection refine, then repeated draws at the best concentration.
    Any probe landing within `tol` of the target is returned directly (the
    drawn bandit itself is the artifact, so a lucky draw is a valid result).
    """
    if not 0.0 <= target_distance <= 1.0:
        raise ValueError("target distance must lie in [0, 1]")
    if tol <= 0.0:
        raise ValueError("tolerance must be positive")
    rng = np.random.default_rng() if rng is None else rng

    mean = 0.0 if target_distance <= 0.5 else math.pi
    xs = sample_unit_contexts(n_samples, rng)
    v_base = bandit_values(base, xs)
    v_inv = bandit_values(invert_bandit(base), xs)
    denom = _mse(v_base, v_inv)
    if denom <= 0.0:
        raise ArithmeticError("degenerate flat landscape: cannot calibrate")

    probes_left = max_iters
    best: tuple[float, PerlinBandit, float, float] | None = None  # (err, bandit, achieved, scale)

    def probe(scale: float):
        nonlocal probes_left, best
        probes_left -= 1
        candidate = rotate_bandit(base, mean, scale, rng)
        achieved = _mse(v_base, bandit_values(candidate, xs)) / denom
        err = abs(achieved - target_distance)
        if best is None or err < best[0]:
            best = (err, candidate, achieved, scale)
        return achieved, err

    # Coarse pass over the ladder.
    ladder_errs = []
    for scale in _PROBE_LADDER:
        if probes_left <= 0:
            break
        achieved, err = probe(scale)
        ladder_errs.append(err)
        if err <= tol:
            return best[1], best[2]

    # Stochastic-approximation walk from the best ladder point: nudge the
    # concentration in log space against the sign of the overshoot, with a
    # decaying step, drawing fresh rotations until one lands within tol.
    # Measured distance is monotone in the noise level 1 - scale: decreasing
    # in scale for mean 0 (0.5 -> 0), increasing for mean pi (0.5 -> 1).
    idx = int(np.argmin(ladder_errs)) if ladder_errs else 0
    scale = _PROBE_LADDER[idx]
    step = 0.5
    while probes_left > 0:
        achieved, err = probe(scale)
        if err <= tol:
            return best[1], best[2]
        too_noisy = achieved > target_distance if mean == 0.0 else achieved < target_distance
        direction = 1.0 if too_noisy else -1.0  # raise concentration to cut rotation noise
        scale = float(np.clip(math.exp(math.log(scale) + direction * step), 1e-6, 1.0))
        step = max(step * 0.85, 0.05)

    assert best is not None
    raise CalibrationError(
        f"calibration to {target_distance:.3f} did not converge within {max_iters} probes "
        f"(best achieved {best[2]:.4f})",
        best_bandit=best[1],
        best_achieved=best[2],
    )


def bandit_to_dict(bandit: PerlinBandit) -> dict:
    """JSON-friendly snapshot storing each grid as a list of angles."""
    return {
        "grid_side": bandit.grid_side,
        "arm_angles": [g.angles().ravel().tolist() for g in bandit.arms],
    }


def bandit_from_dict(data: dict) -> PerlinBandit:
    g = int(data["grid_side"])
    arms = []
    for flat in data["arm_angles"]:
        theta = np.asarray(flat, dtype=float).reshape(g, g)
        arms.append(VectorGrid(np.stack([np.cos(theta), np.sin(theta)], axis=-1)))
    return PerlinBandit(tuple(arms))


def bandit_to_json(bandit: PerlinBandit) -> str:
    return json.dumps(bandit_to_dict(bandit))


def bandit_from_json(text: str) -> PerlinBandit:
    return bandit_from_dict(json.loads(text))
