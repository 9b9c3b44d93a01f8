"""Expert panels trained on biased prior bandits.

An expert is a per-arm kernel ridge value model fitted to experiences drawn
from its own (rotated, distance-calibrated) prior bandit.  Its advice for a
context is the clamped vector of per-arm value predictions.  Panels come in
three layouts around a target distance: homogeneous (all experts at the
target), heterogeneous (evenly spread across the reachable window), and
polarized (two clusters at the window endpoints).

Hindsight confidence normalizes an expert's expected greedy reward between
the per-context worst and best arms, exponentiated so a uniform random
policy lands exactly at 0.5.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import perlin
from .perlin import PerlinBandit


def _rbf(xa: np.ndarray, xb: np.ndarray, length_scale: float) -> np.ndarray:
    d2 = ((xa[:, None, :] - xb[None, :, :]) ** 2).sum(axis=-1)
    return np.exp(-0.5 * d2 / (length_scale * length_scale))


class ArmValueModel:
    """Kernel ridge regression for one arm with an RBF kernel.

    Exposes the posterior mean (the value estimate) and the ridge-posterior
    standard deviation used as the exploration width during training.  With
    no data the mean is 0 and the width is 1.
    """

    def __init__(self, length_scale: float = 0.2, reg: float = 1.0):
        if reg <= 0.0:
            raise ValueError("regularizer must be positive")
        self.length_scale = length_scale
        self.reg = reg
        self._xs: list[np.ndarray] = []
        self._ys: list[float] = []
        self._x_arr = np.zeros((0, 2))
        self._gram_inv = np.zeros((0, 0))
        self._alpha = np.zeros(0)

    @property
    def n_points(self) -> int:
        return len(self._ys)

    def _refit(self) -> None:
        self._x_arr = np.asarray(self._xs, dtype=float).reshape(-1, 2)
        y = np.asarray(self._ys, dtype=float)
        gram = _rbf(self._x_arr, self._x_arr, self.length_scale)
        gram[np.diag_indices_from(gram)] += self.reg
        self._gram_inv = np.linalg.inv(gram)
        self._alpha = self._gram_inv @ y

    def add(self, x: np.ndarray, y: float) -> None:
        self._xs.append(np.asarray(x, dtype=float))
        self._ys.append(float(y))
        self._refit()

    def fit(self, xs: np.ndarray, ys: np.ndarray) -> None:
        self._xs = [np.asarray(x, dtype=float) for x in xs]
        self._ys = [float(y) for y in ys]
        if self._ys:
            self._refit()

    def mean(self, xs: np.ndarray) -> np.ndarray:
        xs = np.atleast_2d(np.asarray(xs, dtype=float))
        if self.n_points == 0:
            return np.zeros(len(xs))
        k = _rbf(xs, self._x_arr, self.length_scale)
        return k @ self._alpha

    def mean_std(self, xs: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        xs = np.atleast_2d(np.asarray(xs, dtype=float))
        if self.n_points == 0:
            return np.zeros(len(xs)), np.ones(len(xs))
        k = _rbf(xs, self._x_arr, self.length_scale)
        mean = k @ self._alpha
        var = 1.0 - np.einsum("ij,jk,ik->i", k, self._gram_inv, k)
        return mean, np.sqrt(np.clip(var, 0.0, None))


def _argmax_tie(values: np.ndarray, rng: np.random.Generator) -> int:
    top = np.flatnonzero(values == values.max())
    return int(top[0]) if len(top) == 1 else int(rng.choice(top))


@dataclass
class Expert:
    """A trained value estimator plus the prior bandit it learned from."""

    prior_bandit: PerlinBandit
    models: list[ArmValueModel]
    achieved_distance: float
    target_distance: float
    trained_steps: int

    @property
    def n_arms(self) -> int:
        return len(self.models)

    def advice_for(self, x: np.ndarray) -> np.ndarray:
        """Clamped per-arm value estimates at one context, shape (K,)."""
        return self.advice_batch(np.asarray(x, dtype=float).reshape(1, 2))[0]

    def advice_batch(self, xs: np.ndarray) -> np.ndarray:
        """Clamped value estimates for many contexts, shape (n, K)."""
        preds = np.stack([m.mean(xs) for m in self.models], axis=1)
        return np.clip(preds, 0.0, 1.0)


class RandomAdviceExpert:
    """Synthetic expert whose advice is fresh uniform noise at every call."""

    achieved_distance = float("nan")
    target_distance = float("nan")
    trained_steps = 0
    confidence = 0.5

    def __init__(self, n_arms: int, rng: np.random.Generator):
        self.n_arms = n_arms
        self._rng = rng

    def advice_for(self, x: np.ndarray) -> np.ndarray:
        return self._rng.uniform(size=self.n_arms)

    def advice_batch(self, xs: np.ndarray) -> np.ndarray:
        return self._rng.uniform(size=(len(xs), self.n_arms))


def random_expert(n_arms: int, rng: np.random.Generator) -> RandomAdviceExpert:
    return RandomAdviceExpert(n_arms, rng)


def train_expert(
    prior: PerlinBandit,
    trained_steps: int,
    backend: str = "regression",
    rng: np.random.Generator | None = None,
    length_scale: float = 0.2,
    reg: float = 1.0,
    ucb_width: float = 1.0,
    achieved_distance: float = float("nan"),
    target_distance: float = float("nan"),
) -> Expert:
    """Fit per-arm value models on experiences from the prior bandit.

    backend "kernel_ucb": sequential optimistic arm selection (posterior mean
    plus ucb_width * posterior std), one model update per step.  backend
    "regression": a single batch fit on uniformly sampled contexts with arms
    assigned round-robin.  Both see `trained_steps` Bernoulli experiences.
    """
    if trained_steps < 1:
        raise ValueError("trained_steps must be >= 1")
    rng = np.random.default_rng() if rng is None else rng
    n_arms = prior.n_arms
    models = [ArmValueModel(length_scale, reg) for _ in range(n_arms)]

    if backend == "kernel_ucb":
        for _ in range(trained_steps):
            x = rng.uniform(size=2)
            scores = np.empty(n_arms)
            for k, model in enumerate(models):
                mean, std = model.mean_std(x)
                scores[k] = mean[0] + ucb_width * std[0]
            arm = _argmax_tie(scores, rng)
            reward = perlin.pull(prior, arm, x, rng)
            models[arm].add(x, reward)
    elif backend == "regression":
        xs = perlin.sample_unit_contexts(trained_steps, rng)
        arms = np.arange(trained_steps) % n_arms
        probs = perlin.bandit_values(prior, xs)[np.arange(trained_steps), arms]
        rewards = (rng.uniform(size=trained_steps) < probs).astype(float)
        for k in range(n_arms):
            mask = arms == k
            models[k].fit(xs[mask], rewards[mask])
    else:
        raise ValueError(f"unknown training backend {backend!r}")

    return Expert(
        prior_bandit=prior,
        models=models,
        achieved_distance=achieved_distance,
        target_distance=target_distance,
        trained_steps=trained_steps,
    )


@dataclass
class ExpertPanel:
    """A list of experts plus optional per-expert hindsight confidences."""

    experts: list
    confidences: np.ndarray | None = None
    kind: str = "custom"
    target_distance: float = float("nan")

    def __post_init__(self):
        if len(self.experts) < 1:
            raise ValueError("a panel needs at least one expert")
        arms = {e.n_arms for e in self.experts}
        if len(arms) != 1:
            raise ValueError("all panel experts must share the arm count")

    @property
    def n_experts(self) -> int:
        return len(self.experts)

    @property
    def n_arms(self) -> int:
        return self.experts[0].n_arms

    def advise(self, x: np.ndarray) -> np.ndarray:
        """Advice matrix at one context, shape (N, K)."""
        return np.stack([e.advice_for(x) for e in self.experts], axis=0)

    def advice_tensor(self, xs: np.ndarray) -> np.ndarray:
        """Advice for a whole context sequence, shape (T, N, K)."""
        return np.stack([e.advice_batch(xs) for e in self.experts], axis=1)

    def achieved_distances(self) -> np.ndarray:
        return np.array([e.achieved_distance for e in self.experts], dtype=float)

    def snapshot(self) -> dict:
        """JSON-friendly summary (estimator state deliberately excluded)."""
        return {
            "kind": self.kind,
            "target_distance": self.target_distance,
            "targets": [float(e.target_distance) for e in self.experts],
            "achieved": [float(e.achieved_distance) for e in self.experts],
            "confidences": None if self.confidences is None else [float(c) for c in self.confidences],
        }


def panel_targets(kind: str, target_distance: float, n_experts: int) -> np.ndarray:
    """Per-expert target distances for the three panel layouts."""
    if not 0.0 <= target_distance <= 1.0:
        raise ValueError("target distance must lie in [0, 1]")
    if n_experts < 1:
        raise ValueError("n_experts must be >= 1")
    window = min(target_distance, 1.0 - target_distance)
    if kind == "homogeneous":
        return np.full(n_experts, target_distance)
    if kind == "heterogeneous":
        if n_experts == 1:
            return np.array([target_distance])
        return np.linspace(target_distance - window, target_distance + window, n_experts)
    if kind == "polarized":
        near = math.ceil(n_experts / 2)
        return np.array(
            [target_distance - window] * near + [target_distance + window] * (n_experts - near)
        )
    raise ValueError(f"unknown panel kind {kind!r}")


def make_panel(
    kind: str,
    target_distance: float,
    n_experts: int,
    truth: PerlinBandit,
    tol: float = 0.02,
    rng: np.random.Generator | None = None,
    trained_steps: int | None = None,
    backend: str = "regression",
    length_scale: float = 0.2,
    reg: float = 1.0,
    ucb_width: float = 1.0,
    distance_samples: int = 1024,
) -> ExpertPanel:
    """Calibrate a prior bandit per expert and train the experts on them."""
    rng = np.random.default_rng() if rng is None else rng
    if trained_steps is None:
        trained_steps = truth.n_arms * 100
    targets = panel_targets(kind, target_distance, n_experts)
    experts = []
    for target in targets:
        prior, achieved = perlin.calibrate_bias(truth, float(target), tol, rng, n_samples=distance_samples)
        experts.append(
            train_expert(
                prior,
                trained_steps,
                backend=backend,
                rng=rng,
                length_scale=length_scale,
                reg=reg,
                ucb_width=ucb_width,
                achieved_distance=achieved,
                target_distance=float(target),
            )
        )
    return ExpertPanel(experts, kind=kind, target_distance=target_distance)


def _greedy_truth_values(advice: np.ndarray, truth_values: np.ndarray) -> np.ndarray:
    """Expected truth reward of greedily following `advice` at each context.

    Ties among argmax arms contribute the mean of their truth values, i.e.
    the exact expectation of a uniform tie-break.
    """
    is_top = advice == advice.max(axis=1, keepdims=True)
    return (truth_values * is_top).sum(axis=1) / is_top.sum(axis=1)


def expert_expected_reward(
    expert,
    truth: PerlinBandit,
    n_samples: int = 1024,
    rng: np.random.Generator | None = None,
) -> float:
    """Mean truth value collected by the expert's greedy policy."""
    rng = np.random.default_rng() if rng is None else rng
    xs = perlin.sample_unit_contexts(n_samples, rng)
    truth_values = perlin.bandit_values(truth, xs)
    advice = expert.advice_batch(xs)
    return float(_greedy_truth_values(advice, truth_values).mean())


def hindsight_confidence(
    expert,
    truth: PerlinBandit,
    n_samples: int = 1024,
    rng: np.random.Generator | None = None,
) -> float:
    """Exponent-calibrated expected performance of the expert's greedy policy.

    The expert's expected reward is normalized between the per-context worst
    and best arms, then raised to the exponent that pins a uniform random
    policy at exactly 0.5.  The best policy maps to 1, the worst to 0.
    """
    rng = np.random.default_rng() if rng is None else rng
    xs = perlin.sample_unit_contexts(n_samples, rng)
    truth_values = perlin.bandit_values(truth, xs)
    advice = expert.advice_batch(xs)
    reward = float(_greedy_truth_values(advice, truth_values).sum())
    return confidence_from_rewards(
        reward,
        best=float(truth_values.max(axis=1).sum()),
        worst=float(truth_values.min(axis=1).sum()),
        uniform=float(truth_values.mean(axis=1).sum()),
    )


def confidence_from_rewards(reward: float, best: float, worst: float, uniform: float) -> float:
    """Normalize a cumulative reward into the exponent-calibrated confidence."""
    span = best - worst
    if span <= 0.0:
        raise ArithmeticError("degenerate reward bounds: best must exceed worst")
    base = (uniform - worst) / span
    if not 0.0 < base < 1.0:
        raise ArithmeticError("uniform-policy reward must lie strictly between the bounds")
    exponent = math.log(0.5) / math.log(base)
    ratio = min(max((reward - worst) / span, 0.0), 1.0)
    return ratio**exponent


def noisy_confidence(confidence: float, noise: float, rng: np.random.Generator) -> float:
    """One Beta-perturbed draw of a confidence value; noise 0 returns it unchanged."""
    if noise < 0.0:
        raise ValueError("noise must be >= 0")
    if noise == 0.0:
        return confidence
    return float(rng.beta(1.0 + confidence / noise, 1.0 + (1.0 - confidence) / noise))


def attach_hindsight_confidences(
    panel: ExpertPanel,
    truth: PerlinBandit,
    n_samples: int = 1024,
    rng: np.random.Generator | None = None,
) -> ExpertPanel:
    """Return the panel with per-expert hindsight confidences filled in."""
    confs = np.array(
        [hindsight_confidence(e, truth, n_samples, rng) for e in panel.experts]
    )
    return ExpertPanel(panel.experts, confidences=confs, kind=panel.kind, target_distance=panel.target_distance)


def top_fraction(
    panel: ExpertPanel,
    truth: PerlinBandit,
    fraction: float,
    n_samples: int = 1024,
    rng: np.random.Generator | None = None,
) -> ExpertPanel:
    """Keep the ceil(fraction * N) experts with the best hindsight reward.

    All experts are ranked on one shared context sample.
    """
    if not 0.0 < fraction <= 1.0:
        raise ValueError("fraction must lie in (0, 1]")
    keep = math.ceil(fraction * panel.n_experts)
    if keep < 1:
        raise ValueError("fraction keeps no experts")
    rng = np.random.default_rng() if rng is None else rng
    xs = perlin.sample_unit_contexts(n_samples, rng)
    truth_values = perlin.bandit_values(truth, xs)
    scores = np.array(
        [
            _greedy_truth_values(e.advice_batch(xs), truth_values).mean()
            for e in panel.experts
        ]
    )
    order = np.argsort(-scores, kind="stable")[:keep]
    kept_idx = np.sort(order)
    experts = [panel.experts[i] for i in kept_idx]
    confs = None if panel.confidences is None else panel.confidences[kept_idx]
    return ExpertPanel(experts, confidences=confs, kind=panel.kind, target_distance=panel.target_distance)
