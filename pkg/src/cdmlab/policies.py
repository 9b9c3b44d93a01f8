"""Advice-aggregation policies behind one small interface.

Every policy implements select(advice, confidence) -> arm,
update(advice, confidence, arm, reward), and weights_snapshot().
Advice is an (N, K) matrix of per-expert per-arm value estimates in [0, 1];
confidence, when present, is a length-N vector.

Convention: for the exponential-weights and expert-as-arm policies the
caller appends one synthetic random expert as the LAST advice row (with
confidence 0.5); weights_snapshot always reports the real experts only.
"""

from __future__ import annotations

import math

import numpy as np

CONFIDENCE_CLAMP = 1e-6


def argmax_uniform_tie(values: np.ndarray, rng: np.random.Generator) -> int:
    """Index of the maximum, ties broken uniformly at random."""
    values = np.asarray(values)
    top = np.flatnonzero(values == values.max())
    return int(top[0]) if len(top) == 1 else int(rng.choice(top))


def rows_to_distributions(advice: np.ndarray) -> np.ndarray:
    """Normalize each expert's advice row into a distribution over arms."""
    advice = np.asarray(advice, dtype=float)
    sums = advice.sum(axis=1, keepdims=True)
    n_arms = advice.shape[1]
    uniform = np.full_like(advice, 1.0 / n_arms)
    with np.errstate(invalid="ignore", divide="ignore"):
        normalized = advice / sums
    return np.where(sums > 0.0, normalized, uniform)


def _softmax(logits: np.ndarray, axis: int = 0) -> np.ndarray:
    z = logits - logits.max(axis=axis, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=axis, keepdims=True)


# --- weighted majority vote ------------------------------------------------


def wmv_scores(advice: np.ndarray, confidence: np.ndarray | None) -> np.ndarray:
    """Per-arm scores: advice weighted by the log-odds of each confidence.

    Without confidences every expert gets weight 1, i.e. a plain value vote.
    """
    advice = np.asarray(advice, dtype=float)
    if confidence is None:
        weights = np.ones(advice.shape[0])
    else:
        c = np.clip(np.asarray(confidence, dtype=float), CONFIDENCE_CLAMP, 1.0 - CONFIDENCE_CLAMP)
        weights = np.log(c / (1.0 - c))
    return weights @ advice


class WmvPolicy:
    """Stateless confidence-weighted value vote."""

    def __init__(self, rng: np.random.Generator):
        self._rng = rng

    def select(self, advice: np.ndarray, confidence: np.ndarray | None = None) -> int:
        return argmax_uniform_tie(wmv_scores(advice, confidence), self._rng)

    def update(self, advice, confidence, arm: int, reward: float) -> None:
        pass

    def weights_snapshot(self) -> np.ndarray | None:
        return None


# --- random baseline --------------------------------------------------------


def random_policy_select(n_arms: int, rng: np.random.Generator) -> int:
    return int(rng.integers(n_arms))


class RandomPolicy:
    def __init__(self, n_arms: int, rng: np.random.Generator):
        self.n_arms = n_arms
        self._rng = rng

    def select(self, advice=None, confidence=None) -> int:
        return random_policy_select(self.n_arms, self._rng)

    def update(self, advice, confidence, arm: int, reward: float) -> None:
        pass

    def weights_snapshot(self) -> np.ndarray | None:
        return None


# --- exponential weights ----------------------------------------------------


def exp4p_probabilities(
    weights: np.ndarray,
    advice_dist: np.ndarray,
    confidence: np.ndarray | None,
    gamma: float,
    prior_strength: float,
) -> np.ndarray:
    """Per-arm probabilities: confidence-softmaxed expert mixture of advice.

    advice_dist rows must already be distributions over arms.  The result is
    renormalized so it always sums to exactly 1.
    """
    if confidence is None:
        mix = _softmax(weights)  # (N,)
        probs = mix @ advice_dist
    else:
        c = np.asarray(confidence, dtype=float)[:, None]
        logits = weights[:, None] + 0.5 * gamma * prior_strength * c  # (N, K)
        mix = _softmax(logits, axis=0)
        probs = (mix * advice_dist).sum(axis=0)
    if not np.all(np.isfinite(probs)):
        raise ArithmeticError("non-finite arm probabilities")
    return probs / probs.sum()


def exp4p_weight_update(
    weights: np.ndarray,
    advice_dist: np.ndarray,
    probs: np.ndarray,
    arm: int,
    reward: float,
    gamma: float,
    exploration_bonus: float,
) -> np.ndarray:
    """One exponential-weights update; returns the new weight vector."""
    if probs[arm] <= 0.0:
        raise ArithmeticError("chosen arm has zero probability")
    y_hat = advice_dist[:, arm] * reward / probs[arm]
    v_hat = (advice_dist / probs[None, :]).sum(axis=1)
    return weights + 0.5 * gamma * (y_hat + v_hat * exploration_bonus)


class Exp4pPolicy:
    """Exponential weights with optional confidence priors.

    n_experts counts the appended random expert.  The learning rate and
    exploration bonus are fixed from (N, K, horizon, delta) at construction.
    """

    def __init__(
        self,
        n_experts: int,
        n_arms: int,
        horizon: int,
        delta: float = 0.1,
        prior_strength: float = 100.0,
        rng: np.random.Generator | None = None,
    ):
        if horizon < 1:
            raise ValueError("horizon must be >= 1")
        self.n_experts = n_experts
        self.n_arms = n_arms
        self.gamma = math.sqrt(math.log(n_experts) / (n_arms * horizon))
        self.exploration_bonus = math.sqrt(math.log(n_experts / delta) / (n_arms * horizon))
        self.prior_strength = prior_strength
        self.weights = np.ones(n_experts)
        self._rng = np.random.default_rng() if rng is None else rng
        self._last: tuple[np.ndarray, np.ndarray] | None = None

    def arm_probabilities(self, advice: np.ndarray, confidence: np.ndarray | None = None) -> np.ndarray:
        advice_dist = rows_to_distributions(advice)
        probs = exp4p_probabilities(self.weights, advice_dist, confidence, self.gamma, self.prior_strength)
        self._last = (advice_dist, probs)
        return probs

    def select(self, advice: np.ndarray, confidence: np.ndarray | None = None) -> int:
        probs = self.arm_probabilities(advice, confidence)
        return int(self._rng.choice(self.n_arms, p=probs))

    def update(self, advice, confidence, arm: int, reward: float) -> None:
        if self._last is None:
            raise RuntimeError("update called before select")
        advice_dist, probs = self._last
        self.weights = exp4p_weight_update(
            self.weights, advice_dist, probs, arm, reward, self.gamma, self.exploration_bonus
        )

    def weights_snapshot(self) -> np.ndarray:
        """Softmax weights over the real experts (random expert excluded), sum 1."""
        return _softmax(self.weights[:-1])


# --- expert-as-arm Thompson sampling ----------------------------------------


class MetaMabPolicy:
    """Beta-Bernoulli Thompson sampling over experts; follows the sampled best.

    n_experts counts the appended random expert.  Confidences, when present,
    enter only the sampling step as pseudo-counts of strength prior_strength.
    """

    def __init__(
        self,
        n_experts: int,
        prior_strength: float = 100.0,
        rng: np.random.Generator | None = None,
    ):
        self.n_experts = n_experts
        self.prior_strength = prior_strength
        self.alpha = np.ones(n_experts)
        self.beta = np.ones(n_experts)
        self._rng = np.random.default_rng() if rng is None else rng
        self._last_expert: int | None = None

    def select(self, advice: np.ndarray, confidence: np.ndarray | None = None) -> int:
        a = self.alpha.copy()
        b = self.beta.copy()
        if confidence is not None:
            c = np.asarray(confidence, dtype=float)
            a = a + self.prior_strength * c
            b = b + self.prior_strength * (1.0 - c)
        theta = self._rng.beta(a, b)
        expert = argmax_uniform_tie(theta, self._rng)
        self._last_expert = expert
        return argmax_uniform_tie(advice[expert], self._rng)

    def update(self, advice, confidence, arm: int, reward: float) -> None:
        if self._last_expert is None:
            raise RuntimeError("update called before select")
        self.alpha[self._last_expert] += reward
        self.beta[self._last_expert] += 1.0 - reward

    def weights_snapshot(self) -> np.ndarray:
        """Posterior mean reward per real expert (random expert excluded)."""
        means = self.alpha / (self.alpha + self.beta)
        return means[:-1]


# --- advice-as-context linear bandit -----------------------------------------


def build_meta_context(advice_column: np.ndarray, confidence_column: np.ndarray | None = None) -> np.ndarray:
    """Feature vector for one arm: expert advice (interleaved with confidence
    when present) plus a trailing intercept feature of 1."""
    advice_column = np.asarray(advice_column, dtype=float)
    n = len(advice_column)
    if confidence_column is None:
        return np.append(advice_column, 1.0)
    confidence_column = np.asarray(confidence_column, dtype=float)
    out = np.empty(2 * n + 1)
    out[0:-1:2] = advice_column
    out[1:-1:2] = confidence_column
    out[-1] = 1.0
    return out


class MetaCmabPolicy:
    """Ridge linear bandit on meta-contexts built from the advice matrix."""

    def __init__(
        self,
        n_experts: int,
        n_arms: int,
        use_confidence: bool = False,
        ridge: float = 1.0,
        explore: float = 1.0,
        rng: np.random.Generator | None = None,
    ):
        if ridge <= 0.0:
            raise ValueError("ridge must be positive")
        self.n_experts = n_experts
        self.n_arms = n_arms
        self.use_confidence = use_confidence
        self.dim = (2 * n_experts if use_confidence else n_experts) + 1
        self.explore = explore
        self.A = ridge * np.eye(self.dim)
        self.b = np.zeros(self.dim)
        self._rng = np.random.default_rng() if rng is None else rng
        self._last_contexts: np.ndarray | None = None

    def meta_contexts(self, advice: np.ndarray, confidence: np.ndarray | None = None) -> np.ndarray:
        """Stack of per-arm meta-contexts, shape (K, dim)."""
        conf = confidence if self.use_confidence else None
        cols = []
        for k in range(advice.shape[1]):
            cols.append(build_meta_context(advice[:, k], conf))
        return np.asarray(cols)

    def theta(self) -> np.ndarray:
        return np.linalg.solve(self.A, self.b)

    def scores(self, contexts: np.ndarray) -> np.ndarray:
        """Optimism-adjusted value estimates for a stack of meta-contexts."""
        solved = np.linalg.solve(self.A, np.concatenate([self.b[:, None], contexts.T], axis=1))
        theta = solved[:, 0]
        widths = np.sqrt(np.einsum("kd,dk->k", contexts, solved[:, 1:]))
        return contexts @ theta + self.explore * widths

    def select(self, advice: np.ndarray, confidence: np.ndarray | None = None) -> int:
        contexts = self.meta_contexts(advice, confidence)
        self._last_contexts = contexts
        return argmax_uniform_tie(self.scores(contexts), self._rng)

    def update(self, advice, confidence, arm: int, reward: float) -> None:
        if self._last_contexts is None:
            contexts = self.meta_contexts(np.asarray(advice), confidence)
        else:
            contexts = self._last_contexts
        y = contexts[arm]
        self.A += np.outer(y, y)
        self.b += reward * y

    def advice_feature_indices(self) -> np.ndarray:
        if self.use_confidence:
            return np.arange(0, 2 * self.n_experts, 2)
        return np.arange(self.n_experts)

    def weights_snapshot(self) -> np.ndarray:
        """Model weights on the advice features, normalized by total magnitude."""
        theta = self.theta()[self.advice_feature_indices()]
        total = np.abs(theta).sum()
        return theta / total if total > 0.0 else theta
