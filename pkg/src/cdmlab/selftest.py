"""Fast invariant battery behind the `selftest` subcommand.

Runs the package's structural invariants on tiny instances (a few seconds
total) and prints one ok/FAIL line per check.  Returns the number of
failures so the CLI can exit nonzero.
"""

from __future__ import annotations

import numpy as np

from . import experts, harness, metrics, perlin, policies
from .config import ExperimentConfig
from .rngs import derive_rng

_TINY = ExperimentConfig(
    arms=3,
    experts=2,
    delta_grid=(0.25,),
    t_cdm=40,
    t_tr=30,
    runs=2,
    distance_samples=256,
    confidence_samples=256,
    master_seed=11,
)


def _check_bandit_shapes():
    rng = np.random.default_rng(0)
    b = perlin.sample_bandit(4, 5, rng)
    assert b.n_arms == 4 and b.grid_side == 5
    for g in b.arms:
        assert np.allclose(np.linalg.norm(g.vectors, axis=-1), 1.0, atol=1e-9)
    b2 = perlin.sample_bandit(4, 5, np.random.default_rng(0))
    assert all(np.array_equal(x.vectors, y.vectors) for x, y in zip(b.arms, b2.arms))


def _check_landscape_bounds():
    rng = np.random.default_rng(1)
    grid = perlin.sample_grid(5, rng)
    xs = perlin.sample_unit_contexts(512, rng)
    vals = perlin.grid_values(grid, xs)
    assert np.all(vals >= 0.0) and np.all(vals <= 1.0)
    assert abs(perlin.landscape_value(grid, np.array([0.25, 0.5])) - 0.5) < 1e-12


def _check_rotation():
    rng = np.random.default_rng(2)
    grid = perlin.sample_grid(5, rng)
    same = perlin.rotate_grid(grid, 0.0, 1.0 - 1e-12, rng)
    assert np.allclose(same.vectors, grid.vectors, atol=1e-6)
    flipped = perlin.rotate_grid(grid, np.pi, 1.0 - 1e-12, rng)
    assert np.allclose(flipped.vectors, -grid.vectors, atol=1e-6)
    noisy = perlin.rotate_grid(grid, 0.0, 0.5, rng)
    assert np.allclose(np.linalg.norm(noisy.vectors, axis=-1), 1.0, atol=1e-9)


def _check_inversion_distance():
    rng = np.random.default_rng(3)
    b = perlin.sample_bandit(3, 5, rng)
    assert all(
        np.array_equal(x.vectors, y.vectors)
        for x, y in zip(perlin.invert_bandit(perlin.invert_bandit(b)).arms, b.arms)
    )
    assert perlin.scaled_distance(b, b, 256, np.random.default_rng(4)) == 0.0
    d = perlin.scaled_distance(b, perlin.invert_bandit(b), 256, np.random.default_rng(4))
    assert abs(d - 1.0) < 1e-9


def _check_calibration():
    rng = np.random.default_rng(5)
    base = perlin.sample_bandit(3, 5, rng)
    for target in (0.0, 0.25, 0.75, 1.0):
        _, achieved = perlin.calibrate_bias(base, target, tol=0.02, rng=rng, n_samples=512)
        assert abs(achieved - target) <= 0.02


def _check_exp4p_distribution():
    rng = np.random.default_rng(6)
    policy = policies.Exp4pPolicy(4, 5, horizon=100, rng=rng)
    for _ in range(50):
        advice = rng.uniform(size=(4, 5))
        probs = policy.arm_probabilities(advice)
        assert np.all(probs >= 0.0) and abs(probs.sum() - 1.0) < 1e-9
        arm = int(rng.integers(5))
        policy.update(advice, None, arm, float(rng.integers(2)))
    w = policy.weights_snapshot()
    assert np.all(w >= 0.0) and abs(w.sum() - 1.0) < 1e-9


def _check_metamab_posteriors():
    rng = np.random.default_rng(7)
    policy = policies.MetaMabPolicy(3, rng=rng)
    advice = rng.uniform(size=(3, 4))
    for _ in range(30):
        arm = policy.select(advice)
        assert 0 <= arm < 4
        policy.update(advice, None, arm, float(rng.integers(2)))
    assert np.all(policy.alpha >= 1.0) and np.all(policy.beta >= 1.0)


def _check_linucb():
    rng = np.random.default_rng(8)
    policy = policies.MetaCmabPolicy(2, 3, rng=rng)
    for _ in range(200):
        advice = rng.uniform(size=(2, 3))
        arm = policy.select(advice)
        policy.update(advice, None, arm, float(rng.uniform()))
    eigvals = np.linalg.eigvalsh(policy.A)
    assert eigvals.min() >= 1.0 - 1e-9  # ridge floor survives the updates
    fresh = policies.MetaCmabPolicy(1, 2, rng=np.random.default_rng(9))
    fresh.A = np.eye(2)
    fresh.b = np.zeros(2)
    fresh.A += np.outer([1.0, 0.0], [1.0, 0.0])
    fresh.b += np.array([1.0, 0.0])
    assert np.allclose(fresh.theta(), [0.5, 0.0], atol=1e-12)


def _check_wmv():
    scores = policies.wmv_scores(
        np.array([[0.2, 0.8], [0.7, 0.3]]), np.array([0.9, 0.6])
    )
    assert np.allclose(scores, [0.723270, 1.879418], atol=1e-5)


def _check_episode_determinism():
    cfg = _TINY
    row_batches = [harness._sweep_cell((cfg, 0.25, 0, 0)) for _ in range(2)]
    assert row_batches[0] == row_batches[1]


def _check_metrics_identities():
    rng = np.random.default_rng(10)
    t = 50
    best = rng.uniform(0.6, 0.9, t)
    worst = best - rng.uniform(0.2, 0.4, t)
    mean = (best + worst) / 2
    record = metrics.RunRecord(
        rewards=rng.uniform(size=t),
        oracle_best=best,
        oracle_worst=worst,
        oracle_mean=mean,
        expert_rewards=rng.uniform(size=(2, t)),
        chosen_arms=np.zeros(t, dtype=int),
    )
    anytime = metrics.anytime_average(record.rewards, record)
    assert abs(anytime[-1] - metrics.scaled_cumulative_reward(record)) < 1e-9
    identity = metrics.regret_vs_best_expert(record) + metrics.cumulative_reward(record.rewards)
    assert abs(identity - record.expert_rewards.sum(axis=1).max()) < 1e-9


def _check_seed_streams():
    a = derive_rng(1, "policy", "wmv", 0, 0).uniform(size=8)
    b = derive_rng(1, "policy", "wmv", 0, 0).uniform(size=8)
    c = derive_rng(1, "policy", "wmv", 0, 1).uniform(size=8)
    assert np.array_equal(a, b)
    assert not np.array_equal(a, c)


def _check_confidence():
    rng = np.random.default_rng(12)
    truth = perlin.sample_bandit(3, 5, rng)
    prior, achieved = perlin.calibrate_bias(truth, 0.0, 0.02, rng, n_samples=512)
    expert = experts.train_expert(prior, 60, rng=rng, achieved_distance=achieved)
    c = experts.hindsight_confidence(expert, truth, 512, rng)
    assert 0.0 <= c <= 1.0
    assert experts.noisy_confidence(0.7, 0.0, rng) == 0.7


CHECKS = [
    ("bandit sampling shapes and determinism", _check_bandit_shapes),
    ("landscape bounds and lattice values", _check_landscape_bounds),
    ("rotation endpoints and unit norms", _check_rotation),
    ("inversion involution and distance anchors", _check_inversion_distance),
    ("distance calibration across targets", _check_calibration),
    ("exponential-weights probabilities are distributions", _check_exp4p_distribution),
    ("expert-sampler posteriors stay proper", _check_metamab_posteriors),
    ("linear-bandit state stays positive definite", _check_linucb),
    ("weighted vote hand-checked scores", _check_wmv),
    ("episode determinism under fixed seeds", _check_episode_determinism),
    ("reward accounting identities", _check_metrics_identities),
    ("seed stream derivation", _check_seed_streams),
    ("confidence bounds", _check_confidence),
]


def run_selftest(verbose: bool = True) -> int:
    failures = 0
    for name, check in CHECKS:
        try:
            check()
        except Exception as exc:  # pragma: no cover - failure path
            failures += 1
            if verbose:
                print(f"FAIL - {name}: {exc!r}")
        else:
            if verbose:
                print(f"ok - {name}")
    return failures
