"""Episode orchestration and experiment recipes.

Each (delta, run) cell owns a freshly sampled truth bandit, a calibrated and
trained expert panel, a context sequence, and a (t, arm)-keyed Bernoulli
noise table.  Every algorithm in the cell consumes identical copies of all
of these, so per-cell comparisons are paired.  All randomness is drawn from
streams derived from (master_seed, role, ...identifiers); see rngs.py.
Cells are embarrassingly parallel and results are merged in task order, so
the worker count never changes output bytes.
"""

from __future__ import annotations

import csv
import multiprocessing
from dataclasses import dataclass, fields

import numpy as np

from . import experts, metrics, perlin, policies
from .config import ExperimentConfig
from .metrics import RunRecord
from .rngs import derive_rng

AUGMENTED_ALGORITHMS = frozenset({"exp4p", "metamab"})


# --- cell construction -------------------------------------------------------


@dataclass
class CellData:
    """Everything one (delta, run) cell shares across algorithms."""

    truth: perlin.PerlinBandit
    panel: experts.ExpertPanel
    contexts: np.ndarray  # (T, 2)
    truth_values: np.ndarray  # (T, K)
    advice: np.ndarray  # (T, N, K)
    reward_noise: np.ndarray  # (T, K) uniforms; reward = noise < value
    oracle_best: np.ndarray  # (T,)
    oracle_worst: np.ndarray
    oracle_mean: np.ndarray
    expert_series: np.ndarray  # (N, T) expected greedy reward per expert
    confidence_steps: np.ndarray | None  # (T, N) per-step confidences or None


def _greedy_series(advice: np.ndarray, truth_values: np.ndarray) -> np.ndarray:
    """Expected greedy reward series per expert, shape (N, T); argmax ties
    contribute the mean truth value of the tied arms."""
    is_top = advice == advice.max(axis=2, keepdims=True)
    return ((truth_values[:, None, :] * is_top).sum(axis=2) / is_top.sum(axis=2)).T


def build_cell(
    cfg: ExperimentConfig,
    delta: float,
    delta_idx: int,
    run_idx: int,
    panel: experts.ExpertPanel | None = None,
) -> CellData:
    seed = cfg.master_seed
    truth = perlin.sample_bandit(cfg.arms, cfg.grid_side, derive_rng(seed, "truth", delta_idx, run_idx))
    noise = cfg.confidence_noise()
    if panel is None:
        panel = experts.make_panel(
            cfg.expert_config,
            delta,
            cfg.experts,
            truth,
            tol=cfg.calibration_tol,
            rng=derive_rng(seed, "panel", delta_idx, run_idx),
            trained_steps=cfg.trained_steps,
            backend=cfg.train_backend,
            length_scale=cfg.kernel_length_scale,
            reg=cfg.kernel_reg,
            ucb_width=cfg.ucb_eta,
            distance_samples=cfg.distance_samples,
        )
        if noise is not None:
            panel = experts.attach_hindsight_confidences(
                panel, truth, cfg.confidence_samples, derive_rng(seed, "confidence", delta_idx, run_idx)
            )

    contexts = perlin.sample_unit_contexts(cfg.t_cdm, derive_rng(seed, "contexts", delta_idx, run_idx))
    truth_values = perlin.bandit_values(truth, contexts)
    advice = panel.advice_tensor(contexts)
    reward_noise = derive_rng(seed, "rewards", delta_idx, run_idx).uniform(size=(cfg.t_cdm, cfg.arms))

    confidence_steps = None
    if noise is not None:
        base = panel.confidences
        if base is None:
            raise ValueError("confidence mode requires panel confidences")
        if noise == 0.0:
            confidence_steps = np.tile(base, (cfg.t_cdm, 1))
        else:
            rng = derive_rng(seed, "confnoise", delta_idx, run_idx)
            confidence_steps = rng.beta(
                1.0 + base / noise, 1.0 + (1.0 - base) / noise, size=(cfg.t_cdm, panel.n_experts)
            )

    return CellData(
        truth=truth,
        panel=panel,
        contexts=contexts,
        truth_values=truth_values,
        advice=advice,
        reward_noise=reward_noise,
        oracle_best=truth_values.max(axis=1),
        oracle_worst=truth_values.min(axis=1),
        oracle_mean=truth_values.mean(axis=1),
        expert_series=_greedy_series(advice, truth_values),
        confidence_steps=confidence_steps,
    )


def make_policy(name: str, cfg: ExperimentConfig, n_experts: int, n_arms: int, rng: np.random.Generator):
    """Construct a policy with episode constants; n_experts must already
    include the synthetic random expert for exp4p and metamab."""
    if name == "wmv":
        return policies.WmvPolicy(rng)
    if name == "random":
        return policies.RandomPolicy(n_arms, rng)
    if name == "exp4p":
        return policies.Exp4pPolicy(
            n_experts, n_arms, cfg.t_cdm, delta=cfg.exp4p_delta, prior_strength=cfg.prior_strength, rng=rng
        )
    if name == "metamab":
        return policies.MetaMabPolicy(n_experts, prior_strength=cfg.prior_strength, rng=rng)
    if name == "metacmab":
        return policies.MetaCmabPolicy(
            n_experts,
            n_arms,
            use_confidence=cfg.confidence_noise() is not None,
            ridge=cfg.ridge_lambda,
            explore=cfg.alpha_ucb,
            rng=rng,
        )
    raise ValueError(f"unknown algorithm {name!r}")


def run_policy_on_cell(
    cell: CellData,
    algorithm: str,
    cfg: ExperimentConfig,
    policy_rng: np.random.Generator,
    random_expert_rng: np.random.Generator,
) -> RunRecord:
    """One episode of `algorithm` over the cell's shared context sequence."""
    t_cdm = cfg.t_cdm
    n_arms = cell.panel.n_arms
    n_real = cell.panel.n_experts
    augmented = algorithm in AUGMENTED_ALGORITHMS
    n_policy_experts = n_real + 1 if augmented else n_real
    policy = make_policy(algorithm, cfg, n_policy_experts, n_arms, policy_rng)

    random_rows = random_expert_rng.uniform(size=(t_cdm, n_arms)) if augmented else None

    rewards = np.empty(t_cdm)
    chosen = np.empty(t_cdm, dtype=int)
    for t in range(t_cdm):
        advice = cell.advice[t]
        conf = None if cell.confidence_steps is None else cell.confidence_steps[t]
        if augmented:
            advice = np.vstack([advice, random_rows[t][None, :]])
            if conf is not None:
                conf = np.append(conf, 0.5)
        arm = policy.select(advice, conf)
        reward = 1.0 if cell.reward_noise[t, arm] < cell.truth_values[t, arm] else 0.0
        policy.update(advice, conf, arm, reward)
        rewards[t] = reward
        chosen[t] = arm

    return RunRecord(
        rewards=rewards,
        oracle_best=cell.oracle_best,
        oracle_worst=cell.oracle_worst,
        oracle_mean=cell.oracle_mean,
        expert_rewards=cell.expert_series,
        chosen_arms=chosen,
        final_weights=policy.weights_snapshot(),
    )


def run_episode(
    truth: perlin.PerlinBandit,
    panel: experts.ExpertPanel,
    algorithm: str,
    cfg: ExperimentConfig,
    rng: np.random.Generator,
) -> RunRecord:
    """Self-contained episode for a prebuilt truth/panel pair.

    Spawns context, reward, policy, random-expert and confidence streams
    from `rng`; the sweep recipes use derived per-cell streams instead.
    """
    ctx_rng, noise_rng, policy_rng, aug_rng, conf_rng = rng.spawn(5)
    noise = cfg.confidence_noise()
    if noise is not None and panel.confidences is None:
        panel = experts.attach_hindsight_confidences(panel, truth, cfg.confidence_samples, conf_rng)

    contexts = perlin.sample_unit_contexts(cfg.t_cdm, ctx_rng)
    truth_values = perlin.bandit_values(truth, contexts)
    advice = panel.advice_tensor(contexts)
    confidence_steps = None
    if noise is not None:
        base = panel.confidences
        if noise == 0.0:
            confidence_steps = np.tile(base, (cfg.t_cdm, 1))
        else:
            confidence_steps = conf_rng.beta(
                1.0 + base / noise, 1.0 + (1.0 - base) / noise, size=(cfg.t_cdm, panel.n_experts)
            )
    cell = CellData(
        truth=truth,
        panel=panel,
        contexts=contexts,
        truth_values=truth_values,
        advice=advice,
        reward_noise=noise_rng.uniform(size=(cfg.t_cdm, cfg.arms)),
        oracle_best=truth_values.max(axis=1),
        oracle_worst=truth_values.min(axis=1),
        oracle_mean=truth_values.mean(axis=1),
        expert_series=_greedy_series(advice, truth_values),
        confidence_steps=confidence_steps,
    )
    return run_policy_on_cell(cell, algorithm, cfg, policy_rng, aug_rng)


# --- result containers --------------------------------------------------------


def _format_value(value) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return repr(value)
    return str(value)


def write_rows_csv(path, header: list[str], rows) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for row in rows:
            writer.writerow([_format_value(v) for v in row])


@dataclass
class SweepRow:
    algorithm: str
    config_kind: str
    arms: int
    experts: int
    delta: float
    run: int
    scaled_reward: float
    best_expert: float
    worst_expert: float
    mean_expert: float
    random_baseline: float
    crossover_step: int | None


SWEEP_HEADER = [f.name for f in fields(SweepRow)]


@dataclass
class SweepResult:
    rows: list[SweepRow]
    config: ExperimentConfig

    def values(self, algorithm: str, delta: float | None = None, field: str = "scaled_reward") -> np.ndarray:
        out = [
            getattr(r, field)
            for r in self.rows
            if r.algorithm == algorithm and (delta is None or r.delta == delta)
        ]
        return np.array(out, dtype=float)

    def mean(self, algorithm: str, delta: float, field: str = "scaled_reward") -> float:
        return float(self.values(algorithm, delta, field).mean())

    def std(self, algorithm: str, delta: float, field: str = "scaled_reward") -> float:
        return float(self.values(algorithm, delta, field).std())

    def write_csv(self, path) -> None:
        write_rows_csv(path, SWEEP_HEADER, (_row_tuple(r) for r in self.rows))


def _row_tuple(row) -> tuple:
    return tuple(getattr(row, f.name) for f in fields(row))


def _cell_rows(cell: CellData, cfg: ExperimentConfig, delta: float, delta_idx: int, run_idx: int) -> list[SweepRow]:
    rows = []
    for algorithm in cfg.algorithms:
        record = run_policy_on_cell(
            cell,
            algorithm,
            cfg,
            derive_rng(cfg.master_seed, "policy", algorithm, delta_idx, run_idx),
            derive_rng(cfg.master_seed, "randomexpert", algorithm, delta_idx, run_idx),
        )
        expert_totals = metrics.expert_scaled_totals(record)
        best_idx = int(np.argmax(record.expert_rewards.sum(axis=1)))
        algo_anytime = metrics.anytime_average(record.rewards, record)
        best_anytime = metrics.anytime_average(record.expert_rewards[best_idx], record)
        rows.append(
            SweepRow(
                algorithm=algorithm,
                config_kind=cfg.expert_config,
                arms=cfg.arms,
                experts=cell.panel.n_experts,
                delta=delta,
                run=run_idx,
                scaled_reward=metrics.scaled_cumulative_reward(record),
                best_expert=float(expert_totals.max()),
                worst_expert=float(expert_totals.min()),
                mean_expert=float(expert_totals.mean()),
                random_baseline=metrics.random_baseline(record),
                crossover_step=metrics.crossover_step(algo_anytime, best_anytime),
            )
        )
    return rows


def _sweep_cell(args) -> list[SweepRow]:
    cfg, delta, delta_idx, run_idx = args
    cell = build_cell(cfg, delta, delta_idx, run_idx)
    return _cell_rows(cell, cfg, delta, delta_idx, run_idx)


def _map_tasks(fn, tasks, jobs: int) -> list:
    if jobs <= 1 or len(tasks) <= 1:
        return [fn(t) for t in tasks]
    ctx = multiprocessing.get_context("fork")
    with ctx.Pool(min(jobs, len(tasks))) as pool:
        return pool.map(fn, tasks, chunksize=1)


def run_sweep(cfg: ExperimentConfig, jobs: int = 1) -> SweepResult:
    """Paired distance sweep: every algorithm sees identical cells."""
    tasks = [
        (cfg, delta, delta_idx, run_idx)
        for delta_idx, delta in enumerate(cfg.delta_grid)
        for run_idx in range(cfg.runs)
    ]
    per_cell = _map_tasks(_sweep_cell, tasks, jobs)
    rows = [row for cell_rows in per_cell for row in cell_rows]
    return SweepResult(rows, cfg)


# --- ablation ------------------------------------------------------------------


def _ablation_cell(args) -> tuple[list[SweepRow], list[SweepRow]]:
    cfg, fraction, delta, delta_idx, run_idx = args
    cell_full = build_cell(cfg, delta, delta_idx, run_idx)
    top_panel = experts.top_fraction(
        cell_full.panel,
        cell_full.truth,
        fraction,
        n_samples=cfg.confidence_samples,
        rng=derive_rng(cfg.master_seed, "experteval", delta_idx, run_idx),
    )
    cell_top = build_cell(cfg, delta, delta_idx, run_idx, panel=top_panel)
    return (
        _cell_rows(cell_full, cfg, delta, delta_idx, run_idx),
        _cell_rows(cell_top, cfg, delta, delta_idx, run_idx),
    )


def run_ablation(cfg: ExperimentConfig, fraction: float = 0.5, jobs: int = 1) -> tuple[SweepResult, SweepResult]:
    """Run every cell twice with identical seeds: full panel and top fraction."""
    tasks = [
        (cfg, fraction, delta, delta_idx, run_idx)
        for delta_idx, delta in enumerate(cfg.delta_grid)
        for run_idx in range(cfg.runs)
    ]
    pairs = _map_tasks(_ablation_cell, tasks, jobs)
    full_rows = [row for full, _ in pairs for row in full]
    top_rows = [row for _, top in pairs for row in top]
    return SweepResult(full_rows, cfg), SweepResult(top_rows, cfg)


ABLATION_HEADER = ["variant"] + SWEEP_HEADER


def write_ablation_csv(path, full: SweepResult, top: SweepResult, fraction: float) -> None:
    top_label = f"top{int(round(fraction * 100))}"
    rows = [("full",) + _row_tuple(r) for r in full.rows]
    rows += [(top_label,) + _row_tuple(r) for r in top.rows]
    write_rows_csv(path, ABLATION_HEADER, rows)


# --- anytime curves --------------------------------------------------------------


@dataclass
class AnytimeResult:
    """Per-timestep scaled average reward; series are (runs, T) arrays keyed
    by algorithm name plus the pseudo-series best_expert, worst_expert and
    random_baseline."""

    series: dict[str, np.ndarray]
    crossovers: dict[str, list[int | None]]
    delta: float
    config: ExperimentConfig

    def mean_series(self, name: str) -> np.ndarray:
        return self.series[name].mean(axis=0)

    def std_series(self, name: str) -> np.ndarray:
        return self.series[name].std(axis=0)

    def write_csv(self, path) -> None:
        names = sorted(self.series)
        rows = []
        for name in names:
            mean = self.mean_series(name)
            std = self.std_series(name)
            for t in range(len(mean)):
                rows.append((name, t, float(mean[t]), float(std[t])))
        write_rows_csv(path, ["algorithm", "t", "mean", "std"], rows)

    def write_crossovers_csv(self, path) -> None:
        rows = []
        for name in sorted(self.crossovers):
            for run_idx, step in enumerate(self.crossovers[name]):
                rows.append((name, run_idx, step))
        write_rows_csv(path, ["algorithm", "run", "crossover_step"], rows)


def _anytime_cell(args):
    cfg, delta, delta_idx, run_idx = args
    cell = build_cell(cfg, delta, delta_idx, run_idx)
    out: dict[str, np.ndarray] = {}
    crossovers: dict[str, int | None] = {}
    best_idx = None
    best_series = None
    for algorithm in cfg.algorithms:
        record = run_policy_on_cell(
            cell,
            algorithm,
            cfg,
            derive_rng(cfg.master_seed, "policy", algorithm, delta_idx, run_idx),
            derive_rng(cfg.master_seed, "randomexpert", algorithm, delta_idx, run_idx),
        )
        if best_idx is None:
            totals = record.expert_rewards.sum(axis=1)
            best_idx = int(np.argmax(totals))
            worst_idx = int(np.argmin(totals))
            best_series = metrics.anytime_average(record.expert_rewards[best_idx], record)
            out["best_expert"] = best_series
            out["worst_expert"] = metrics.anytime_average(record.expert_rewards[worst_idx], record)
            out["random_baseline"] = metrics.anytime_average(record.oracle_mean, record)
        algo_series = metrics.anytime_average(record.rewards, record)
        out[algorithm] = algo_series
        crossovers[algorithm] = metrics.crossover_step(algo_series, best_series)
    return out, crossovers


def run_anytime(cfg: ExperimentConfig, delta: float = 0.5, jobs: int = 1) -> AnytimeResult:
    """Anytime curves for one distance; one cell per run, all runs stacked."""
    delta_idx = list(cfg.delta_grid).index(delta) if delta in cfg.delta_grid else 0
    tasks = [(cfg, delta, delta_idx, run_idx) for run_idx in range(cfg.runs)]
    results = _map_tasks(_anytime_cell, tasks, jobs)
    names = list(results[0][0])
    series = {name: np.stack([r[0][name] for r in results]) for name in names}
    crossovers = {name: [r[1][name] for r in results] for name in results[0][1]}
    return AnytimeResult(series=series, crossovers=crossovers, delta=delta, config=cfg)


# --- weight analysis ---------------------------------------------------------------


@dataclass
class WeightRow:
    run: int
    expert: int
    expected_reward: float
    metacmab_weight: float
    exp4p_weight: float
    is_best: bool


WEIGHTS_HEADER = [f.name for f in fields(WeightRow)]


@dataclass
class WeightResult:
    rows: list[WeightRow]
    config: ExperimentConfig

    def column(self, field: str) -> np.ndarray:
        return np.array([getattr(r, field) for r in self.rows], dtype=float)

    def write_csv(self, path) -> None:
        write_rows_csv(path, WEIGHTS_HEADER, (_row_tuple(r) for r in self.rows))


def _weights_cell(args) -> list[WeightRow]:
    cfg, delta, run_idx = args
    cell = build_cell(cfg, delta, 0, run_idx)
    records = {}
    for algorithm in ("metacmab", "exp4p"):
        records[algorithm] = run_policy_on_cell(
            cell,
            algorithm,
            cfg,
            derive_rng(cfg.master_seed, "policy", algorithm, 0, run_idx),
            derive_rng(cfg.master_seed, "randomexpert", algorithm, 0, run_idx),
        )
    expert_totals = metrics.expert_scaled_totals(records["metacmab"])
    best = int(np.argmax(expert_totals))
    cmab_weights = records["metacmab"].final_weights
    exp4p_weights = records["exp4p"].final_weights
    return [
        WeightRow(
            run=run_idx,
            expert=n,
            expected_reward=float(expert_totals[n]),
            metacmab_weight=float(cmab_weights[n]),
            exp4p_weight=float(exp4p_weights[n]),
            is_best=n == best,
        )
        for n in range(cell.panel.n_experts)
    ]


def run_weight_analysis(cfg: ExperimentConfig, delta: float = 0.5, jobs: int = 1) -> WeightResult:
    """Final policy weights vs hindsight expert performance, one row per
    (run, expert)."""
    tasks = [(cfg, delta, run_idx) for run_idx in range(cfg.runs)]
    per_run = _map_tasks(_weights_cell, tasks, jobs)
    rows = [row for cell_rows in per_run for row in cell_rows]
    return WeightResult(rows, cfg)


# --- distance vs correlation ----------------------------------------------------------


@dataclass
class PccRow:
    kind: str  # random | self | inverse
    pair: int
    scaled_distance: float
    pcc: float


PCC_HEADER = [f.name for f in fields(PccRow)]


@dataclass
class PccResult:
    rows: list[PccRow]
    config: ExperimentConfig

    def random_pairs(self) -> tuple[np.ndarray, np.ndarray]:
        rows = [r for r in self.rows if r.kind == "random"]
        return (
            np.array([r.scaled_distance for r in rows]),
            np.array([r.pcc for r in rows]),
        )

    def write_csv(self, path) -> None:
        write_rows_csv(path, PCC_HEADER, (_row_tuple(r) for r in self.rows))


def _pcc_pair(args) -> PccRow:
    cfg, pair_idx = args
    rng = derive_rng(cfg.master_seed, "pccpair", pair_idx)
    a = perlin.sample_bandit(cfg.arms, cfg.grid_side, rng)
    b = perlin.sample_bandit(cfg.arms, cfg.grid_side, rng)
    xs = perlin.sample_unit_contexts(cfg.distance_samples, rng)
    va = perlin.bandit_values(a, xs)
    vb = perlin.bandit_values(b, xs)
    v_inv = perlin.bandit_values(perlin.invert_bandit(a), xs)
    d_hat = float(np.mean((va - vb) ** 2) / np.mean((va - v_inv) ** 2))
    pcc = metrics.pearson_cc(va.ravel(), vb.ravel())
    return PccRow(kind="random", pair=pair_idx, scaled_distance=d_hat, pcc=pcc)


def run_distance_pcc(cfg: ExperimentConfig, pairs: int = 500, jobs: int = 1) -> PccResult:
    """Scaled distance vs pooled value correlation for random bandit pairs,
    plus exact self and inverse anchor pairs."""
    anchor_rng = derive_rng(cfg.master_seed, "pccanchor")
    anchor = perlin.sample_bandit(cfg.arms, cfg.grid_side, anchor_rng)
    xs = perlin.sample_unit_contexts(cfg.distance_samples, anchor_rng)
    va = perlin.bandit_values(anchor, xs)
    v_inv = perlin.bandit_values(perlin.invert_bandit(anchor), xs)
    denom = float(np.mean((va - v_inv) ** 2))
    rows = [
        PccRow("self", -1, 0.0, metrics.pearson_cc(va.ravel(), va.ravel())),
        PccRow("inverse", -2, float(np.mean((va - v_inv) ** 2) / denom), metrics.pearson_cc(va.ravel(), v_inv.ravel())),
    ]
    tasks = [(cfg, i) for i in range(pairs)]
    rows += _map_tasks(_pcc_pair, tasks, jobs)
    return PccResult(rows, cfg)
