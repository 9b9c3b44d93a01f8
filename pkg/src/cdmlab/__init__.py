"""Collective decision-making lab: Perlin contextual bandits, biased expert
panels, advice-aggregation policies, and reproducible experiment recipes."""

from .config import ExperimentConfig
from .harness import run_ablation, run_anytime, run_distance_pcc, run_episode, run_sweep, run_weight_analysis
from .rngs import derive_rng

__all__ = [
    "ExperimentConfig",
    "derive_rng",
    "run_ablation",
    "run_anytime",
    "run_distance_pcc",
    "run_episode",
    "run_sweep",
    "run_weight_analysis",
]
