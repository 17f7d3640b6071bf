"""Polynomial-bonus UCT on deterministic MDPs, with the bandit engine, a
ball-averaging value learner and the search-plus-regression loop."""
from __future__ import annotations

from .bandit import (
    BernoulliArms,
    DeterministicArms,
    DriftingArms,
    UcbParams,
    UniformArms,
    bonus,
    run_bandit,
    run_bandit_replicas,
    select_arm,
)
from .cover import build_cover, fit
from .errors import ConfigError, ResourceError
from .mcts import mcts_target, run_mcts, run_mcts_batch, schedule_params
from .mdp import DeterministicMdp, make_benchmark, value_iteration
from .pipeline import PipelineConfig, run_pipeline

__all__ = [
    "BernoulliArms", "DeterministicArms", "DriftingArms", "UcbParams", "UniformArms",
    "bonus", "run_bandit", "run_bandit_replicas", "select_arm",
    "build_cover", "fit", "ConfigError", "ResourceError",
    "mcts_target", "run_mcts", "run_mcts_batch", "schedule_params",
    "DeterministicMdp", "make_benchmark", "value_iteration",
    "PipelineConfig", "run_pipeline",
]
