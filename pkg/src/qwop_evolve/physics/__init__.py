"""Deterministic planar ragdoll standing in for the game's runner."""
from .config import WorldConfig, dump_world_config, load_world_config
from .runner import (
    LINKS,
    EpisodeResult,
    EpisodeStats,
    Outcome,
    RunnerState,
    Trace,
    check_termination,
    diagnostics,
    init_runner,
    run_episode,
    step,
)

__all__ = [
    "LINKS", "EpisodeResult", "EpisodeStats", "Outcome", "RunnerState", "Trace", "WorldConfig",
    "check_termination", "diagnostics", "dump_world_config", "init_runner", "load_world_config",
    "run_episode", "step",
]
