"""Policy evaluation, dataset generation and the command line."""

from .env import EpisodeResult, Metrics, run_episode
from .policies import (ACTION_DIM, OracleEndpoint, Policy, ProtocolError, RandomPolicy,
                       SubprocessPolicy, ZeroPolicy, make_policy)
from .runner import (GenerationReport, episode_dir, evaluate, find_episodes, generate,
                     parse_seeds, resolve_tasks, stats)

__all__ = [
    "EpisodeResult", "Metrics", "run_episode", "ACTION_DIM", "OracleEndpoint", "Policy",
    "ProtocolError", "RandomPolicy", "SubprocessPolicy", "ZeroPolicy", "make_policy",
    "GenerationReport", "episode_dir", "evaluate", "find_episodes", "generate", "parse_seeds",
    "resolve_tasks", "stats",
]
