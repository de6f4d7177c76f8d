# core/context.py

import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple

import numpy as np
import yaml

from packcool.config import DEFAULT_PROFILE_PATH, EnvConfig, TrainConfig, build_configs
from packcool.core.errors import ConfigError

logger = logging.getLogger("packcool.context")

ALGORITHMS = ("ppo", "hjbvi", "hjbppo")


class RunProfile:
    """
    Loads and stores run configuration from profiles.yaml
    """
    def __init__(self, config_path: Optional[Path] = None):
        path = Path(config_path or DEFAULT_PROFILE_PATH)
        try:
            with path.open("r", encoding="utf-8") as f:
                config = yaml.safe_load(f) or {}
        except OSError as e:
            raise ConfigError(f"cannot read profile file {path}: {e}") from e
        except yaml.YAMLError as e:
            raise ConfigError(f"profile file {path} is not valid YAML: {e}") from e

        run = config.get("run", {})
        self.path = path
        self.name = run.get("name", "PackCooling")
        self.id = run.get("id", "packcool")
        self.description = run.get("description", "")
        self.env_defaults: Dict[str, Any] = dict(config.get("env") or {})
        self.train_defaults: Dict[str, Any] = dict(config.get("train") or {})
        self.profiles: Dict[str, Dict[str, Any]] = dict(config.get("profiles") or {})

    def resolve(
        self,
        profile: Optional[str] = None,
        overrides: Optional[Dict[str, Any]] = None,
    ) -> Tuple[EnvConfig, TrainConfig]:
        """Defaults, then the named profile, then flat overrides (config file / CLI)."""
        env_base = dict(self.env_defaults)
        train_base = dict(self.train_defaults)
        if profile:
            if profile not in self.profiles:
                raise ConfigError(f"unknown profile {profile!r}; known: {sorted(self.profiles)}")
            env_base.update(self.profiles[profile].get("env") or {})
            train_base.update(self.profiles[profile].get("train") or {})
        return build_configs(env_base, train_base, overrides or {})

    def __repr__(self):
        return f"<RunProfile {self.name} ({self.id})>"


def derive_seed(*keys: int) -> int:
    """Stable 32-bit seed from a tuple of integers (run seed, episode, stream...)."""
    return int(np.random.SeedSequence([int(k) for k in keys]).generate_state(1)[0])


@dataclass
class RunContext:
    """
    Maintains run-wide state across rollouts and updates: step and episode
    counters, the per-episode reward log and per-update metrics.
    """
    algo: str
    seed: int
    env_config: EnvConfig
    train_config: TrainConfig
    out_dir: Path
    run_id: str = ""
    global_step: int = 0
    episode: int = 0
    update: int = 0
    episode_reward: float = 0.0
    reward_log: List[float] = field(default_factory=list)
    update_log: List[Dict[str, float]] = field(default_factory=list)

    def __post_init__(self):
        if self.algo not in ALGORITHMS:
            raise ConfigError(f"unknown algorithm {self.algo!r}; expected one of {ALGORITHMS}")
        self.out_dir = Path(self.out_dir)
        if not self.run_id:
            self.run_id = f"{self.algo}-seed{self.seed}"

    def record_step(self, reward: float, done: bool) -> bool:
        """Accumulate one step; on termination close the episode and return True."""
        self.global_step += 1
        self.episode_reward += reward
        if not done:
            return False
        self.reward_log.append(self.episode_reward)
        self.episode += 1
        self.episode_reward = 0.0
        return True

    def record_update(self, metrics: Dict[str, float]):
        self.update += 1
        self.update_log.append({"update": float(self.update), "global_step": float(self.global_step),
                                "episodes": float(self.episode), **metrics})

    def window_stats(self) -> Tuple[float, float]:
        """Mean and std of the last reward_window episode rewards."""
        if not self.reward_log:
            return float("nan"), float("nan")
        window = np.asarray(self.reward_log[-self.train_config.reward_window:])
        return float(window.mean()), float(window.std())

    def __repr__(self):
        return f"<RunContext {self.run_id} step={self.global_step} episode={self.episode}>"
