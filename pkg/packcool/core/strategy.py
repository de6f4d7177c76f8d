# core/strategy.py

from dataclasses import dataclass
from typing import Literal, Optional

import numpy as np
import torch

from packcool.config import EnvConfig, TrainConfig
from packcool.core.errors import InvalidArgumentError
from packcool.modules.grid import GridState
from packcool.modules.hjb import optimal_action
from packcool.modules.memory import Source
from packcool.modules.networks import Mlp, PolicyDistribution, log_prob, policy_mean, sample_action, std_schedule

EvalMode = Literal["policy", "hjb", "constant_0", "constant_1"]


@dataclass
class ActionChoice:
    action: float
    source: Source
    log_prob: float
    scale: float


def exploration_scale(episode: int, train_config: TrainConfig) -> float:
    return std_schedule(
        episode,
        initial=train_config.std_init,
        decay=train_config.std_decay,
        every=train_config.std_decay_episodes,
        floor=train_config.std_min,
    )


def policy_distribution(policy: Mlp, state: GridState, episode: int, train_config: TrainConfig) -> PolicyDistribution:
    with torch.no_grad():
        mean = float(policy_mean(policy, state.concat()))
    return PolicyDistribution(mean=mean, scale=exploration_scale(episode, train_config))


def _log_prob(dist: PolicyDistribution, a: float) -> float:
    with torch.no_grad():
        return float(log_prob(dist, a))


def select_action_ppo(
    state: GridState,
    policy: Mlp,
    episode: int,
    rng: np.random.Generator,
    train_config: TrainConfig,
) -> ActionChoice:
    dist = policy_distribution(policy, state, episode, train_config)
    a = sample_action(dist, rng)
    return ActionChoice(action=a, source="policy", log_prob=_log_prob(dist, a), scale=dist.scale)


def select_action_hjbvi(state: GridState, value: Mlp, env_config: EnvConfig) -> ActionChoice:
    # log_prob is unused: value iteration never updates an actor
    return ActionChoice(action=optimal_action(value, state, env_config), source="hjb_controller", log_prob=0.0, scale=1.0)


def select_action_hjbppo(
    state: GridState,
    policy: Mlp,
    value: Mlp,
    episode: int,
    rng: np.random.Generator,
    env_config: EnvConfig,
    train_config: TrainConfig,
    force: Optional[int] = None,
) -> ActionChoice:
    """
    With probability 1/2 act with the bang-bang controller of V, otherwise
    sample the policy. Either way log_prob is taken under the current policy,
    so controller actions can train the actor. `force` pins the branch and
    skips the coin flip.
    """
    branch = int(rng.integers(2)) if force is None else int(force)
    if branch not in (0, 1):
        raise InvalidArgumentError(f"branch must be 0 or 1, got {force}")
    dist = policy_distribution(policy, state, episode, train_config)
    if branch == 0:
        a = optimal_action(value, state, env_config)
        source: Source = "hjb_controller"
    else:
        a = sample_action(dist, rng)
        source = "policy"
    return ActionChoice(action=a, source=source, log_prob=_log_prob(dist, a), scale=dist.scale)


def decide_next_action(
    algo: str,
    state: GridState,
    policy: Optional[Mlp],
    value: Mlp,
    episode: int,
    rng: np.random.Generator,
    env_config: EnvConfig,
    train_config: TrainConfig,
    force: Optional[int] = None,
) -> ActionChoice:
    """
    Picks the action source for the algorithm being trained.
    """
    if algo == "ppo":
        return select_action_ppo(state, policy, episode, rng, train_config)
    if algo == "hjbvi":
        return select_action_hjbvi(state, value, env_config)
    if algo == "hjbppo":
        return select_action_hjbppo(state, policy, value, episode, rng, env_config, train_config, force=force)
    raise InvalidArgumentError(f"unknown algorithm {algo!r}")


def greedy_action(mode: EvalMode, state: GridState, policy: Optional[Mlp], value: Optional[Mlp], env_config: EnvConfig) -> float:
    """Deterministic evaluation actions: policy mean, controller, or a constant sigma."""
    if mode == "policy":
        with torch.no_grad():
            return float(policy_mean(policy, state.concat()))
    if mode == "hjb":
        return optimal_action(value, state, env_config)
    if mode == "constant_0":
        return -1.0
    if mode == "constant_1":
        return 1.0
    raise InvalidArgumentError(f"unknown evaluation mode {mode!r}")
