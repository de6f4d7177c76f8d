# modules/ppo.py

import logging
from dataclasses import dataclass
from typing import Dict, Iterable, Literal, Optional, Tuple

import numpy as np
import torch
from torch.distributions import Normal

from packcool.config import EnvConfig, TrainConfig
from packcool.core.errors import InvalidArgumentError
from packcool.modules.autodiff import DTYPE
from packcool.modules.hjb import HjbBatch, hjb_loss
from packcool.modules.memory import RolloutBuffer
from packcool.modules.networks import Mlp, policy_mean, value_forward

logger = logging.getLogger("packcool.ppo")

ValueLossMode = Literal["mse", "hjb"]

ADAM_BETAS = (0.9, 0.999)
ADAM_EPS = 1e-8


def compute_gae(
    rewards, values, dones, bootstrap_value: float, gamma: float, lam: float
) -> Tuple[np.ndarray, np.ndarray]:
    """
    Generalized advantage estimation; the recursion resets wherever done is set.
    Returns (advantages, returns) with returns = advantages + values.
    """
    rewards = np.asarray(rewards, dtype=float)
    values = np.asarray(values, dtype=float)
    dones = np.asarray(dones, dtype=bool)
    if not (rewards.shape == values.shape == dones.shape) or rewards.ndim != 1:
        raise InvalidArgumentError(
            f"rewards, values and dones must be equal-length vectors, got {rewards.shape}, {values.shape}, {dones.shape}"
        )
    advantages = np.zeros_like(rewards)
    running = 0.0
    for t in reversed(range(rewards.shape[0])):
        next_value = bootstrap_value if t == rewards.shape[0] - 1 else values[t + 1]
        nonterminal = 0.0 if dones[t] else 1.0
        delta = rewards[t] + gamma * next_value * nonterminal - values[t]
        running = delta + gamma * lam * nonterminal * running
        advantages[t] = running
    return advantages, advantages + values


def ppo_policy_loss(
    log_probs_new: torch.Tensor,
    log_probs_old: torch.Tensor,
    advantages: torch.Tensor,
    clip_eps: float,
) -> torch.Tensor:
    """
    Negated clipped surrogate, -mean(min(r A, clip(r, 1-eps, 1+eps) A)).
    The clipped branch carries no gradient once r leaves the open interval
    (1-eps, 1+eps), and ties resolve to the clipped branch, so eps = 0 gives a
    zero policy gradient.
    """
    ratio = torch.exp(log_probs_new - log_probs_old)
    low, high = 1.0 - clip_eps, 1.0 + clip_eps
    inside = (ratio > low) & (ratio < high)
    clipped = torch.where(inside, ratio, torch.clamp(ratio.detach(), low, high))
    unclipped_term = ratio * advantages
    clipped_term = clipped * advantages
    return -torch.where(unclipped_term < clipped_term, unclipped_term, clipped_term).mean()


def ppo_value_loss(values_pred: torch.Tensor, returns: torch.Tensor) -> torch.Tensor:
    if values_pred.shape != returns.shape:
        raise InvalidArgumentError(f"prediction shape {tuple(values_pred.shape)} != return shape {tuple(returns.shape)}")
    return (values_pred - returns).pow(2).mean()


def make_adam(parameters: Iterable[torch.nn.Parameter], lr: float) -> torch.optim.Adam:
    return torch.optim.Adam(parameters, lr=lr, betas=ADAM_BETAS, eps=ADAM_EPS)


def adam_update(optimizer: torch.optim.Optimizer, loss: torch.Tensor) -> float:
    """One bias-corrected adaptive-moment step on `loss`."""
    optimizer.zero_grad(set_to_none=True)
    loss.backward()
    optimizer.step()
    return float(loss.detach())


@dataclass
class Optimizers:
    critic: torch.optim.Optimizer
    actor: Optional[torch.optim.Optimizer] = None


def _tensor(values: np.ndarray) -> torch.Tensor:
    return torch.as_tensor(values, dtype=DTYPE)


def update_epochs(
    buffer: RolloutBuffer,
    policy: Optional[Mlp],
    value: Mlp,
    optimizers: Optimizers,
    train_config: TrainConfig,
    env_config: EnvConfig,
    value_loss_mode: ValueLossMode,
    bootstrap_value: float,
    rng: np.random.Generator,
) -> Dict[str, float]:
    """
    epochs x shuffled minibatches. The actor (if given) steps on the clipped
    surrogate over every transition, whatever its source; the critic steps on
    either the regression loss against GAE returns or the HJB loss.
    """
    if len(buffer) < train_config.minibatch:
        raise InvalidArgumentError(
            f"buffer holds {len(buffer)} transitions, fewer than one minibatch ({train_config.minibatch})"
        )
    data = buffer.arrays()
    advantages, returns = compute_gae(
        data["rewards"], data["values"], data["dones"], bootstrap_value,
        train_config.gamma, train_config.gae_lambda,
    )
    if train_config.normalize_advantages:
        advantages = (advantages - advantages.mean()) / (advantages.std() + 1e-8)

    n = env_config.n_x
    obs = data["obs"]
    u_all, w_all = obs[:, :n], obs[:, n:]
    obs_t = _tensor(obs)
    actions_t = _tensor(data["actions"])
    old_log_probs_t = _tensor(data["log_probs"])
    scales_t = _tensor(data["scales"])
    advantages_t = _tensor(advantages)
    returns_t = _tensor(returns)

    totals = {"policy_loss": 0.0, "value_loss": 0.0, "mse_f": 0.0, "mse_u": 0.0, "mse_n": 0.0}
    actor_steps = 0
    critic_steps = 0
    size = len(buffer)
    for _ in range(train_config.epochs):
        order = rng.permutation(size)
        for start in range(0, size, train_config.minibatch):
            idx = order[start:start + train_config.minibatch]

            if policy is not None and optimizers.actor is not None:
                mean = policy_mean(policy, obs_t[idx])
                dist = Normal(mean, scales_t[idx])
                loss = ppo_policy_loss(dist.log_prob(actions_t[idx]), old_log_probs_t[idx], advantages_t[idx], train_config.clip_eps)
                if train_config.entropy_coef:
                    loss = loss - train_config.entropy_coef * dist.entropy().mean()
                totals["policy_loss"] += adam_update(optimizers.actor, loss)
                actor_steps += 1

            if value_loss_mode == "mse":
                predicted = value_forward(value, u_all[idx], w_all[idx])
                totals["value_loss"] += adam_update(optimizers.critic, ppo_value_loss(predicted, returns_t[idx]))
            elif value_loss_mode == "hjb":
                batch = HjbBatch.from_transitions(
                    u_all[idx], w_all[idx], data["u_next"][idx], env_config,
                    gamma=train_config.gamma, residual_form=train_config.residual_form,
                )
                loss, parts = hjb_loss(value, batch, env_config)
                totals["value_loss"] += adam_update(optimizers.critic, loss)
                for key, part in parts.items():
                    totals[key] += part
            else:
                raise InvalidArgumentError(f"unknown value loss mode {value_loss_mode!r}")
            critic_steps += 1

    metrics = {
        "policy_loss": totals["policy_loss"] / max(actor_steps, 1),
        "value_loss": totals["value_loss"] / max(critic_steps, 1),
        "mse_f": totals["mse_f"] / max(critic_steps, 1),
        "mse_u": totals["mse_u"] / max(critic_steps, 1),
        "mse_n": totals["mse_n"] / max(critic_steps, 1),
        "actor_steps": float(actor_steps),
        "critic_steps": float(critic_steps),
        "hjb_fraction": buffer.source_fraction("hjb_controller"),
    }
    logger.debug(f"[ppo] update metrics {metrics}")
    return metrics
