# core/loop.py

import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Optional, Tuple

import numpy as np
import torch
from tqdm import tqdm

from packcool.config import EnvConfig, TrainConfig
from packcool.core.context import RunContext, derive_seed
from packcool.core.errors import CheckpointFormatError, InvalidArgumentError, NumericalBlowupError
from packcool.core.strategy import EvalMode, decide_next_action, greedy_action
from packcool.modules.checkpoint import load_checkpoint, save_checkpoint
from packcool.modules.environment import PackCoolingEnv, TrajectoryBuffer
from packcool.modules.memory import RolloutBuffer, Transition
from packcool.modules.networks import Mlp, init_params, value_forward, value_layer_sizes
from packcool.modules.ppo import Optimizers, make_adam, update_epochs
from packcool.modules.render import rolling_mean, rolling_std, write_table

logger = logging.getLogger("packcool.loop")

UPDATE_COLUMNS = [
    "update", "global_step", "episodes", "policy_loss", "value_loss",
    "mse_f", "mse_u", "mse_n", "hjb_fraction",
]

# rng streams derived from the run seed
_ACTION_STREAM = 1
_UPDATE_STREAM = 2


@dataclass
class RunArtifacts:
    run_id: str
    out_dir: Path
    reward_log: List[float]
    update_log: List[Dict[str, float]]
    checkpoint: Path
    global_step: int


def build_networks(algo: str, env_config: EnvConfig, train_config: TrainConfig, seed: int) -> Tuple[Optional[Mlp], Mlp]:
    """Policy (None for value iteration) and value network, seeded independently of the algorithm."""
    sizes = value_layer_sizes(env_config.n_x, train_config.hidden_sizes)
    value = init_params(sizes, seed=derive_seed(seed, 0), output_activation="identity")
    policy = None
    if algo != "hjbvi":
        policy = init_params(sizes, seed=derive_seed(seed, 1), output_activation="tanh")
    return policy, value


class TrainerLoop:
    """
    Collect horizon steps, then run epochs x minibatches of updates; repeat
    until total_steps. `algo` fixes the action source and the critic loss:

        ppo     policy samples,           actor + MSE critic on GAE returns
        hjbvi   bang-bang controller only, HJB critic, no actor
        hjbppo  coin flip between both,    actor on every transition + HJB critic

    `force_branch` and `value_loss_mode` override the hjbppo choices.
    """
    def __init__(
        self,
        context: RunContext,
        force_branch: Optional[int] = None,
        value_loss_mode: Optional[str] = None,
        update_actor: bool = True,
        quiet: bool = False,
    ):
        self.context = context
        self.algo = context.algo
        self.env_config = context.env_config
        self.train_config = context.train_config
        self.force_branch = force_branch
        self.value_loss_mode = value_loss_mode or ("mse" if self.algo == "ppo" else "hjb")
        self.update_actor = update_actor and self.algo != "hjbvi"
        self.quiet = quiet

        seed = context.seed
        self.policy, self.value = build_networks(self.algo, self.env_config, self.train_config, seed)
        self.optimizers = Optimizers(
            critic=make_adam(self.value.parameters(), self.train_config.critic_lr),
            actor=make_adam(self.policy.parameters(), self.train_config.actor_lr) if self.policy is not None else None,
        )
        self.action_rng = np.random.default_rng(np.random.SeedSequence([seed, _ACTION_STREAM]))
        self.update_rng = np.random.default_rng(np.random.SeedSequence([seed, _UPDATE_STREAM]))
        self.env = PackCoolingEnv(self.env_config)
        self.buffer = RolloutBuffer()
        self.obs = self.env.reset(seed=derive_seed(seed, self.context.episode))

    @property
    def iterations(self) -> int:
        return max(1, self.train_config.total_steps // self.train_config.horizon)

    def networks(self) -> Dict[str, Mlp]:
        nets = {"value": self.value}
        if self.policy is not None:
            nets["policy"] = self.policy
        return nets

    def _value_of(self, obs: np.ndarray) -> float:
        u, w = PackCoolingEnv.observation_split(obs)
        with torch.no_grad():
            return float(value_forward(self.value, u, w))

    def collect_rollout(self, progress: Optional[tqdm] = None) -> RolloutBuffer:
        """Run horizon steps with the algorithm's action source; episodes may end mid-rollout."""
        ctx = self.context
        self.buffer.clear()
        for _ in range(self.train_config.horizon):
            state = self.env.state
            choice = decide_next_action(
                self.algo, state, self.policy, self.value, ctx.episode, self.action_rng,
                self.env_config, self.train_config, force=self.force_branch,
            )
            value_old = self._value_of(self.obs)
            try:
                result = self.env.step(choice.action)
            except NumericalBlowupError as e:
                raise e.with_context(f"algo={self.algo} seed={ctx.seed} global_step={ctx.global_step + 1}") from e
            self.buffer.add(Transition(
                obs=self.obs,
                action=choice.action,
                reward=result.reward,
                log_prob_old=choice.log_prob,
                value_old=value_old,
                done=result.done,
                u_next=self.env.state.u.copy(),
                source=choice.source,
                scale=choice.scale,
            ))
            if ctx.record_step(result.reward, result.done):
                mean_20, _ = ctx.window_stats()
                logger.debug(f"[loop] {ctx.run_id} episode {ctx.episode} reward={ctx.reward_log[-1]:.4f} mean_reward_20={mean_20:.4f}")
                self.obs = self.env.reset(seed=derive_seed(ctx.seed, ctx.episode))
            else:
                self.obs = result.observation
            if progress is not None:
                progress.update(1)
        return self.buffer

    def update(self) -> Dict[str, float]:
        metrics = update_epochs(
            self.buffer,
            self.policy if self.update_actor else None,
            self.value,
            self.optimizers,
            self.train_config,
            self.env_config,
            value_loss_mode=self.value_loss_mode,
            bootstrap_value=self._value_of(self.obs),
            rng=self.update_rng,
        )
        self.context.record_update(metrics)
        return metrics

    def save(self, name: str = "final.ckpt") -> Path:
        return save_checkpoint(self.networks(), self.context.out_dir / name)

    def write_logs(self):
        ctx = self.context
        rewards = np.asarray(ctx.reward_log, dtype=float)
        episodes = np.arange(1, rewards.size + 1)
        window = self.train_config.reward_window
        write_table(ctx.out_dir / "metrics.csv", ["episode", "reward"], [episodes, rewards], fmt=["%d", "%.17g"])
        write_table(
            ctx.out_dir / "reward_window.csv",
            ["episode", f"mean_reward_{window}", f"std_reward_{window}"],
            [episodes, rolling_mean(rewards, window), rolling_std(rewards, window)],
            fmt=["%d", "%.17g", "%.17g"],
        )
        columns = [np.asarray([row.get(key, 0.0) for row in ctx.update_log], dtype=float) for key in UPDATE_COLUMNS]
        write_table(ctx.out_dir / "updates.csv", UPDATE_COLUMNS, columns, fmt=["%d", "%d", "%d"] + ["%.17g"] * 6)

    def run(self) -> RunArtifacts:
        ctx = self.context
        ctx.out_dir.mkdir(parents=True, exist_ok=True)
        total = self.iterations * self.train_config.horizon
        logger.info(f"[loop] {ctx.run_id} starting: {self.iterations} iterations x {self.train_config.horizon} steps")
        with tqdm(total=total, desc=ctx.run_id, unit="step", disable=self.quiet, leave=False) as progress:
            for _ in range(self.iterations):
                try:
                    self.collect_rollout(progress)
                except NumericalBlowupError as e:
                    logger.error(f"[loop] {ctx.run_id} numerical blowup: {e}", exc_info=True)
                    self.write_logs()
                    raise
                metrics = self.update()
                mean_20, std_20 = ctx.window_stats()
                logger.info(
                    f"[loop] {ctx.run_id} update {ctx.update} step={ctx.global_step} episodes={ctx.episode} "
                    f"mean_reward_20={mean_20:.4f} std_reward_20={std_20:.4f} value_loss={metrics['value_loss']:.4g}"
                )
                if ctx.update % self.train_config.checkpoint_every == 0:
                    self.save(f"update{ctx.update:05d}.ckpt")
        checkpoint = self.save()
        self.write_logs()
        logger.info(f"[loop] {ctx.run_id} done: {ctx.episode} episodes, checkpoint {checkpoint}")
        return RunArtifacts(
            run_id=ctx.run_id,
            out_dir=ctx.out_dir,
            reward_log=list(ctx.reward_log),
            update_log=list(ctx.update_log),
            checkpoint=checkpoint,
            global_step=ctx.global_step,
        )


def _train(algo: str, env_config: EnvConfig, train_config: TrainConfig, seed: int, out_dir: Path, quiet: bool = True, **options) -> RunArtifacts:
    context = RunContext(algo=algo, seed=seed, env_config=env_config, train_config=train_config, out_dir=out_dir)
    return TrainerLoop(context, quiet=quiet, **options).run()


def train_ppo(env_config: EnvConfig, train_config: TrainConfig, seed: int, out_dir: Path, quiet: bool = True) -> RunArtifacts:
    return _train("ppo", env_config, train_config, seed, out_dir, quiet)


def train_hjb_value_iteration(env_config: EnvConfig, train_config: TrainConfig, seed: int, out_dir: Path, quiet: bool = True) -> RunArtifacts:
    return _train("hjbvi", env_config, train_config, seed, out_dir, quiet)


def train_hjbppo(
    env_config: EnvConfig,
    train_config: TrainConfig,
    seed: int,
    out_dir: Path,
    quiet: bool = True,
    force_branch: Optional[int] = None,
    value_loss_mode: Optional[str] = None,
    update_actor: bool = True,
) -> RunArtifacts:
    return _train(
        "hjbppo", env_config, train_config, seed, out_dir, quiet,
        force_branch=force_branch, value_loss_mode=value_loss_mode, update_actor=update_actor,
    )


TRAINERS = {"ppo": train_ppo, "hjbvi": train_hjb_value_iteration, "hjbppo": train_hjbppo}

_MODE_ALIASES = {"greedy_policy": "policy", "hjb_controller": "hjb"}


def evaluate_networks(
    nets: Dict[str, Mlp],
    env_config: EnvConfig,
    mode: EvalMode,
    seed: int = 0,
) -> Tuple[float, TrajectoryBuffer]:
    """One full episode with deterministic actions; returns the reward sum and the trajectory."""
    mode = _MODE_ALIASES.get(mode, mode)
    policy, value = nets.get("policy"), nets.get("value")
    needed = {"policy": ("policy", policy), "hjb": ("value", value)}.get(mode)
    if needed is not None:
        name, net = needed
        if net is None:
            raise CheckpointFormatError(f"checkpoint has no {name!r} network, required by mode {mode!r}")
        if net.input_size != 2 * env_config.n_x:
            raise CheckpointFormatError(
                f"{name!r} network expects {net.input_size} inputs, environment has 2 x {env_config.n_x}"
            )
    elif mode not in ("constant_0", "constant_1"):
        raise InvalidArgumentError(f"unknown evaluation mode {mode!r}")

    env = PackCoolingEnv(env_config)
    env.reset(seed=seed)
    total = 0.0
    done = False
    while not done:
        result = env.step(greedy_action(mode, env.state, policy, value, env_config))
        total += result.reward
        done = result.done
    logger.info(f"[eval] mode={mode} seed={seed} cumulative_reward={total:.6f}")
    return total, env.render()


def evaluate(checkpoint: Path, env_config: EnvConfig, mode: EvalMode, seed: int = 0) -> Tuple[float, TrajectoryBuffer]:
    nets = {} if mode in ("constant_0", "constant_1") else load_checkpoint(checkpoint)
    return evaluate_networks(nets, env_config, mode, seed)
