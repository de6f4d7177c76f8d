# tests/test_slow.py
# Long-running behavioural checks; enable with PACKCOOL_RUN_SLOW=1.

import logging
import os

import numpy as np
import pytest

from packcool.config import DEFAULT_SEEDS
from packcool.core.context import RunProfile
from packcool.core.loop import evaluate
from packcool.core.session import run_trainer, worker_pool
from packcool.modules.environment import PackCoolingEnv
from packcool.modules.render import read_table, write_table

pytestmark = pytest.mark.slow

logger = logging.getLogger("packcool.tests")

# 50176 steps of 200-step episodes
DESK_EPISODES = 250


class TestConstantValve:
    @pytest.mark.parametrize("seed", [0, 1, 2])
    def test_closed_valve_heats_and_open_valve_overcools(self, seed):
        env_config, _ = RunProfile().resolve()
        initial_u = PackCoolingEnv(env_config).reset(seed=seed)[: env_config.n_x]
        closed, closed_run = evaluate(None, env_config, "constant_0", seed=seed)
        opened, open_run = evaluate(None, env_config, "constant_1", seed=seed)
        _, _, closed_u, _ = closed_run.arrays()
        _, _, open_u, _ = open_run.arrays()
        half = closed_u.shape[0] // 2
        assert closed_u[-1].mean() > initial_u.mean()
        assert closed_u[-1].mean() > closed_u[half].mean()
        assert -4.0 <= open_u[-1].mean() <= -2.0
        # overcooling toward the inflow costs more than heating
        assert closed > opened


class TestDeskComparison:
    def test_both_algorithms_finish_every_seed(self, tmp_path):
        env_config, train_config = RunProfile().resolve("desk")
        jobs = [(algo, seed) for seed in DEFAULT_SEEDS for algo in ("ppo", "hjbppo")]
        workers = max(1, min(len(jobs), os.cpu_count() or 1))
        with worker_pool(workers) as pool:
            futures = {
                job: pool.submit(run_trainer, job[0], env_config, train_config, job[1], tmp_path / f"{job[0]}{job[1]}")
                for job in jobs
            }
            logs = {job: np.asarray(future.result().reward_log) for job, future in futures.items()}

        for job, rewards in logs.items():
            assert rewards.size == DESK_EPISODES, job
            assert np.all(np.isfinite(rewards)) and np.all(rewards <= 0.0), job

        columns = [np.asarray(DEFAULT_SEEDS)]
        for algo in ("ppo", "hjbppo"):
            columns.append(np.array([logs[(algo, s)][:20].mean() for s in DEFAULT_SEEDS]))
            columns.append(np.array([logs[(algo, s)][-20:].mean() for s in DEFAULT_SEEDS]))
        report = write_table(
            tmp_path / "comparison.csv",
            ["seed", "ppo_first20", "ppo_last20", "hjbppo_first20", "hjbppo_last20"],
            columns, fmt=["%d"] + ["%.17g"] * 4,
        )
        _, table = read_table(report)
        assert table.shape == (len(DEFAULT_SEEDS), 5)
        first_wins = int(np.sum(table[:, 3] > table[:, 1]))
        last_wins = int(np.sum(table[:, 4] > table[:, 2]))
        logger.info(f"[desk] hjbppo ahead of ppo on {first_wins}/{len(DEFAULT_SEEDS)} seeds (first 20), {last_wins} (last 20)")
