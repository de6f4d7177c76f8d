# core/session.py

import logging
import multiprocessing
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path
from typing import Dict, List, Sequence, Tuple

import numpy as np
import torch

from packcool.config import EnvConfig, TrainConfig
from packcool.core.context import ALGORITHMS
from packcool.core.errors import ConfigError, InvalidArgumentError
from packcool.core.loop import TRAINERS, RunArtifacts
from packcool.modules.render import merge_seed_curves, plot_curves, read_table, write_table

logger = logging.getLogger("packcool.session")


def _init_worker(torch_threads: int):
    torch.set_num_threads(torch_threads)


def worker_pool(workers: int) -> ProcessPoolExecutor:
    """Spawned processes that use the parent's torch thread count."""
    return ProcessPoolExecutor(
        max_workers=workers,
        mp_context=multiprocessing.get_context("spawn"),
        initializer=_init_worker,
        initargs=(torch.get_num_threads(),),
    )


def run_trainer(
    algo: str, env_config: EnvConfig, train_config: TrainConfig, seed: int, out_dir: Path, quiet: bool = True
) -> RunArtifacts:
    """One seed of one algorithm. Module level so a spawned worker can import it."""
    return TRAINERS[algo](env_config, train_config, seed, out_dir, quiet=quiet)


class TrainingSession:
    """
    Runs one trainer per seed, each writing only under out_dir/seed{S}/.
    Seeds share no mutable state, so with workers > 1 they run in separate
    spawned processes.
    """
    def __init__(
        self,
        algo: str,
        seeds: Sequence[int],
        env_config: EnvConfig,
        train_config: TrainConfig,
        out_dir: Path,
        workers: int = 1,
        quiet: bool = True,
    ):
        if algo not in TRAINERS:
            raise ConfigError(f"unknown algorithm {algo!r}; expected one of {ALGORITHMS}")
        if not seeds:
            raise ConfigError("at least one seed is required")
        if workers < 1:
            raise ConfigError(f"workers must be at least 1, got {workers}")
        self.algo = algo
        self.seeds = list(dict.fromkeys(int(s) for s in seeds))
        self.env_config = env_config
        self.train_config = train_config
        self.out_dir = Path(out_dir)
        self.workers = workers
        self.quiet = quiet

    def seed_dir(self, seed: int) -> Path:
        return self.out_dir / f"seed{seed}"

    def _run_seed(self, seed: int) -> RunArtifacts:
        return run_trainer(self.algo, self.env_config, self.train_config, seed, self.seed_dir(seed), self.quiet)

    def run(self) -> Dict[int, RunArtifacts]:
        logger.info(f"[session] {self.algo} seeds={self.seeds} workers={self.workers} out={self.out_dir}")
        if self.workers == 1 or len(self.seeds) == 1:
            results = [self._run_seed(seed) for seed in self.seeds]
        else:
            with worker_pool(self.workers) as pool:
                futures = [
                    pool.submit(run_trainer, self.algo, self.env_config, self.train_config, seed, self.seed_dir(seed), self.quiet)
                    for seed in self.seeds
                ]
                results = [future.result() for future in futures]
        return dict(zip(self.seeds, results))


def load_reward_logs(run_dir: Path) -> List[np.ndarray]:
    """Reward columns of every seed*/metrics.csv under run_dir (or run_dir/metrics.csv itself)."""
    run_dir = Path(run_dir)
    paths = sorted(run_dir.glob("seed*/metrics.csv"))
    if not paths and (run_dir / "metrics.csv").is_file():
        paths = [run_dir / "metrics.csv"]
    logs = []
    for path in paths:
        header, data = read_table(path)
        if header[:2] != ["episode", "reward"]:
            raise InvalidArgumentError(f"{path} does not look like a metrics file (header {header})")
        logs.append(data[:, 1])
    return logs


def merge_runs(runs: Sequence[Tuple[str, Path]], out_dir: Path, window: int = 20) -> Dict[str, Path]:
    """
    Merge each algorithm's per-seed logs into <algo>_curve.csv
    (episode, mean, std) and overlay all of them in curves.svg.
    """
    if not runs:
        raise InvalidArgumentError("no runs to plot")
    out_dir = Path(out_dir)
    curves = {}
    written: Dict[str, Path] = {}
    for algo, run_dir in runs:
        logs = load_reward_logs(run_dir)
        if not logs:
            raise InvalidArgumentError(f"no metrics.csv found under {run_dir}")
        episodes, mean, std = merge_seed_curves(logs, window)
        curves[algo] = (episodes, mean, std)
        written[algo] = write_table(
            out_dir / f"{algo}_curve.csv", ["episode", "mean", "std"], [episodes, mean, std],
            fmt=["%d", "%.17g", "%.17g"],
        )
        logger.info(f"[session] merged {len(logs)} seed logs for {algo} ({episodes.size} episodes)")
    written["svg"] = plot_curves(curves, out_dir / "curves.svg")
    return written
