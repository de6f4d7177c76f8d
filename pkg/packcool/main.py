# main.py

import logging
from enum import Enum
from pathlib import Path
from typing import List, Optional, Tuple

import torch
import typer
from dotenv import load_dotenv
from rich.console import Console

from packcool.config import Settings, load_config_file
from packcool.core.context import RunProfile
from packcool.core.errors import ConfigError, InvalidArgumentError, PackCoolError
from packcool.core.loop import evaluate
from packcool.core.session import TrainingSession, merge_runs
from packcool.modules.render import dump_trajectory

app = typer.Typer(add_completion=False, help="Battery pack cooling control: train, evaluate, plot.")
console = Console(stderr=True)
logger = logging.getLogger("packcool")

EXIT_RUNTIME = 1
EXIT_USAGE = 2


class Algo(str, Enum):
    ppo = "ppo"
    hjbvi = "hjbvi"
    hjbppo = "hjbppo"


class Mode(str, Enum):
    policy = "policy"
    hjb = "hjb"
    constant_0 = "constant_0"
    constant_1 = "constant_1"


def configure(quiet: bool = False) -> Settings:
    load_dotenv()
    settings = Settings()
    level = logging.WARNING if quiet else getattr(logging, settings.log_level.upper(), logging.INFO)
    logging.basicConfig(
        level=level,
        format="%(asctime)s - %(name)s - %(levelname)s - %(message)s",
        datefmt="%Y-%m-%d %H:%M:%S",
    )
    torch.set_num_threads(settings.torch_threads)
    return settings


def resolve_configs(settings: Settings, config: Optional[Path], profile: Optional[str], extra: Optional[dict] = None):
    overrides = load_config_file(config) if config else {}
    overrides.update(extra or {})
    return RunProfile(settings.profile_path).resolve(profile, overrides)


def fail(message: str, code: int):
    console.print(f"[red]error:[/red] {message}")
    raise typer.Exit(code=code)


@app.command()
def train(
    algo: Algo = typer.Option(..., "--algo", help="ppo, hjbvi or hjbppo"),
    seed: Optional[List[int]] = typer.Option(None, "--seed", help="repeatable; defaults to the configured seeds"),
    steps: Optional[int] = typer.Option(None, "--steps", help="total environment steps per seed"),
    config: Optional[Path] = typer.Option(None, "--config", help="flat key = value overrides"),
    profile: Optional[str] = typer.Option(None, "--profile", help="named profile from profiles.yaml"),
    out: Path = typer.Option(Path("run"), "--out"),
    workers: int = typer.Option(1, "--workers", min=1),
    quiet: bool = typer.Option(False, "--quiet"),
):
    """Train one algorithm over one or more seeds."""
    settings = configure(quiet)
    try:
        extra = {"total_steps": steps} if steps is not None else {}
        env_config, train_config = resolve_configs(settings, config, profile, extra)
        seeds = list(seed) if seed else list(train_config.seeds)
        session = TrainingSession(algo.value, seeds, env_config, train_config, out, workers=workers, quiet=quiet)
    except ConfigError as e:
        fail(str(e), EXIT_USAGE)
    try:
        results = session.run()
    except (PackCoolError, OSError) as e:
        fail(str(e), EXIT_RUNTIME)
    if not quiet:
        for artifacts in results.values():
            console.print(f"[green]{artifacts.run_id}[/green] {len(artifacts.reward_log)} episodes -> {artifacts.checkpoint}")


@app.command("eval")
def eval_command(
    ckpt: Optional[Path] = typer.Option(None, "--ckpt", help="checkpoint file (not needed for constant modes)"),
    mode: Mode = typer.Option(Mode.policy, "--mode"),
    seed: int = typer.Option(0, "--seed"),
    config: Optional[Path] = typer.Option(None, "--config"),
    profile: Optional[str] = typer.Option(None, "--profile"),
    out: Path = typer.Option(Path("eval"), "--out"),
    quiet: bool = typer.Option(False, "--quiet"),
):
    """Run one deterministic episode, print the cumulative reward and dump the trajectory."""
    settings = configure(quiet)
    try:
        env_config, _ = resolve_configs(settings, config, profile)
    except ConfigError as e:
        fail(str(e), EXIT_USAGE)
    if ckpt is None and mode in (Mode.policy, Mode.hjb):
        fail(f"--ckpt is required for mode {mode.value}", EXIT_USAGE)
    try:
        total, trajectory = evaluate(ckpt, env_config, mode.value, seed=seed)
        dump_trajectory(trajectory, out, env_config.dx)
    except (PackCoolError, OSError) as e:
        fail(str(e), EXIT_RUNTIME)
    typer.echo(f"cumulative_reward={total!r}")


def parse_run(entry: str) -> Tuple[str, Path]:
    algo, sep, directory = entry.partition("=")
    if not sep or not algo or not directory:
        raise InvalidArgumentError(f"--run expects ALGO=DIR, got {entry!r}")
    return algo.strip(), Path(directory.strip())


@app.command()
def plot(
    run: Optional[List[str]] = typer.Option(None, "--run", help="ALGO=DIR, repeatable"),
    out: Path = typer.Option(Path("plots"), "--out"),
    window: int = typer.Option(20, "--window", min=1),
    quiet: bool = typer.Option(False, "--quiet"),
):
    """Merge per-seed reward logs into mean/std curves and one SVG."""
    configure(quiet)
    if not run:
        fail("at least one --run ALGO=DIR is required", EXIT_USAGE)
    try:
        runs = [parse_run(item) for item in run]
        missing = [str(d) for _, d in runs if not d.is_dir()]
        if missing:
            raise InvalidArgumentError(f"run directories not found: {', '.join(missing)}")
        written = merge_runs(runs, out, window=window)
    except InvalidArgumentError as e:
        fail(str(e), EXIT_USAGE)
    except (PackCoolError, OSError) as e:
        fail(str(e), EXIT_RUNTIME)
    if not quiet:
        for name, path in written.items():
            console.print(f"{name}: {path}")


if __name__ == "__main__":
    app()
