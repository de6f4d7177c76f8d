# packcool/config.py

import math
import re
from pathlib import Path
from typing import Any, Dict, List, Literal, Tuple

from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator
from pydantic_settings import BaseSettings, SettingsConfigDict

from packcool.core.errors import ConfigError

BASE_DIR = Path(__file__).resolve().parent
DEFAULT_PROFILE_PATH = BASE_DIR / "config" / "profiles.yaml"

DEFAULT_SEEDS = [0, 1, 2, 3, 4]


class EnvConfig(BaseModel):
    """
    Physical and numerical constants of the PackCooling environment.
    """
    model_config = ConfigDict(extra="forbid", frozen=True)

    n_x: int = Field(100, gt=1)
    dx: float = Field(0.01, gt=0)
    dt: float = Field(0.01, gt=0)
    diffusivity: float = 0.01
    resistance: float = Field(2.0, gt=0)
    inflow_temp: float = -5.0
    n_fourier: int = Field(9, ge=0)
    coeff_low: float = -2.0
    coeff_high: float = 2.0
    horizon_time: float = Field(10.0, gt=0)
    newton_iters: int = Field(10, gt=0)
    diffusion_mode: Literal["stabilizing", "literal"] = "stabilizing"
    heat_source: Literal["exponential", "none"] = "exponential"
    neumann_closure: Literal["mirror", "quadratic"] = "mirror"
    seed: int = 0

    @model_validator(mode="after")
    def _check_grid(self) -> "EnvConfig":
        if abs(self.dx * self.n_x - 1.0) > 1e-12:
            raise ValueError(f"dx * n_x must equal 1 (got {self.dx} * {self.n_x})")
        if self.dx < self.dt:
            raise ValueError(f"stability needs dx >= dt (got dx={self.dx}, dt={self.dt})")
        ratio = self.horizon_time / self.dt
        if abs(ratio - round(ratio)) > 1e-9 or round(ratio) < 1:
            raise ValueError(f"horizon_time / dt must be a positive integer (got {ratio})")
        if self.n_fourier > self.n_x:
            raise ValueError("n_fourier must not exceed n_x")
        if self.coeff_low > self.coeff_high:
            raise ValueError("coeff_low must not exceed coeff_high")
        return self

    @property
    def n_steps(self) -> int:
        return int(round(self.horizon_time / self.dt))

    @property
    def inv_resistance(self) -> float:
        # resistance = inf switches the coupling off exactly
        return 0.0 if math.isinf(self.resistance) else 1.0 / self.resistance

    @property
    def diffusion_sign(self) -> float:
        return 1.0 if self.diffusion_mode == "stabilizing" else -1.0


class TrainConfig(BaseModel):
    """
    Optimisation hyperparameters shared by the three training algorithms.
    """
    model_config = ConfigDict(extra="forbid", frozen=True)

    horizon: int = Field(1024, gt=0)
    actor_lr: float = Field(3e-4, gt=0)
    critic_lr: float = Field(1e-3, gt=0)
    epochs: int = Field(10, gt=0)
    minibatch: int = Field(64, gt=0)
    gamma: float = 0.99
    gae_lambda: float = 0.95
    clip_eps: float = 0.2
    entropy_coef: float = 0.0
    normalize_advantages: bool = True
    total_steps: int = Field(1_000_000, gt=0)
    seeds: List[int] = Field(default_factory=lambda: list(DEFAULT_SEEDS))
    hidden_sizes: List[int] = Field(default_factory=lambda: [64, 64])
    std_init: float = 0.3
    std_min: float = 0.1
    std_decay: float = 0.01
    std_decay_episodes: int = Field(1000, gt=0)
    residual_form: Literal["loss", "theorem"] = "loss"
    checkpoint_every: int = Field(50, gt=0)
    reward_window: int = Field(20, gt=0)

    @field_validator("gamma")
    @classmethod
    def _check_gamma(cls, value: float) -> float:
        if not 0.0 < value <= 1.0:
            raise ValueError("gamma must lie in (0, 1]")
        return value

    @field_validator("gae_lambda")
    @classmethod
    def _check_lambda(cls, value: float) -> float:
        if not 0.0 <= value <= 1.0:
            raise ValueError("gae_lambda must lie in [0, 1]")
        return value

    @field_validator("clip_eps")
    @classmethod
    def _check_eps(cls, value: float) -> float:
        if value < 0.0:
            raise ValueError("clip_eps must be non-negative")
        return value


class Settings(BaseSettings):
    """Process-level settings read from PACKCOOL_* variables and .env"""
    model_config = SettingsConfigDict(env_prefix="PACKCOOL_", env_file=".env", extra="ignore")

    log_level: str = "INFO"
    profile_path: Path = DEFAULT_PROFILE_PATH
    torch_threads: int = 1


_LINE_PATTERN = re.compile(r"^\s*(\w+)\s*=\s*(.*?)\s*$")


def _parse_value(raw: str) -> Any:
    value = raw.strip()
    if value.startswith('"') and value.endswith('"') and len(value) >= 2:
        return value[1:-1]
    lowered = value.lower()
    if lowered in ("true", "false"):
        return lowered == "true"
    if "," in value:
        return [_parse_value(part) for part in value.split(",") if part.strip()]
    try:
        return int(value)
    except ValueError:
        pass
    try:
        return float(value)
    except ValueError:
        return value


def parse_config_text(text: str) -> Dict[str, Any]:
    """
    Parse flat `key = value` text. Blank lines and `#` comments are ignored;
    anything else that is not `key = value` is a ConfigError.
    """
    entries: Dict[str, Any] = {}
    for number, line in enumerate(text.splitlines(), start=1):
        stripped = line.split("#", 1)[0].strip()
        if not stripped:
            continue
        match = _LINE_PATTERN.match(stripped)
        if not match or not match.group(2):
            raise ConfigError(f"line {number}: expected 'key = value', got {line!r}")
        key, raw = match.group(1), match.group(2)
        if key in entries:
            raise ConfigError(f"line {number}: duplicate key {key!r}")
        entries[key] = _parse_value(raw)
    return entries


def split_overrides(entries: Dict[str, Any]) -> Tuple[Dict[str, Any], Dict[str, Any]]:
    env_keys = set(EnvConfig.model_fields)
    train_keys = set(TrainConfig.model_fields)
    env_part: Dict[str, Any] = {}
    train_part: Dict[str, Any] = {}
    for key, value in entries.items():
        if key in env_keys:
            env_part[key] = value
        elif key in train_keys:
            if key in ("seeds", "hidden_sizes") and not isinstance(value, list):
                value = [value]
            train_part[key] = value
        else:
            raise ConfigError(f"unknown config key {key!r}")
    return env_part, train_part


def build_configs(
    env_base: Dict[str, Any],
    train_base: Dict[str, Any],
    overrides: Dict[str, Any],
) -> Tuple[EnvConfig, TrainConfig]:
    env_part, train_part = split_overrides(overrides)
    try:
        env = EnvConfig.model_validate({**env_base, **env_part})
        train = TrainConfig.model_validate({**train_base, **train_part})
    except ValidationError as e:
        raise ConfigError(str(e)) from e
    return env, train


def load_config_file(path: Path) -> Dict[str, Any]:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as e:
        raise ConfigError(f"cannot read config file {path}: {e}") from e
    return parse_config_text(text)
