# modules/memory.py

from dataclasses import dataclass, field
from typing import Dict, List, Literal

import numpy as np

from packcool.core.errors import InvalidArgumentError

Source = Literal["policy", "hjb_controller"]


@dataclass
class Transition:
    """
    One environment step as stored for the update phase. `u_next` is the pack
    temperature after the step (needed by the HJB residual); `scale` is the
    exploration scale the policy density was evaluated with.
    """
    obs: np.ndarray
    action: float
    reward: float
    log_prob_old: float
    value_old: float
    done: bool
    u_next: np.ndarray
    source: Source = "policy"
    scale: float = 0.3

    def __post_init__(self):
        if not np.isfinite(self.log_prob_old):
            raise InvalidArgumentError(f"log_prob_old must be finite, got {self.log_prob_old}")
        if not -1.0 <= self.action <= 1.0:
            raise InvalidArgumentError(f"action must lie in [-1, 1], got {self.action}")


@dataclass
class RolloutBuffer:
    """
    Time-ordered transitions of one collection phase. Rollouts may cross
    episode boundaries; `done` marks where GAE must reset.
    """
    transitions: List[Transition] = field(default_factory=list)

    def add(self, item: Transition):
        self.transitions.append(item)

    def clear(self):
        self.transitions.clear()

    def __len__(self) -> int:
        return len(self.transitions)

    def source_fraction(self, source: Source) -> float:
        if not self.transitions:
            return 0.0
        return sum(t.source == source for t in self.transitions) / len(self.transitions)

    def arrays(self) -> Dict[str, np.ndarray]:
        if not self.transitions:
            raise InvalidArgumentError("rollout buffer is empty")
        return {
            "obs": np.vstack([t.obs for t in self.transitions]),
            "actions": np.array([t.action for t in self.transitions], dtype=float),
            "rewards": np.array([t.reward for t in self.transitions], dtype=float),
            "log_probs": np.array([t.log_prob_old for t in self.transitions], dtype=float),
            "values": np.array([t.value_old for t in self.transitions], dtype=float),
            "dones": np.array([t.done for t in self.transitions], dtype=bool),
            "u_next": np.vstack([t.u_next for t in self.transitions]),
            "scales": np.array([t.scale for t in self.transitions], dtype=float),
            "hjb_source": np.array([t.source == "hjb_controller" for t in self.transitions], dtype=bool),
        }
