# modules/networks.py

import math
from dataclasses import dataclass
from typing import List, Literal, Sequence, Tuple, Union

import numpy as np
import torch
import torch.nn as nn
from torch.distributions import Normal

from packcool.core.errors import InvalidArgumentError
from packcool.modules.autodiff import DTYPE, gradients

Activation = Literal["identity", "tanh"]
ArrayLike = Union[np.ndarray, torch.Tensor, Sequence[float]]


class Mlp(nn.Module):
    """
    Affine layers with tanh between them. The output layer is affine for the
    value network and tanh-squashed for the policy mean.
    """
    def __init__(self, layer_sizes: Sequence[int], output_activation: Activation = "identity"):
        super().__init__()
        if len(layer_sizes) < 2 or any(size <= 0 for size in layer_sizes):
            raise InvalidArgumentError(f"invalid layer sizes {list(layer_sizes)}")
        self.layer_sizes = [int(size) for size in layer_sizes]
        self.output_activation = output_activation
        self.layers = nn.ModuleList(
            nn.Linear(fan_in, fan_out, dtype=DTYPE)
            for fan_in, fan_out in zip(self.layer_sizes[:-1], self.layer_sizes[1:])
        )

    @property
    def input_size(self) -> int:
        return self.layer_sizes[0]

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        for layer in self.layers[:-1]:
            x = torch.tanh(layer(x))
        x = self.layers[-1](x)
        if self.output_activation == "tanh":
            x = torch.tanh(x)
        return x


def init_params(layer_sizes: Sequence[int], seed: int, output_activation: Activation = "identity") -> Mlp:
    """Weights ~ U(-1/sqrt(fan_in), 1/sqrt(fan_in)), biases 0, from a seeded generator."""
    net = Mlp(layer_sizes, output_activation)
    generator = torch.Generator().manual_seed(int(seed))
    with torch.no_grad():
        for layer in net.layers:
            bound = 1.0 / math.sqrt(layer.in_features)
            layer.weight.uniform_(-bound, bound, generator=generator)
            layer.bias.zero_()
    return net


def zero_output_layer(net: Mlp) -> Mlp:
    with torch.no_grad():
        net.layers[-1].weight.zero_()
        net.layers[-1].bias.zero_()
    return net


def value_layer_sizes(n_x: int, hidden: Sequence[int]) -> List[int]:
    return [2 * n_x, *hidden, 1]


def _as_input(values: ArrayLike) -> torch.Tensor:
    if isinstance(values, torch.Tensor):
        return values.to(DTYPE)
    return torch.as_tensor(np.asarray(values, dtype=float), dtype=DTYPE)


def _check_width(params: Mlp, width: int):
    if width != params.input_size:
        raise InvalidArgumentError(f"input width {width} does not match network input {params.input_size}")


def value_forward(params: Mlp, u: ArrayLike, w: ArrayLike) -> torch.Tensor:
    """V(u, w); a scalar for single states, shape (B,) for batches."""
    u, w = _as_input(u), _as_input(w)
    if u.shape[:-1] != w.shape[:-1]:
        raise InvalidArgumentError(f"u and w batch shapes differ: {tuple(u.shape)} vs {tuple(w.shape)}")
    _check_width(params, u.shape[-1] + w.shape[-1])
    return params(torch.cat([u, w], dim=-1)).squeeze(-1)


def value_and_input_grads(
    params: Mlp, u: ArrayLike, w: ArrayLike, create_graph: bool = True
) -> Tuple[torch.Tensor, torch.Tensor, torch.Tensor]:
    """
    V together with dV/du and dV/dw. Gradients stay attached to the graph so a
    loss built from them can be differentiated with respect to the parameters.
    Batched inputs give per-sample gradients.
    """
    u = _as_input(u).detach().requires_grad_(True)
    w = _as_input(w).detach().requires_grad_(True)
    value = value_forward(params, u, w)
    grad_u, grad_w = gradients(value.sum(), [u, w], create_graph=create_graph)
    return value, grad_u, grad_w


def value_input_grads(params: Mlp, u: ArrayLike, w: ArrayLike) -> Tuple[torch.Tensor, torch.Tensor]:
    _, grad_u, grad_w = value_and_input_grads(params, u, w)
    return grad_u, grad_w


def policy_mean(params: Mlp, obs: ArrayLike) -> torch.Tensor:
    obs = _as_input(obs)
    _check_width(params, obs.shape[-1])
    mean = params(obs).squeeze(-1)
    if params.output_activation != "tanh":
        mean = torch.tanh(mean)
    return mean


def std_schedule(
    episode: int,
    initial: float = 0.3,
    decay: float = 0.01,
    every: int = 1000,
    floor: float = 0.1,
) -> float:
    """Exploration scale: start at 0.3, drop 0.01 every 1000 episodes, never below 0.1."""
    return max(floor, initial - decay * (max(0, int(episode)) // every))


@dataclass
class PolicyDistribution:
    mean: Union[float, torch.Tensor]
    scale: float

    def __post_init__(self):
        if not self.scale > 0:
            raise InvalidArgumentError(f"policy scale must be positive, got {self.scale}")

    def mean_value(self) -> float:
        if isinstance(self.mean, torch.Tensor):
            return float(self.mean.detach())
        return float(self.mean)


def sample_action(dist: PolicyDistribution, rng: np.random.Generator) -> float:
    """Draw from Normal(mean, scale) and clip to [-1, 1]."""
    return float(np.clip(rng.normal(dist.mean_value(), dist.scale), -1.0, 1.0))


def log_prob(dist: PolicyDistribution, a: Union[float, ArrayLike]) -> torch.Tensor:
    """Log density of the unclipped Normal(mean, scale); differentiable through the mean."""
    mean = dist.mean if isinstance(dist.mean, torch.Tensor) else torch.tensor(float(dist.mean), dtype=DTYPE)
    return Normal(mean, torch.as_tensor(dist.scale, dtype=DTYPE)).log_prob(_as_input(a))
