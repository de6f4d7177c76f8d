# modules/hjb.py

"""
Model-based side of the method: the semi-discrete dynamics, the HJB residual
and its three losses, and the bang-bang controller derived from the HJB
supremum over sigma.
"""

import math
from dataclasses import dataclass
from typing import Dict, Literal, Tuple

import numpy as np
import torch

from packcool.config import EnvConfig
from packcool.core.errors import InvalidArgumentError
from packcool.modules.autodiff import DTYPE
from packcool.modules.environment import heat_generation
from packcool.modules.grid import GridState, gradient_w, laplacian_u
from packcool.modules.networks import Mlp, value_and_input_grads, value_forward

ResidualForm = Literal["loss", "theorem"]


def u_dot_arrays(u: np.ndarray, w: np.ndarray, config: EnvConfig) -> np.ndarray:
    u = np.asarray(u, dtype=float)
    w = np.asarray(w, dtype=float)
    diffusion = config.diffusion_sign * config.diffusivity * laplacian_u(u, config.dx, config.neumann_closure)
    return diffusion + heat_generation(u, config) + config.inv_resistance * (w - u)


def u_dot_model(state: GridState, config: EnvConfig) -> np.ndarray:
    """du/dt from the known semi-discrete model, with the environment's diffusion sign."""
    return u_dot_arrays(state.u, state.w, config)


@dataclass
class HjbBatch:
    """T transitions (u_t, w_t, u_{t+1}) plus the constants the residual needs."""
    u: np.ndarray
    w: np.ndarray
    u_next: np.ndarray
    gamma: float
    dt: float
    dx: float
    inv_resistance: float
    inflow_temp: float
    residual_form: ResidualForm = "loss"

    def __post_init__(self):
        self.u = np.atleast_2d(np.asarray(self.u, dtype=float))
        self.w = np.atleast_2d(np.asarray(self.w, dtype=float))
        self.u_next = np.atleast_2d(np.asarray(self.u_next, dtype=float))
        if self.u.shape[0] == 0:
            raise InvalidArgumentError("HJB batch must not be empty")
        if not (self.u.shape == self.w.shape == self.u_next.shape):
            raise InvalidArgumentError(
                f"transition arrays disagree: {self.u.shape}, {self.w.shape}, {self.u_next.shape}"
            )
        if not 0.0 < self.gamma <= 1.0:
            raise InvalidArgumentError(f"gamma must lie in (0, 1], got {self.gamma}")

    @classmethod
    def from_transitions(
        cls,
        u: np.ndarray,
        w: np.ndarray,
        u_next: np.ndarray,
        config: EnvConfig,
        gamma: float,
        residual_form: ResidualForm = "loss",
    ) -> "HjbBatch":
        return cls(
            u=u,
            w=w,
            u_next=u_next,
            gamma=gamma,
            dt=config.dt,
            dx=config.dx,
            inv_resistance=config.inv_resistance,
            inflow_temp=config.inflow_temp,
            residual_form=residual_form,
        )

    def __len__(self) -> int:
        return self.u.shape[0]


def _to_tensor(values: np.ndarray) -> torch.Tensor:
    return torch.as_tensor(values, dtype=DTYPE)


def hjb_residuals(value: Mlp, batch: HjbBatch, config: EnvConfig) -> torch.Tensor:
    """
    Per-transition residual, shape (T,):

        (gamma - 1) V - ||u_{t+1}||^2 dx + <V_u, u_dot> dt
          + (1/R) <V_w, u - w> dt + max(0, -<V_w, B w>)

    The `theorem` form scales the drift terms and the max argument by gamma*dt instead.
    """
    v, grad_u, grad_w = value_and_input_grads(value, batch.u, batch.w, create_graph=True)
    u = _to_tensor(batch.u)
    w = _to_tensor(batch.w)
    u_dot = _to_tensor(u_dot_arrays(batch.u, batch.w, config))
    b_w = _to_tensor(gradient_w(batch.w, batch.inflow_temp, batch.dx))
    running = _to_tensor(batch.dx * np.sum(batch.u_next ** 2, axis=-1))

    drift = (grad_u * u_dot).sum(-1) + batch.inv_resistance * (grad_w * (u - w)).sum(-1)
    transport = -(grad_w * b_w).sum(-1)
    if batch.residual_form == "theorem":
        scale = batch.gamma * batch.dt
        return (batch.gamma - 1.0) * v - running + scale * drift + torch.relu(scale * transport)
    return (batch.gamma - 1.0) * v - running + batch.dt * drift + torch.relu(transport)


def hjb_residual(value: Mlp, transition: Tuple[np.ndarray, np.ndarray, np.ndarray], batch: HjbBatch, config: EnvConfig) -> torch.Tensor:
    """Residual of a single (u_t, w_t, u_{t+1}) under the constants of `batch`."""
    u, w, u_next = transition
    single = HjbBatch(
        u=u,
        w=w,
        u_next=u_next,
        gamma=batch.gamma,
        dt=batch.dt,
        dx=batch.dx,
        inv_resistance=batch.inv_resistance,
        inflow_temp=batch.inflow_temp,
        residual_form=batch.residual_form,
    )
    return hjb_residuals(value, single, config)[0]


def mse_f(value: Mlp, batch: HjbBatch, config: EnvConfig) -> torch.Tensor:
    residuals = hjb_residuals(value, batch, config)
    return residuals.pow(2).mean() * batch.dt


def critical_point(config: EnvConfig) -> Tuple[np.ndarray, np.ndarray]:
    """u = 0, w = -R: heat generation and coupling cancel, du/dt = 0."""
    if math.isinf(config.resistance):
        raise InvalidArgumentError("the critical point needs a finite resistance")
    return np.zeros(config.n_x), np.full(config.n_x, -config.resistance)


def mse_u(value: Mlp, config: EnvConfig) -> torch.Tensor:
    u0, w0 = critical_point(config)
    return value_forward(value, u0, w0).pow(2)


def mse_n(value: Mlp, config: EnvConfig) -> torch.Tensor:
    u0, w0 = critical_point(config)
    _, grad_u, grad_w = value_and_input_grads(value, u0, w0, create_graph=True)
    return grad_u.pow(2).sum() + grad_w.pow(2).sum()


def hjb_loss(value: Mlp, batch: HjbBatch, config: EnvConfig) -> Tuple[torch.Tensor, Dict[str, float]]:
    """J = MSE_f + MSE_u + MSE_n, with the parts for logging."""
    f_term = mse_f(value, batch, config)
    u_term = mse_u(value, config)
    n_term = mse_n(value, config)
    total = f_term + u_term + n_term
    parts = {"mse_f": float(f_term.detach()), "mse_u": float(u_term.detach()), "mse_n": float(n_term.detach())}
    return total, parts


def transport_inner_product(value: Mlp, state: GridState, config: EnvConfig) -> float:
    """q = <dV/dw, B w>; the Hamiltonian's sigma-dependent part is -sigma * q."""
    _, _, grad_w = value_and_input_grads(value, state.u, state.w, create_graph=False)
    b_w = gradient_w(state.w, config.inflow_temp, config.dx)
    return float(np.dot(grad_w.detach().numpy(), b_w))


def optimal_action(value: Mlp, state: GridState, config: EnvConfig) -> float:
    """Bang-bang rule a = -sign(q), with q = 0 mapped to a = -1 (sigma = 0)."""
    q = transport_inner_product(value, state, config)
    return 1.0 if q < 0.0 else -1.0
