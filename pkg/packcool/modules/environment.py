# modules/environment.py

import logging
from dataclasses import dataclass, field
from functools import lru_cache
from typing import List, Optional, Tuple

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import spsolve

from packcool.config import EnvConfig
from packcool.core.errors import InvalidArgumentError, InvalidStateError, NumericalBlowupError
from packcool.modules.grid import GridState, SpatialGrid, fourier_initial_u, laplacian_matrix

logger = logging.getLogger("packcool.env")

HEAT_RATE = 0.1


@dataclass
class StepResult:
    observation: np.ndarray
    reward: float
    done: bool
    info_sigma: float


@dataclass
class TrajectoryBuffer:
    """
    Per-episode record of sigma(t), u(x, t) and w(x, t), one row per step.
    Cleared on every reset.
    """
    times: List[float] = field(default_factory=list)
    sigmas: List[float] = field(default_factory=list)
    u_history: List[np.ndarray] = field(default_factory=list)
    w_history: List[np.ndarray] = field(default_factory=list)

    def append(self, t: float, sigma: float, u: np.ndarray, w: np.ndarray):
        self.times.append(float(t))
        self.sigmas.append(float(sigma))
        self.u_history.append(np.array(u, dtype=float))
        self.w_history.append(np.array(w, dtype=float))

    def clear(self):
        self.times.clear()
        self.sigmas.clear()
        self.u_history.clear()
        self.w_history.clear()

    def __len__(self) -> int:
        return len(self.times)

    def arrays(self) -> Tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
        return (
            np.asarray(self.times, dtype=float),
            np.asarray(self.sigmas, dtype=float),
            np.vstack(self.u_history) if self.u_history else np.empty((0, 0)),
            np.vstack(self.w_history) if self.w_history else np.empty((0, 0)),
        )


def map_action(a: float) -> float:
    """Clamp a to [-1, 1] and map it to the transport speed sigma = (a + 1) / 2."""
    a = float(a)
    if not np.isfinite(a):
        raise InvalidArgumentError(f"action must be finite, got {a}")
    a = min(1.0, max(-1.0, a))
    return (a + 1.0) / 2.0


def reward(u_next, dx: float) -> float:
    u_next = np.asarray(u_next, dtype=float)
    return float(-dx * np.dot(u_next, u_next))


def heat_generation(u: np.ndarray, config: EnvConfig) -> np.ndarray:
    if config.heat_source == "none":
        return np.zeros_like(u)
    return np.exp(HEAT_RATE * u)


def heat_generation_prime(u: np.ndarray, config: EnvConfig) -> np.ndarray:
    if config.heat_source == "none":
        return np.zeros_like(u)
    return HEAT_RATE * np.exp(HEAT_RATE * u)


class CrankNicolsonSolver:
    """
    Implicit stepper for z = concat(u, w):

        A_plus z(t+dt) - h(z(t+dt))/2 = A z(t) + h(z(t))/2 + b

    u-rows: Crank-Nicolson on diffusion and on the coupling (w - u)/R.
    w-rows: semi-Lagrangian; node k reads the linear interpolant at the foot
    x_k - sigma*dt, which lies in [x_{k-1}, x_k] because sigma*dt <= dx. The
    coupling (u - w)/R is averaged between the foot values and the new values.
    Rows are scaled by 1/dt so h enters with the plain factor 1/2.
    """
    def __init__(self, config: EnvConfig):
        self.config = config
        self.n = config.n_x
        self.grid = SpatialGrid(config.n_x, config.dx)
        n = self.n
        eye = sp.identity(n, format="csr")
        lap = laplacian_matrix(n, config.dx, config.neumann_closure)
        diff = 0.5 * config.diffusion_sign * config.diffusivity * lap
        half_k = 0.5 * config.inv_resistance
        inv_dt = 1.0 / config.dt

        self._uu_plus = inv_dt * eye - diff + half_k * eye
        self._uu_minus = inv_dt * eye + diff - half_k * eye
        self._cross = half_k * eye
        self._ww_plus = (inv_dt + half_k) * eye
        self._w_foot_weight = inv_dt - half_k
        self._a_plus = sp.bmat(
            [[self._uu_plus, -self._cross], [-self._cross, self._ww_plus]], format="csc"
        )

    def courant(self, sigma: float) -> float:
        theta = sigma * self.config.dt / self.config.dx
        if not 0.0 <= theta <= 1.0 + 1e-12:
            raise InvalidArgumentError(f"CFL violated: sigma*dt/dx = {theta}")
        return min(theta, 1.0)

    def _interpolation(self, theta: float, ghost: str) -> sp.csr_matrix:
        n = self.n
        rows = [np.arange(n), np.arange(1, n)]
        cols = [np.arange(n), np.arange(n - 1)]
        vals = [np.full(n, 1.0 - theta), np.full(n - 1, theta)]
        if ghost == "u":
            # the foot of node 1 may reach x = 0, where u carries the wall closure
            if self.config.neumann_closure == "mirror":
                rows.append(np.array([0]))
                cols.append(np.array([0]))
                vals.append(np.array([theta]))
            else:
                rows.append(np.array([0, 0]))
                cols.append(np.array([0, 1]))
                vals.append(np.array([4.0 * theta / 3.0, -theta / 3.0]))
        matrix = sp.coo_matrix(
            (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(n, n)
        )
        return matrix.tocsr()

    def operators(self, sigma: float) -> Tuple[sp.csc_matrix, sp.csc_matrix, np.ndarray]:
        """A_plus, A and the inflow vector b for transport speed sigma."""
        theta = self.courant(sigma)
        interp_w = self._interpolation(theta, "w")
        interp_u = self._interpolation(theta, "u")
        a_minus = sp.bmat(
            [
                [self._uu_minus, self._cross],
                [self._cross @ interp_u, self._w_foot_weight * interp_w],
            ],
            format="csc",
        )
        boundary = np.zeros(2 * self.n)
        boundary[self.n] = self._w_foot_weight * theta * self.config.inflow_temp
        return self._a_plus, a_minus, boundary

    def _h(self, z: np.ndarray) -> np.ndarray:
        out = np.zeros_like(z)
        out[: self.n] = heat_generation(z[: self.n], self.config)
        return out

    def _h_prime(self, z: np.ndarray) -> np.ndarray:
        out = np.zeros_like(z)
        out[: self.n] = heat_generation_prime(z[: self.n], self.config)
        return out

    def residual(self, z_new: np.ndarray, z_old: np.ndarray, sigma: float) -> np.ndarray:
        a_plus, a_minus, boundary = self.operators(sigma)
        rhs = a_minus @ z_old + 0.5 * self._h(z_old) + boundary
        return a_plus @ z_new - 0.5 * self._h(z_new) - rhs

    def solve(self, z_old: np.ndarray, sigma: float) -> Tuple[np.ndarray, float]:
        """Run exactly newton_iters Newton-Raphson iterations from z_old."""
        a_plus, a_minus, boundary = self.operators(sigma)
        rhs = a_minus @ z_old + 0.5 * self._h(z_old) + boundary
        z = np.array(z_old, dtype=float)
        for _ in range(self.config.newton_iters):
            f = a_plus @ z - 0.5 * self._h(z) - rhs
            jacobian = (a_plus - 0.5 * sp.diags(self._h_prime(z))).tocsc()
            z = z - spsolve(jacobian, f)
        f = a_plus @ z - 0.5 * self._h(z) - rhs
        return z, float(np.max(np.abs(f))) if np.all(np.isfinite(f)) else float("inf")

    def advance(self, state: GridState, sigma: float) -> GridState:
        z_new, _ = self.solve(state.concat(), sigma)
        step = state.step + 1
        if not np.all(np.isfinite(z_new)):
            raise NumericalBlowupError("non-finite state after solver step", step=step)
        return GridState.from_concat(z_new, t=step * self.config.dt, step=step)


@lru_cache(maxsize=16)
def _solver_for(config: EnvConfig) -> CrankNicolsonSolver:
    return CrankNicolsonSolver(config)


def solver_step(state: GridState, sigma: float, config: EnvConfig) -> GridState:
    return _solver_for(config).advance(state, sigma)


class PackCoolingEnv:
    """
    PackCooling environment: reset draws a Fourier initial profile, step maps
    a in [-1, 1] to sigma in [0, 1], advances the solver and returns
    -||u(t+dt)||^2 dx. Episodes last horizon_time / dt steps.
    """
    def __init__(self, config: Optional[EnvConfig] = None):
        self.config = config or EnvConfig()
        self.grid = SpatialGrid(self.config.n_x, self.config.dx)
        self.solver = _solver_for(self.config)
        self.trajectory = TrajectoryBuffer()
        self.state: Optional[GridState] = None
        self.done = True

    @property
    def observation_size(self) -> int:
        return 2 * self.config.n_x

    def reset(self, seed: Optional[int] = None) -> np.ndarray:
        seed = self.config.seed if seed is None else seed
        rng = np.random.default_rng(seed)
        coeffs = rng.uniform(self.config.coeff_low, self.config.coeff_high, size=self.config.n_fourier + 1)
        u0 = fourier_initial_u(coeffs, self.grid)
        w0 = np.full(self.config.n_x, self.config.inflow_temp)
        self.state = GridState(u=u0, w=w0, t=0.0, step=0)
        self.trajectory.clear()
        self.done = False
        logger.debug(f"[env] reset seed={seed}")
        return self.observation()

    def reset_to(self, state: GridState) -> np.ndarray:
        """Start an episode from an explicit state instead of a Fourier draw."""
        self.state = GridState(u=state.u.copy(), w=state.w.copy(), t=0.0, step=0)
        self.trajectory.clear()
        self.done = False
        return self.observation()

    def observation(self) -> np.ndarray:
        if self.state is None:
            raise InvalidStateError("environment has not been reset")
        return self.state.concat()

    @staticmethod
    def observation_split(obs: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        obs = np.asarray(obs, dtype=float)
        n = obs.shape[-1] // 2
        return obs[..., :n], obs[..., n:]

    def step(self, a: float) -> StepResult:
        if self.state is None or self.done:
            raise InvalidStateError("step() called on an environment that is not running; call reset()")
        sigma = map_action(a)
        self.state = self.solver.advance(self.state, sigma)
        r = reward(self.state.u, self.config.dx)
        self.done = self.state.step >= self.config.n_steps
        self.trajectory.append(self.state.t, sigma, self.state.u, self.state.w)
        return StepResult(observation=self.observation(), reward=r, done=self.done, info_sigma=sigma)

    def render(self) -> TrajectoryBuffer:
        return self.trajectory
