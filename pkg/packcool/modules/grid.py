# modules/grid.py

from dataclasses import dataclass, field
from typing import Literal

import numpy as np
import scipy.sparse as sp

from packcool.core.errors import InvalidArgumentError

Closure = Literal["mirror", "quadratic"]


@dataclass(frozen=True)
class SpatialGrid:
    """
    Uniform grid on [0, 1]. Node k (1-based) sits at x_k = k * dx, so x = 0 is
    not a node; the inflow value at x = 0 only enters through boundary handling.
    """
    n_x: int
    dx: float

    def __post_init__(self):
        if self.n_x < 1 or self.dx <= 0:
            raise InvalidArgumentError(f"invalid grid n_x={self.n_x}, dx={self.dx}")
        if abs(self.n_x * self.dx - 1.0) > 1e-12:
            raise InvalidArgumentError(f"dx * n_x must equal 1 (got {self.n_x * self.dx!r})")

    @classmethod
    def uniform(cls, n_x: int) -> "SpatialGrid":
        return cls(n_x=n_x, dx=1.0 / n_x)

    @property
    def nodes(self) -> np.ndarray:
        return np.arange(1, self.n_x + 1, dtype=float) * self.dx


@dataclass
class GridState:
    """Discretised pack temperature u, fluid temperature w and time t."""
    u: np.ndarray
    w: np.ndarray
    t: float = 0.0
    step: int = field(default=0, compare=False)

    def __post_init__(self):
        self.u = np.asarray(self.u, dtype=float)
        self.w = np.asarray(self.w, dtype=float)
        if self.u.shape != self.w.shape or self.u.ndim != 1:
            raise InvalidArgumentError(f"u and w must be equal-length vectors, got {self.u.shape} and {self.w.shape}")

    @property
    def n_x(self) -> int:
        return self.u.shape[0]

    def is_finite(self) -> bool:
        return bool(np.all(np.isfinite(self.u)) and np.all(np.isfinite(self.w)))

    def concat(self) -> np.ndarray:
        return np.concatenate([self.u, self.w])

    @classmethod
    def from_concat(cls, z: np.ndarray, t: float = 0.0, step: int = 0) -> "GridState":
        z = np.asarray(z, dtype=float)
        if z.ndim != 1 or z.shape[0] % 2:
            raise InvalidArgumentError(f"concatenated state must have even length, got {z.shape}")
        n = z.shape[0] // 2
        return cls(u=z[:n].copy(), w=z[n:].copy(), t=t, step=step)


def _check_length(values: np.ndarray, dx: float, name: str):
    if values.shape[-1] < 2:
        raise InvalidArgumentError(f"{name} needs at least 2 nodes, got {values.shape[-1]}")
    if dx <= 0:
        raise InvalidArgumentError(f"dx must be positive, got {dx}")


def _neumann_ghosts(u: np.ndarray, closure: Closure):
    if closure == "mirror":
        return u[..., :1], u[..., -1:]
    if closure == "quadratic":
        left = (4.0 * u[..., :1] - u[..., 1:2]) / 3.0
        return left, u[..., -2:-1]
    raise InvalidArgumentError(f"unknown Neumann closure {closure!r}")


def laplacian_u(u, dx: float, closure: Closure = "mirror") -> np.ndarray:
    """
    Second difference A u along the last axis with u_x = 0 at both walls.
    `mirror` uses the ghost copies u_0 := u_1 and u_{n+1} := u_n.
    `quadratic` uses u_0 := (4u_1 - u_2)/3 at x = 0 and the mirror about the
    wall node x_n = 1, u_{n+1} := u_{n-1}.
    """
    u = np.asarray(u, dtype=float)
    _check_length(u, dx, "laplacian_u")
    left, right = _neumann_ghosts(u, closure)
    padded = np.concatenate([left, u, right], axis=-1)
    return (padded[..., 2:] - 2.0 * u + padded[..., :-2]) / dx ** 2


def laplacian_matrix(n_x: int, dx: float, closure: Closure = "mirror") -> sp.csr_matrix:
    """Sparse matrix form of laplacian_u."""
    if n_x < 2:
        raise InvalidArgumentError(f"laplacian_matrix needs at least 2 nodes, got {n_x}")
    main = np.full(n_x, -2.0)
    upper = np.ones(n_x - 1)
    lower = np.ones(n_x - 1)
    if closure == "mirror":
        main[0] = -1.0
        main[-1] = -1.0
    elif closure == "quadratic":
        main[0], upper[0] = -2.0 / 3.0, 2.0 / 3.0
        lower[-1] = 2.0
    else:
        raise InvalidArgumentError(f"unknown Neumann closure {closure!r}")
    return sp.diags([lower, main, upper], [-1, 0, 1], format="csr") / dx ** 2


def gradient_w(w, w_inflow, dx: float) -> np.ndarray:
    """
    First difference B w along the last axis. Interior rows are centred, the
    first row reads w_0 := w_inflow, the last row is one-sided backward.
    """
    w = np.asarray(w, dtype=float)
    _check_length(w, dx, "gradient_w")
    inflow = np.broadcast_to(np.asarray(w_inflow, dtype=float)[..., None], w.shape[:-1] + (1,))
    previous = np.concatenate([inflow, w[..., :-2]], axis=-1)
    out = np.empty_like(w)
    out[..., :-1] = (w[..., 1:] - previous) / (2.0 * dx)
    out[..., -1] = (w[..., -1] - w[..., -2]) / dx
    return out


def fourier_initial_u(coeffs, grid: SpatialGrid) -> np.ndarray:
    """u0[k] = sum_n C_n cos(pi n x_k); every mode has zero slope at x = 0 and x = 1."""
    coeffs = np.asarray(coeffs, dtype=float)
    modes = np.arange(coeffs.shape[0], dtype=float)
    return np.cos(np.pi * np.outer(grid.nodes, modes)) @ coeffs
