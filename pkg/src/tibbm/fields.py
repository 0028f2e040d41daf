"""One-dimensional grid fields and a Crank-Nicolson solver for linear parabolic problems."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy.linalg import solve_banded


@dataclass
class ScalarField1D:
    """Values on a uniform grid, with the Dirichlet data at both ends."""

    grid: np.ndarray
    values: np.ndarray
    time: float = 0.0
    left: float = 0.0
    right: float = 0.0

    @property
    def dx(self) -> float:
        return float(self.grid[1] - self.grid[0])

    def l2_norm(self) -> float:
        return float(np.sqrt(np.trapezoid(self.values ** 2, self.grid)))

    def interpolate(self, x) -> np.ndarray:
        return np.interp(x, self.grid, self.values)


def uniform_grid(a: float, b: float, dx: float) -> np.ndarray:
    n = int(round((b - a) / dx))
    return a + dx * np.arange(n + 1)


def _tridiag(diag_off: float, main: np.ndarray) -> np.ndarray:
    n = main.size
    ab = np.empty((3, n))
    ab[0, :] = diag_off
    ab[2, :] = diag_off
    ab[1, :] = main
    return ab


def parabolic_solve(
    x: np.ndarray,
    u0: np.ndarray,
    t0: float,
    t1: float,
    steps: int,
    diffusion: Callable[[float], float],
    reaction: Callable[[float, np.ndarray], np.ndarray] | None = None,
    left: float = 0.0,
    right: float = 0.0,
    rannacher: int = 2,
) -> np.ndarray:
    """Integrate u_t = a(t) u_xx + c(t, x) u with fixed Dirichlet values.

    Crank-Nicolson with coefficients frozen at the step midpoint; the first
    ``rannacher`` steps are each replaced by two backward-Euler half steps so
    that rough initial data does not excite the undamped CN oscillation.
    """
    if steps < 1:
        raise ValueError("need at least one step")
    u = np.array(u0, dtype=float, copy=True)
    u[0], u[-1] = left, right
    xi = x[1:-1]
    dx = float(x[1] - x[0])
    dt = (t1 - t0) / steps
    inner = u[1:-1].copy()

    def coeffs(t):
        a = diffusion(t) / dx ** 2
        c = reaction(t, xi) if reaction is not None else np.zeros_like(xi)
        bc = np.zeros_like(xi)
        bc[0] += a * left
        bc[-1] += a * right
        return a, c, bc

    def apply(v, a, c):
        out = (c - 2 * a) * v
        out[1:] += a * v[:-1]
        out[:-1] += a * v[1:]
        return out

    def backward_euler(v, t, h):
        a, c, bc = coeffs(t + h)
        ab = _tridiag(-h * a, 1.0 - h * (c - 2 * a))
        return solve_banded((1, 1), ab, v + h * bc, overwrite_ab=True, check_finite=False)

    t = t0
    for k in range(steps):
        if k < rannacher:
            inner = backward_euler(inner, t, 0.5 * dt)
            inner = backward_euler(inner, t + 0.5 * dt, 0.5 * dt)
        else:
            a, c, bc = coeffs(t + 0.5 * dt)
            rhs = inner + 0.5 * dt * apply(inner, a, c) + dt * bc
            ab = _tridiag(-0.5 * dt * a, 1.0 - 0.5 * dt * (c - 2 * a))
            inner = solve_banded((1, 1), ab, rhs, overwrite_ab=True, check_finite=False)
        t = t0 + (k + 1) * dt
    u[1:-1] = inner
    return u
