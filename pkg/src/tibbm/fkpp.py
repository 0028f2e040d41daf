"""Finite-difference solver for the time-inhomogeneous FKPP equation

    F_t = sigma^2(1 - t/T)/2 F_xx + beta0 (E[F^L] - F),   F(x, 0) = 1{x >= 0},

whose solution at time T is the distribution function of the maximum M_T.

The solver works with u = 1 - F so that the leading edge (u tiny) keeps full
relative precision.  Each step is a Strang split: half a reaction step
(closed form for binary branching, clamped RK4 otherwise), one Crank-Nicolson
diffusion step, half a reaction step.  The first steps of the diffusion are
replaced by backward-Euler half steps (Rannacher start) to damp the jump in
the initial data.  The grid is a window that slides right with the front.
"""
from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from numba import njit

from . import sigma as sig
from .fields import ScalarField1D
from .offspring import OffspringLaw


class FKPPError(ValueError):
    pass


@dataclass(frozen=True)
class GridConfig:
    dx: float = 0.05
    dt: float = 0.02
    left_pad: float | None = None
    right_pad: float | None = None
    moving: bool = True
    rannacher: int = 2

    def pads(self, sigma_max: float, T: float) -> tuple[float, float]:
        left = 40.0 * sigma_max if self.left_pad is None else self.left_pad
        right = max(40.0 * sigma_max, 3.0 * sigma_max * math.sqrt(T / 2)) if self.right_pad is None else self.right_pad
        return left, right


# ------------------------------------------------------------------ kernels

@njit(cache=True)
def _react_binary(u, beta0, h):
    g = math.exp(beta0 * h)
    for i in range(u.size):
        v = u[i]
        u[i] = v * g / (1.0 - v + v * g)


@njit(cache=True)
def _rhs_general(v, beta0, ks, ps):
    s = 1.0 - v
    acc = 0.0
    for j in range(ks.size):
        acc += ps[j] * s ** ks[j]
    return beta0 * (1.0 - v - acc)


@njit(cache=True)
def _react_general(u, beta0, ks, ps, h):
    for i in range(u.size):
        v = u[i]
        k1 = _rhs_general(v, beta0, ks, ps)
        k2 = _rhs_general(v + 0.5 * h * k1, beta0, ks, ps)
        k3 = _rhs_general(v + 0.5 * h * k2, beta0, ks, ps)
        k4 = _rhs_general(v + h * k3, beta0, ks, ps)
        v = v + h * (k1 + 2 * k2 + 2 * k3 + k4) / 6.0
        u[i] = min(max(v, 0.0), 1.0)


@njit(cache=True)
def _tridiag_solve(diag, off, rhs, cp, dp):
    # constant off-diagonal Thomas algorithm; result written into rhs
    n = rhs.size
    cp[0] = off / diag
    dp[0] = rhs[0] / diag
    for i in range(1, n):
        m = diag - off * cp[i - 1]
        cp[i] = off / m
        dp[i] = (rhs[i] - off * dp[i - 1]) / m
    rhs[n - 1] = dp[n - 1]
    for i in range(n - 2, -1, -1):
        rhs[i] = dp[i] - cp[i] * rhs[i + 1]


@njit(cache=True)
def _diffuse(u, D, dt, dx, implicit_only, scratch, cp, dp):
    n = u.size - 2
    left = u[0]
    right = u[-1]
    rhs = scratch[:n]
    if implicit_only:
        r = D * dt / (dx * dx)
        for i in range(n):
            rhs[i] = u[i + 1]
        rhs[0] += r * left
        rhs[n - 1] += r * right
        _tridiag_solve(1.0 + 2.0 * r, -r, rhs, cp, dp)
    else:
        r = 0.5 * D * dt / (dx * dx)
        for i in range(n):
            rhs[i] = (1.0 - 2.0 * r) * u[i + 1] + r * (u[i] + u[i + 2])
        rhs[0] += r * left
        rhs[n - 1] += r * right
        _tridiag_solve(1.0 + 2.0 * r, -r, rhs, cp, dp)
    for i in range(n):
        v = rhs[i]
        u[i + 1] = min(max(v, 0.0), 1.0)


@njit(cache=True)
def _advance(u, Dmid, Dend_half, dt, dx, beta0, binary, ks, ps, be_steps):
    """Advance u through len(Dmid) Strang steps; the first ``be_steps`` use BE halves."""
    n = u.size
    scratch = np.empty(n)
    cp = np.empty(n)
    dp = np.empty(n)
    for k in range(Dmid.size):
        if binary:
            _react_binary(u, beta0, 0.5 * dt)
        else:
            _react_general(u, beta0, ks, ps, 0.5 * dt)
        if k < be_steps:
            _diffuse(u, Dend_half[2 * k], 0.5 * dt, dx, True, scratch, cp, dp)
            _diffuse(u, Dend_half[2 * k + 1], 0.5 * dt, dx, True, scratch, cp, dp)
        else:
            _diffuse(u, Dmid[k], dt, dx, False, scratch, cp, dp)
        if binary:
            _react_binary(u, beta0, 0.5 * dt)
        else:
            _react_general(u, beta0, ks, ps, 0.5 * dt)


# ------------------------------------------------------------------ solver

def front_position(field: ScalarField1D, level: float = 0.5) -> float:
    """Location where the distribution function F first reaches ``level`` (linear interpolation)."""
    if not 0 < level < 1:
        raise FKPPError("level must lie in (0, 1)")
    F = np.asarray(field.values)
    above = F >= level
    if not above.any() or above[0]:
        raise FKPPError("front not in domain")
    i = int(np.argmax(above))
    x = field.grid
    if F[i] == level:
        return float(x[i])
    return float(x[i - 1] + (level - F[i - 1]) * (x[i] - x[i - 1]) / (F[i] - F[i - 1]))


def _front_u(x: np.ndarray, u: np.ndarray) -> float:
    return front_position(ScalarField1D(x, 1.0 - u), 0.5)


@dataclass
class FKPPResult:
    T: float
    profile: str
    law: str
    times: np.ndarray
    fronts: np.ndarray
    final: ScalarField1D
    snapshots: list = field(default_factory=list)
    shifts: int = 0

    @property
    def front(self) -> float:
        return float(self.fronts[-1])


def solve_fkpp(
    profile: sig.SigmaProfile,
    law: OffspringLaw,
    T: float,
    grid: GridConfig = GridConfig(),
    record_times=(),
    snapshot_times=(),
) -> FKPPResult:
    """Integrate to time T and return the front trajectory (u = 1/2 crossings)."""
    if not T > 0:
        raise FKPPError("horizon must be positive")
    dx, dt = grid.dx, grid.dt
    steps_total = max(1, int(round(T / dt)))
    dt = T / steps_total
    smax = float(np.max(profile.sigma(np.linspace(0, 1, 101))))
    left_pad, right_pad = grid.pads(smax, T)
    margin = 0.25 * right_pad
    ncell = int(math.ceil((left_pad + right_pad + margin) / dx))
    x = -left_pad + dx * np.arange(ncell + 1)
    x[np.abs(x) < 0.5 * dx] = 0.0
    u = np.where(x < 0, 1.0, 0.0)
    u[x == 0.0] = 0.5
    u[0], u[-1] = 1.0, 0.0
    ks, ps = law.arrays()
    beta0 = law.beta0

    def D(t):
        return 0.5 * np.asarray(profile.sigma(np.clip(1.0 - np.asarray(t) / T, 0.0, 1.0))) ** 2

    chunk = max(1, int(round(1.0 / dt)))
    rec = sorted(set(float(r) for r in record_times if 0 < r <= T) | {float(T)})
    snaps = sorted(float(s) for s in snapshot_times if 0 <= s <= T)
    times, fronts, snapshots = [], [], []
    shifts = 0
    k = 0
    be_left = grid.rannacher
    while k < steps_total:
        # stop exactly on the next recorded or snapshot time
        nxt = [int(round(r / dt)) for r in rec + snaps if int(round(r / dt)) > k]
        stop = min([k + chunk] + nxt)
        idx = np.arange(k, stop)
        Dmid = D((idx + 0.5) * dt)
        half = np.empty(2 * idx.size)
        half[0::2] = D((idx + 0.5) * dt)
        half[1::2] = D((idx + 1.0) * dt)
        _advance(u, Dmid, half, dt, dx, beta0, law.is_binary, ks, ps, be_left)
        be_left = max(0, be_left - idx.size)
        k = stop
        t = k * dt
        f = _front_u(x, u)
        if x[-1] - f < 5.0 and not grid.moving:
            raise FKPPError("domain exhausted")
        if grid.moving and x[-1] - f < right_pad:
            s = int(math.ceil((right_pad + margin - (x[-1] - f)) / dx))
            u[:-s] = u[s:].copy()
            u[-s:] = 0.0
            u[0] = 1.0
            x = x + s * dx
            shifts += s
        if any(abs(t - r) < 0.5 * dt for r in rec):
            times.append(t)
            fronts.append(f)
        if any(abs(t - s) < 0.5 * dt for s in snaps):
            snapshots.append(ScalarField1D(x.copy(), 1.0 - u, t, 0.0, 1.0))
    final = ScalarField1D(x.copy(), 1.0 - u, float(T), 0.0, 1.0)
    return FKPPResult(float(T), profile.name, law.spec(), np.array(times), np.array(fronts), final, snapshots, shifts)


def _solve_one(args):
    spec, law, T, grid = args
    res = solve_fkpp(sig.make_profile(spec), law, T, grid)
    return T, res.front


def front_sweep(profile: sig.SigmaProfile, law: OffspringLaw, horizons, grid: GridConfig = GridConfig(), workers: int = 1) -> dict:
    """Front at time T for each horizon T, merged by horizon.

    A constant profile does not depend on T, so one run to the largest
    horizon records every front.
    """
    Ts = sorted(float(T) for T in horizons)
    if profile.is_constant():
        res = solve_fkpp(profile, law, Ts[-1], grid, record_times=Ts)
        return {T: float(f) for T, f in zip(res.times, res.fronts)}
    jobs = [(profile.name, law, T, grid) for T in Ts]
    if workers > 1 and profile.kind != "tabulated":
        with ProcessPoolExecutor(max_workers=workers) as ex:
            out = dict(ex.map(_solve_one, jobs))
    else:
        out = {T: solve_fkpp(profile, law, T, grid).front for T in Ts}
    return {T: out[T] for T in Ts}


# ------------------------------------------------------------ expansion fit

@dataclass(frozen=True)
class ExpansionFit:
    """Least squares of position on (T, T^(1/3), log T, 1)."""

    coef: np.ndarray
    stderr: np.ndarray
    residuals: np.ndarray
    condition: float

    @property
    def v1(self) -> float:
        return float(self.coef[0])

    @property
    def w1(self) -> float:
        return float(-self.coef[1])

    @property
    def log_coef(self) -> float:
        return float(self.coef[2])

    @property
    def const(self) -> float:
        return float(self.coef[3])

    def as_dict(self) -> dict:
        return {
            "v1": self.v1, "w1": self.w1, "log_coef": self.log_coef, "const": self.const,
            "stderr": self.stderr.tolist(), "max_residual": float(np.max(np.abs(self.residuals))),
            "condition": self.condition,
        }


def design_matrix(Ts) -> np.ndarray:
    Ts = np.asarray(Ts, dtype=float)
    return np.column_stack([Ts, np.cbrt(Ts), np.log(Ts), np.ones_like(Ts)])


def fit_expansion(fronts, profile: sig.SigmaProfile | None = None) -> ExpansionFit:
    """Fit m(T) = a T + b T^(1/3) + c log T + d to (T, position) pairs."""
    pairs = sorted((float(T), float(m)) for T, m in (fronts.items() if isinstance(fronts, dict) else fronts))
    Ts = np.array([p[0] for p in pairs])
    ms = np.array([p[1] for p in pairs])
    distinct = np.unique(Ts)
    if distinct.size < 6 or distinct.max() / distinct.min() < 10:
        raise FKPPError("insufficient horizon spread")
    X = design_matrix(Ts)
    scale = np.linalg.norm(X, axis=0)
    Xs = X / scale
    cond = float(np.linalg.cond(Xs))
    if cond > 1e10:
        raise FKPPError("insufficient horizon spread")
    beta, *_ = np.linalg.lstsq(Xs, ms, rcond=None)
    coef = beta / scale
    resid = ms - X @ coef
    dof = max(1, Ts.size - 4)
    s2 = float(resid @ resid) / dof
    cov = s2 * np.linalg.inv(Xs.T @ Xs)
    stderr = np.sqrt(np.diag(cov)) / scale
    return ExpansionFit(coef, stderr, resid, cond)


def bramson_offsets(fronts: dict, sigma_const: float = 1.0) -> dict:
    """front - (v T - 3/(2 lambda) log T) for a constant profile (speed sigma, lambda = 1/sigma)."""
    return {T: m - (sigma_const * T - 1.5 * sigma_const * math.log(T)) for T, m in fronts.items()}
