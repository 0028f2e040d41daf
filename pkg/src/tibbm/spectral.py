"""Moving-eigenbasis solver for w_t = eps^-1 (w_xx - q(t) x w) on (0, inf), w(t, 0) = 0.

Write W_t = exp(eps^-1 alpha_1 int_0^t q^(2/3)) w(t, .) and expand it in the
instantaneous eigenbasis psi_n^{q(t)}.  The coefficients obey

    c' = (D(t) + (log q)'(t) A) c,   D = -eps^-1 q^(2/3) diag(alpha_n - alpha_1)

with A the constant antisymmetric coupling matrix.  D is stiff and diagonal,
so it is integrated exactly (integrating factor) while the coupling is
advanced with an explicit midpoint rule in the transformed variables.

The same module carries an independent finite-difference solver of the PDE
itself and the change of variables that maps the canonical problem onto the
first-moment PDE of the time-inhomogeneous branching process.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np
from scipy.interpolate import CubicSpline

from . import airy, quadrature
from . import sigma as sig
from .fields import ScalarField1D, parabolic_solve, uniform_grid

NORM_SLACK = 1e-9
MAX_STEPS = 5_000_000
STEP_FRACTION = 0.05
RIPPLE_TOL = 1e-6


class SpectralError(ValueError):
    pass


class NumericalGuardError(RuntimeError):
    """A hard numerical invariant was violated."""


# ------------------------------------------------------------------ problems

@dataclass(frozen=True, eq=False)
class CanonicalProblem:
    q: Callable
    dq: Callable
    epsilon: float
    N: int = airy.DEFAULT_TRUNCATION
    name: str = "custom"

    def __post_init__(self):
        if not self.epsilon > 0:
            raise SpectralError("epsilon must be positive")
        if self.N < 2:
            raise SpectralError("truncation must be at least 2")
        if np.any(np.asarray(self.q(np.linspace(0, 1, 201))) <= 0):
            raise SpectralError("q must be positive on [0, 1]")

    @property
    def Q1(self) -> float:
        return float(np.min(self.q(np.linspace(0, 1, 1001)) ** (2 / 3)))

    @property
    def Q2(self) -> float:
        t = np.linspace(0, 1, 1001)
        return float(np.max(np.abs(self.dq(t) / self.q(t))))

    def log_rate(self, t):
        return self.dq(t) / self.q(t)

    def q23_integral(self, t0: float, t1: float) -> float:
        return quadrature.integrate(lambda s: self.q(s) ** (2 / 3), t0, t1, width=0.05, order=16)

    def with_epsilon(self, epsilon: float) -> "CanonicalProblem":
        return replace(self, epsilon=epsilon)

    def with_truncation(self, N: int) -> "CanonicalProblem":
        return replace(self, N=N)


def constant_q(q0: float = 1.0, epsilon: float = 0.01, N: int = airy.DEFAULT_TRUNCATION) -> CanonicalProblem:
    return CanonicalProblem(
        lambda t: np.full(np.shape(t), float(q0)) if np.ndim(t) else float(q0),
        lambda t: np.zeros(np.shape(t)) if np.ndim(t) else 0.0,
        epsilon, N, f"const:{q0:g}",
    )


def linear_q(a: float = 1.0, b: float = 0.5, epsilon: float = 0.01, N: int = airy.DEFAULT_TRUNCATION) -> CanonicalProblem:
    """q(t) = a + b t."""
    if not (a > 0 and a + b > 0):
        raise SpectralError("linear q must stay positive on [0, 1]")
    return CanonicalProblem(
        lambda t: a + b * np.asarray(t, dtype=float),
        lambda t: np.full(np.shape(t), float(b)) if np.ndim(t) else float(b),
        epsilon, N, f"linear:{a:g},{b:g}",
    )


def epsilon_for(profile: sig.SigmaProfile, T: float, convention: str = "derived") -> float:
    """Small parameter of the canonical problem obtained from horizon T.

    ``derived`` is what the change of variables actually produces,
    1/(J(1) T^(1/3)); ``literal`` is J(1) T^(-1/3).  They coincide iff J(1) = 1.
    """
    J1 = sig.J_of(profile, 1.0)
    if convention == "derived":
        return 1.0 / (J1 * T ** (1 / 3))
    if convention == "literal":
        return J1 * T ** (-1 / 3)
    raise SpectralError(f"unknown convention {convention!r}")


def from_sigma(
    profile: sig.SigmaProfile,
    T: float,
    tag: str = "qT",
    convention: str = "derived",
    N: int = airy.DEFAULT_TRUNCATION,
    nodes: int = 2049,
) -> CanonicalProblem:
    """Canonical problem whose q is q(J(t)/J(1)) = 2 Q(t) / sigma^2(t)."""
    s = np.linspace(0.0, 1.0, nodes)
    spline = CubicSpline(s, sig.q_canonical(profile, T, tag, s))
    dspline = spline.derivative()
    return CanonicalProblem(
        lambda t: spline(np.asarray(t, dtype=float))[()],
        lambda t: dspline(np.asarray(t, dtype=float))[()],
        epsilon_for(profile, T, convention), N, f"sigma:{profile.name}:T={T:g}:{tag}",
    )


def make_problem(spec: str, epsilon: float, N: int = airy.DEFAULT_TRUNCATION) -> CanonicalProblem:
    """``const[:q0]`` or ``linear[:a,b]`` (default q = 1 + t/2)."""
    name, _, rest = spec.partition(":")
    args = [float(v) for v in rest.split(",")] if rest else []
    if name == "const":
        return constant_q(*args, epsilon=epsilon, N=N)
    if name == "linear":
        return linear_q(*args, epsilon=epsilon, N=N)
    raise SpectralError(f"unknown q profile {spec!r}")


# --------------------------------------------------------------------- state

@dataclass
class SpectralState:
    """Coefficients of W_t in the basis psi_n^{q(t)}; one column per initial condition."""

    coeffs: np.ndarray
    time: float
    epsilon: float
    q_at_t: float
    log_scale: float = 0.0  # eps^-1 alpha_1 int_0^t q^(2/3)
    max_norm_ratio: float = field(default=1.0)

    def norm(self) -> np.ndarray:
        return np.linalg.norm(self.coeffs, axis=0)

    def tail_norm(self) -> np.ndarray:
        return np.linalg.norm(self.coeffs[1:], axis=0)


def _basis(problem: CanonicalProblem) -> airy.AiryBasis:
    return airy.basis(problem.N)


def project_initial(x0, problem: CanonicalProblem) -> SpectralState:
    """Coefficients of a Dirac mass at x0 (vectorised over x0)."""
    x0 = np.asarray(x0, dtype=float)
    if np.any(x0 <= 0):
        raise SpectralError("source point must be positive")
    q0 = float(problem.q(0.0))
    c = _basis(problem).modes(np.atleast_1d(x0), q0)
    if x0.ndim == 0:
        c = c[:, 0]
    return SpectralState(c, 0.0, problem.epsilon, q0)


def project_function(f: Callable, problem: CanonicalProblem, t: float = 0.0) -> SpectralState:
    """Coefficients of a smooth function in the basis at time t (t = 0 means W_0 = w_0)."""
    q = float(problem.q(t))
    scale = q ** (-1 / 3)
    x, w = quadrature.panel_nodes(
        quadrature.uniform_breaks(0.0, airy.support_edge(problem.N) * scale, 0.25 * scale), 20
    )
    c = _basis(problem).modes(x, q) @ (w * f(x))
    return SpectralState(c, t, problem.epsilon, q)


def evaluate(state: SpectralState, x, problem: CanonicalProblem, rescaled: bool = True) -> np.ndarray:
    """W_t(x) (or w(t, x) when ``rescaled`` is False) on points x."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    vals = np.tensordot(state.coeffs, _basis(problem).modes(x, state.q_at_t), axes=(0, 0))
    if not rescaled:
        vals = vals * math.exp(-state.log_scale)
    return vals


def evolve(state: SpectralState, problem: CanonicalProblem, t_end: float, step_fraction: float = STEP_FRACTION) -> SpectralState:
    """Advance the coefficients to t_end (Lawson explicit midpoint, h <= eps/10)."""
    t0 = state.time
    if t_end < t0 - 1e-15:
        raise SpectralError("cannot evolve backwards in time")
    if t_end > 1.0 + 1e-12:
        raise SpectralError("canonical time lives in [0, 1]")
    if t_end <= t0:
        return replace(state)
    eps = problem.epsilon
    frac = min(step_fraction, 0.1)
    steps = max(1, math.ceil((t_end - t0) / (frac * eps) - 1e-9))
    if steps > MAX_STEPS:
        raise SpectralError("epsilon too small for truncation/step budget")
    h = (t_end - t0) / steps
    b = _basis(problem)
    A = b.coupling()
    gaps = b.zeros - b.zeros[0]

    # q^(2/3) integrated over every half step, in one vectorised pass
    knots = t0 + 0.5 * h * np.arange(2 * steps + 1)
    knots[-1] = t_end
    halves = np.diff(quadrature.cumulative(lambda s: problem.q(s) ** (2 / 3), knots, 8))
    rate = problem.log_rate(knots)

    c = np.array(state.coeffs, dtype=float, copy=True)
    norm = np.linalg.norm(c, axis=0)
    worst = state.max_norm_ratio
    vec = c.ndim == 1
    g = gaps if vec else gaps[:, None]
    for k in range(steps):
        e1 = np.exp(-g * (halves[2 * k] / eps))
        e2 = np.exp(-g * (halves[2 * k + 1] / eps))
        k1 = rate[2 * k] * (A @ c)
        mid = e1 * (c + 0.5 * h * k1)
        k2 = rate[2 * k + 1] * (A @ mid)
        c = e1 * e2 * c + h * e2 * k2
        new = np.linalg.norm(c, axis=0)
        with np.errstate(divide="ignore", invalid="ignore"):
            ratio = np.where(norm > 0, new / norm, 1.0)
        r = float(np.max(ratio))
        if r > 1.0 + NORM_SLACK:
            raise NumericalGuardError(f"coefficient norm grew by {r - 1:.3e} at t={t0 + (k + 1) * h:.6f}")
        worst = max(worst, r)
        norm = new
    log_scale = state.log_scale + airy.airy_zero(1) / eps * float(np.sum(halves))
    return SpectralState(c, float(t_end), eps, float(problem.q(t_end)), log_scale, worst)


def trajectory(state: SpectralState, problem: CanonicalProblem, times, step_fraction: float = STEP_FRACTION) -> list[SpectralState]:
    """States at each of the increasing ``times``."""
    out = []
    for t in np.asarray(times, dtype=float):
        state = evolve(state, problem, float(t), step_fraction)
        out.append(state)
    return out


def constant_q_solution(state: SpectralState, problem: CanonicalProblem, t: float) -> np.ndarray:
    """Closed form for constant q: c_n(t) = c_n(0) exp(-eps^-1 (alpha_n - alpha_1) q^(2/3) t)."""
    b = _basis(problem)
    gaps = b.zeros - b.zeros[0]
    q = float(problem.q(0.0))
    dec = np.exp(-gaps * q ** (2 / 3) * (t - state.time) / problem.epsilon)
    return state.coeffs * (dec if state.coeffs.ndim == 1 else dec[:, None])


# ------------------------------------------------------ fundamental solution

def _regime_check(t: float, problem: CanonicalProblem) -> None:
    if t < 4 * problem.epsilon:
        warnings.warn("time below proposition regime", RuntimeWarning, stacklevel=3)


def fundamental_W(x, y, t: float, problem: CanonicalProblem) -> np.ndarray:
    """exp(eps^-1 alpha_1 int_0^t q^(2/3)) g(x, y; t); rows follow x, columns follow y."""
    _regime_check(t, problem)
    st = evolve(project_initial(np.atleast_1d(x), problem), problem, t)
    vals = evaluate(st, y, problem)
    if t >= 4 * problem.epsilon:
        top = np.max(np.abs(vals), axis=-1, keepdims=True)
        if np.any(vals < -RIPPLE_TOL * top):
            raise NumericalGuardError("fundamental solution negative beyond truncation ripple")
    return vals


def fundamental_g(x, y, t: float, problem: CanonicalProblem) -> np.ndarray:
    """Fundamental solution g(x, y; t) of the canonical problem."""
    scale = math.exp(-airy.airy_zero(1) / problem.epsilon * problem.q23_integral(0.0, t))
    out = fundamental_W(x, y, t, problem) * scale
    return out[0] if np.ndim(x) == 0 else out


@dataclass(frozen=True)
class ShapeReport:
    x: float
    distance: float
    ground_ratio: float
    tail: float


def leading_shape(x: float, problem: CanonicalProblem, t: float = 1.0) -> ShapeReport:
    """L2 distance between W(x, .; t)/psi_1^{q(0)}(x) and psi_1^{q(t)}.

    By orthonormality this is sqrt((c_1(t)/c_1(0) - 1)^2 + sum_{n>=2} c_n(t)^2 / c_1(0)^2).
    """
    st0 = project_initial(x, problem)
    st = evolve(st0, problem, t)
    c10 = st0.coeffs[0]
    r = st.coeffs[0] / c10
    tail = float(np.linalg.norm(st.coeffs[1:]) / abs(c10))
    return ShapeReport(float(x), float(math.hypot(r - 1.0, tail)), float(r), tail)


# ------------------------------------------------------------- mode decay fit

@dataclass(frozen=True)
class ModeDecayReport:
    t: float
    delta: float
    slope: float
    intercept: float
    modes_used: int
    C2: float
    predicted_constant_q_slope: float


def check_mode_decay(problem: CanonicalProblem, t: float, delta: float | None = None, x0: float = 1.0, floor: float = 1e-250) -> ModeDecayReport:
    """Fit log|c_n(t)| against n^(2/3) over n >= 2 for a Dirac start at x0."""
    eps = problem.epsilon
    if not 4 * eps - 1e-12 <= t <= 1.0:
        raise SpectralError("time outside [4 eps, 1]")
    delta = math.sqrt(eps) if delta is None else delta
    st = evolve(project_initial(x0, problem), problem, t)
    c = np.abs(st.coeffs)
    n = np.arange(1, problem.N + 1)
    keep = (n >= 2) & (c > floor)
    if keep.sum() < 5:
        raise SpectralError("insufficient resolvable modes")
    slope, icpt = np.polyfit(n[keep] ** (2 / 3), np.log(c[keep]), 1)
    gaps = _basis(problem).zeros - _basis(problem).zeros[0]
    gslope = np.polyfit(n[keep] ** (2 / 3), gaps[keep], 1)[0]
    pred = -gslope * problem.q23_integral(0.0, t) / eps
    C2 = -slope * eps / min(t, delta)
    if not C2 > 0:
        raise NumericalGuardError("mode coefficients do not decay")
    return ModeDecayReport(t, delta, float(slope), float(icpt), int(keep.sum()), float(C2), float(pred))


# ------------------------------------------------------------ a-priori bounds

@dataclass(frozen=True)
class PdeScalings:
    epsilons: tuple
    drift: tuple
    drift_ratios: tuple
    kappa: tuple
    kappa_prime: float
    kappa_second: float
    max_norm_ratio: float


def initial_bump(x):
    """Smooth bump vanishing at 0, used as test initial data."""
    x = np.asarray(x, dtype=float)
    return x * x * np.exp(-2.0 * (x - 1.5) ** 2)


def normalized_bump_state(problem: CanonicalProblem) -> SpectralState:
    st = project_function(initial_bump, problem)
    st.coeffs = st.coeffs / np.linalg.norm(st.coeffs)
    return st


def pde_scalings(problem: CanonicalProblem, epsilons=(0.04, 0.02, 0.01), times=None) -> PdeScalings:
    """Drift of c_1 and tail-mode norm across epsilon for a unit-norm bump start.

    Fits kappa' from the late-time tail plateau and then the largest kappa''
    for which tail(t) <= kappa' eps (kappa' eps + |c_1(0)|) + exp(-kappa'' Q1 t / eps)
    holds on the whole sample of times.
    """
    times = np.linspace(0.0, 1.0, 201)[1:] if times is None else np.asarray(times)
    drift, kap, worst = [], [], 1.0
    runs = []
    for eps in epsilons:
        p = problem.with_epsilon(eps)
        st0 = normalized_bump_state(p)
        states = trajectory(st0, p, times)
        tails = np.array([float(s.tail_norm()) for s in states])
        d = abs(states[-1].coeffs[0] - st0.coeffs[0])
        drift.append(float(d))
        kap.append(float(d / eps))
        worst = max(worst, max(s.max_norm_ratio for s in states))
        runs.append((eps, abs(st0.coeffs[0]), tails))
    Q1 = problem.Q1
    # plateau constant: quadratic kappa' eps (kappa' eps + c10) = tail at late times
    kp = 0.0
    for eps, c10, tails in runs:
        late = float(np.max(tails[times >= 0.5]))
        k = (-c10 + math.sqrt(c10 * c10 + 4 * late)) / (2 * eps)
        kp = max(kp, k)
    kp *= 1.5
    ks = math.inf
    for eps, c10, tails in runs:
        excess = tails - kp * eps * (kp * eps + c10)
        pos = excess > 0
        if np.any(pos):
            ks = min(ks, float(np.min(-np.log(np.minimum(excess[pos], 1.0)) * eps / (Q1 * times[pos]))))
    ratios = tuple(drift[i] / drift[i + 1] for i in range(len(drift) - 1))
    return PdeScalings(tuple(epsilons), tuple(drift), ratios, tuple(kap), kp, ks, worst)


# -------------------------------------------------------------- FD oracle

@dataclass(frozen=True)
class OracleResult:
    field: ScalarField1D
    levels: tuple
    observed_order: float | None
    extrapolated: ScalarField1D | None


def fd_oracle(
    problem: CanonicalProblem,
    initial: ScalarField1D,
    t_end: float,
    dt: float | None = None,
    rescaled: bool = True,
) -> ScalarField1D:
    """Crank-Nicolson solution of the canonical PDE on the grid of ``initial``.

    With ``rescaled`` the potential carries +alpha_1 q^(2/3) so the result is
    W_t rather than the exponentially small w.
    """
    eps = problem.epsilon
    dx = initial.dx
    if dx > math.sqrt(eps) / 20 * (1 + 1e-9):
        raise SpectralError("grid does not resolve epsilon: need dx <= sqrt(eps)/20")
    if initial.grid[0] != 0.0:
        raise SpectralError("grid must start at the Dirichlet point 0")
    dt = dx / 10 if dt is None else dt
    steps = max(1, math.ceil((t_end - initial.time) / dt - 1e-9))
    shift = airy.airy_zero(1) if rescaled else 0.0

    def react(t, x):
        qt = float(problem.q(t))
        return (-qt * x + shift * qt ** (2 / 3)) / eps

    u = parabolic_solve(initial.grid, initial.values, initial.time, t_end, steps, lambda t: 1.0 / eps, react)
    return ScalarField1D(initial.grid, u, float(t_end))


def bump_field(dx: float, xmax: float = 16.0) -> ScalarField1D:
    x = uniform_grid(0.0, xmax, dx)
    return ScalarField1D(x, initial_bump(x))


def fd_oracle_refined(problem: CanonicalProblem, t_end: float, dx: float, xmax: float = 16.0, levels: int = 3, dt_ratio: float = 0.1) -> OracleResult:
    """FD oracle at dx, dx/2, ... with dt proportional to dx; observed order and Richardson value."""
    sols = []
    for k in range(levels):
        h = dx / 2 ** k
        sols.append(fd_oracle(problem, bump_field(h, xmax), t_end, dt=dt_ratio * h))
    coarse = [s.values[:: 2 ** k] for k, s in enumerate(sols)]
    order = None
    extrap = None
    if levels >= 3:
        d1 = np.linalg.norm(coarse[0] - coarse[1])
        d2 = np.linalg.norm(coarse[1] - coarse[2])
        order = float(math.log2(d1 / d2)) if d2 > 0 else math.inf
    if levels >= 2:
        vals = (4 * coarse[-1] - coarse[-2]) / 3
        extrap = ScalarField1D(sols[0].grid, vals, float(t_end))
    return OracleResult(sols[-1], tuple(dx / 2 ** k for k in range(levels)), order, extrap)


def relative_l2_gap(a: np.ndarray, b: np.ndarray, x: np.ndarray) -> float:
    return float(np.sqrt(np.trapezoid((a - b) ** 2, x) / np.trapezoid(b ** 2, x)))


def oracle_gap(problem: CanonicalProblem, t_end: float = 1.0, dx: float | None = None, levels: int = 3, xmax: float = 16.0) -> dict:
    """Relative L2 gap between the spectral and FD solutions from the bump."""
    dx = math.sqrt(problem.epsilon) / 20 if dx is None else dx
    fd = fd_oracle_refined(problem, t_end, dx, xmax, levels)
    x = fd.extrapolated.grid if fd.extrapolated is not None else fd.field.grid
    st = evolve(project_function(initial_bump, problem), problem, t_end)
    spec = evaluate(st, x, problem)
    out = {
        "gap_finest": relative_l2_gap(fd.field.values[:: 2 ** (levels - 1)], spec, x),
        "observed_order": fd.observed_order,
        "levels": fd.levels,
    }
    if fd.extrapolated is not None:
        out["gap_extrapolated"] = relative_l2_gap(fd.extrapolated.values, spec, x)
    return out


# ---------------------------------------------------- change of variables

@dataclass(frozen=True, eq=False)
class Transport:
    """Map between the canonical problem and the first-moment PDE

        u_t = sigma^2(t/T)/2 u_yy + (-Q(t) y / T + T^(-2/3) alpha_1 Q^(2/3) (sigma^2/2)^(1/3)) u

    with Q(t) = q_T(t/T).  Time tau = J(t/T)/J(1), space y' = T^(-1/3) y.
    """

    profile: sig.SigmaProfile
    T: float
    tag: str = "qT"
    convention: str = "derived"
    N: int = airy.DEFAULT_TRUNCATION

    @property
    def J1(self) -> float:
        return float(sig.J_of(self.profile, 1.0))

    @property
    def problem(self) -> CanonicalProblem:
        return from_sigma(self.profile, self.T, self.tag, self.convention, self.N)

    @property
    def prefactor(self) -> float:
        scale = self.T ** (-1 / 3)
        return scale if self.convention == "derived" else self.J1 * scale

    def tau(self, t):
        return np.asarray(sig.J_of(self.profile, np.asarray(t, dtype=float) / self.T)) / self.J1

    def potential(self, t, y):
        s = np.asarray(t, dtype=float) / self.T
        Q = sig.Q_macro(self.profile, self.T, self.tag, s)
        half_var = 0.5 * np.asarray(self.profile.sigma(s)) ** 2
        return -Q * y / self.T + self.T ** (-2 / 3) * airy.airy_zero(1) * Q ** (2 / 3) * np.cbrt(half_var)

    def kernel(self, x, y, times) -> np.ndarray:
        """G(x, y; t) with shape (len(times), len(x), len(y))."""
        p = self.problem
        x = np.atleast_1d(np.asarray(x, dtype=float))
        y = np.atleast_1d(np.asarray(y, dtype=float))
        taus = np.atleast_1d(self.tau(times))
        scale = self.T ** (-1 / 3)
        st = project_initial(x * scale, p)
        out = np.empty((taus.size, x.size, y.size))
        gain = self.J1 * self.T ** (1 / 3) - 1.0 / p.epsilon
        for i, tau in enumerate(taus):
            _regime_check(float(tau), p)
            st = evolve(st, p, float(tau))
            # log of exp(J(1) T^(1/3) alpha_1 I) * exp(-alpha_1 I / eps); zero for the derived convention
            logf = airy.airy_zero(1) * p.q23_integral(0.0, float(tau)) * gain if gain != 0 else 0.0
            out[i] = self.prefactor * math.exp(logf) * evaluate(st, y * scale, p)
        return out


def transport_G(x, y, t, profile: sig.SigmaProfile, Qfunc: str, T: float, convention: str = "derived", N: int = airy.DEFAULT_TRUNCATION):
    """Fundamental solution G(x, y; t) of the first-moment PDE via the canonical problem."""
    vals = Transport(profile, T, Qfunc, convention, N).kernel(x, y, np.atleast_1d(t))
    if np.ndim(t) == 0:
        vals = vals[0]
        if np.ndim(x) == 0:
            vals = vals[0]
    return vals


def pde_residual(tr: Transport, x: float, y: np.ndarray, t: float, dt: float | None = None) -> float:
    """Relative finite-difference residual of G(x, ., .) in the first-moment PDE at time t."""
    dt = 1e-3 * tr.T if dt is None else dt
    G = tr.kernel([x], y, [t - dt, t, t + dt])[:, 0, :]
    dy = y[1] - y[0]
    ut = (G[2] - G[0]) / (2 * dt)
    uyy = (G[1, 2:] - 2 * G[1, 1:-1] + G[1, :-2]) / dy ** 2
    half_var = 0.5 * float(tr.profile.sigma(t / tr.T)) ** 2
    diff = half_var * uyy
    pot = tr.potential(t, y[1:-1]) * G[1, 1:-1]
    res = ut[1:-1] - diff - pot
    scale = np.max(np.abs(ut[1:-1])) + np.max(np.abs(diff)) + np.max(np.abs(pot))
    return float(np.max(np.abs(res)) / scale)
