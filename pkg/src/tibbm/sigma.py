"""Variance profiles and the deterministic curves built from them.

A profile is a strictly decreasing sigma on [0, 1] with its first two
derivatives.  From it we get

    v(t) = int_0^t sigma
    w(t) = 2^(-1/3) alpha_1 int_0^t sigma^(1/3) |sigma'|^(2/3)
    J(t) = int_0^t sigma^2 / 2

the predicted maximum m'_T = v(1) T - w(1) T^(1/3) - sigma(1) log T, the
barrier gamma_T(t) = T v(t/T) - T^(1/3) w(t/T), its bent version zeta_T and
the potential q_T of the killed first-moment problem.
"""
from __future__ import annotations

import math
import os
import re
from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable

import numpy as np
from scipy.interpolate import CubicHermiteSpline

from . import quadrature
from .airy import airy_zero

ALPHA1 = airy_zero(1)
W_CONST = 2.0 ** (-1.0 / 3.0) * ALPHA1
VALIDATION_POINTS = 1001
PRIMITIVE_PANELS = 512
BISECT_TOL = 1e-12


class SigmaError(ValueError):
    pass


def _as_time(t, upper: float = 1.0) -> np.ndarray:
    arr = np.asarray(t, dtype=float)
    if np.any(~np.isfinite(arr)) or np.any(arr < 0.0) or np.any(arr > upper * (1 + 1e-14)):
        raise SigmaError(f"time outside [0, {upper:g}]")
    return np.minimum(arr, upper)


def _scalar_out(like, value):
    return float(value) if np.ndim(like) == 0 else value


class _Primitive:
    """Vectorised F(t) = int_0^t f on [0, 1], accurate to round-off for smooth f."""

    def __init__(self, f: Callable, panels: int = PRIMITIVE_PANELS, order: int = 16):
        self.f = f
        self.n = panels
        self.order = order
        self.knots = np.linspace(0.0, 1.0, panels + 1)
        self.values = quadrature.cumulative(f, self.knots, order)

    def __call__(self, t) -> np.ndarray:
        t = np.atleast_1d(np.asarray(t, dtype=float))
        k = np.minimum((t * self.n).astype(int), self.n - 1)
        a = self.knots[k]
        x0, w0 = quadrature._legendre(self.order)
        half = 0.5 * (t - a)
        nodes = (a + half)[:, None] + half[:, None] * x0[None, :]
        vals = np.asarray(self.f(nodes.ravel()), dtype=float).reshape(nodes.shape)
        return self.values[k] + half * (vals @ w0)


@dataclass(frozen=True, eq=False)
class SigmaProfile:
    """sigma on [0, 1] with derivatives; ``d2sigma=None`` means finite differences."""

    name: str
    sigma: Callable
    dsigma: Callable
    d2sigma: Callable | None = None
    kind: str = "closed-form"
    params: tuple = field(default=())

    def d2(self, t):
        if self.d2sigma is not None:
            return self.d2sigma(t)
        h = 1e-4
        c = np.asarray(t, dtype=float)
        f = self.dsigma
        return (-f(c + 2 * h) + 8 * f(c + h) - 8 * f(c - h) + f(c - 2 * h)) / (12 * h)

    @property
    def sigma0(self) -> float:
        return float(self.sigma(0.0))

    @property
    def sigma1(self) -> float:
        return float(self.sigma(1.0))

    def is_constant(self) -> bool:
        return bool(np.all(self.dsigma(np.linspace(0, 1, 11)) == 0.0))

    @cached_property
    def _v(self) -> _Primitive:
        return _Primitive(self.sigma)

    @cached_property
    def _w(self) -> _Primitive:
        return _Primitive(self.w_prime)

    @cached_property
    def _J(self) -> _Primitive:
        return _Primitive(lambda s: 0.5 * self.sigma(s) ** 2)

    def w_prime(self, t):
        t = np.asarray(t, dtype=float)
        return W_CONST * np.cbrt(self.sigma(t)) * np.abs(self.dsigma(t)) ** (2.0 / 3.0)


# ------------------------------------------------------------------ registry

def linear(a: float = 2.0, b: float = 1.0) -> SigmaProfile:
    """sigma(s) = a - b s."""
    if not a - b > 0:
        raise SigmaError("linear profile must stay positive on [0, 1]")
    return SigmaProfile(
        name="linear2" if (a, b) == (2.0, 1.0) else f"linear:{a:g},{b:g}",
        sigma=lambda s: a - b * np.asarray(s, dtype=float),
        dsigma=lambda s: np.full(np.shape(s), -float(b)) if np.ndim(s) else -float(b),
        d2sigma=lambda s: np.zeros(np.shape(s)) if np.ndim(s) else 0.0,
        params=(a, b),
    )


def affine_power(a: float = 2.0, b: float = 0.5, p: float = 1.5) -> SigmaProfile:
    """sigma(s) = a (1 - b s)^p with 0 < b < 1, p > 0."""
    if not (0 < b < 1 and p > 0 and a > 0):
        raise SigmaError("affine-power profile needs a > 0, 0 < b < 1, p > 0")

    def sig(s):
        return a * (1 - b * np.asarray(s, dtype=float)) ** p

    def dsig(s):
        return -a * b * p * (1 - b * np.asarray(s, dtype=float)) ** (p - 1)

    def d2sig(s):
        return a * b * b * p * (p - 1) * (1 - b * np.asarray(s, dtype=float)) ** (p - 2)

    return SigmaProfile(f"power:{a:g},{b:g},{p:g}", sig, dsig, d2sig, params=(a, b, p))


def exponential(a: float = 2.0, b: float = 0.5) -> SigmaProfile:
    """sigma(s) = a exp(-b s)."""
    if not (a > 0 and b > 0):
        raise SigmaError("exponential profile needs a > 0, b > 0")

    def sig(s):
        return a * np.exp(-b * np.asarray(s, dtype=float))

    return SigmaProfile(
        f"exp:{a:g},{b:g}", sig, lambda s: -b * sig(s), lambda s: b * b * sig(s), params=(a, b)
    )


def constant(c: float = 1.0) -> SigmaProfile:
    """Constant variance; outside the admissible class, used for control runs."""
    if not c > 0:
        raise SigmaError("constant profile must be positive")
    return SigmaProfile(
        f"const:{c:g}",
        lambda s: np.full(np.shape(s), float(c)) if np.ndim(s) else float(c),
        lambda s: np.zeros(np.shape(s)) if np.ndim(s) else 0.0,
        lambda s: np.zeros(np.shape(s)) if np.ndim(s) else 0.0,
        kind="diagnostic",
        params=(c,),
    )


def tabulated(s, sig, dsig, d2sig, name: str = "table") -> SigmaProfile:
    """C^1 Hermite interpolant of sigma and of sigma' from derivative tables.

    sigma' is taken from its own Hermite spline (fed with sigma'') so that
    sigma'' is available; the two splines are cross-checked by finite
    differences and rejected if they disagree by more than 1e-4.
    """
    s, sig, dsig, d2sig = (np.asarray(a, dtype=float) for a in (s, sig, dsig, d2sig))
    if s.ndim != 1 or s.size < 4 or not (sig.shape == dsig.shape == d2sig.shape == s.shape):
        raise SigmaError("table needs matching columns with at least four rows")
    if abs(s[0]) > 1e-12 or abs(s[-1] - 1) > 1e-12 or np.any(np.diff(s) <= 0):
        raise SigmaError("table abscissae must increase from 0 to 1")
    f = CubicHermiteSpline(s, sig, dsig)
    df = CubicHermiteSpline(s, dsig, d2sig)
    d2f = df.derivative()
    mids = np.linspace(0.002, 0.998, 499)
    h = 1e-4
    fd = (f(mids + h) - f(mids - h)) / (2 * h)
    scale = max(1.0, float(np.max(np.abs(dsig))))
    if np.max(np.abs(fd - df(mids))) > 1e-4 * scale:
        raise SigmaError("derivative table inconsistent with sigma table")

    def wrap(g):
        return lambda t: g(np.asarray(t, dtype=float))[()]

    return SigmaProfile(name, wrap(f), wrap(df), wrap(d2f), kind="tabulated")


def load_table(path: str) -> SigmaProfile:
    """Whitespace columns ``s sigma dsigma d2sigma``; '#' starts a comment."""
    try:
        data = np.loadtxt(path, comments="#", ndmin=2)
    except OSError as exc:
        raise SigmaError(f"cannot read sigma table: {exc}") from exc
    except ValueError as exc:
        raise SigmaError(f"malformed sigma table: {exc}") from exc
    if data.shape[1] != 4:
        raise SigmaError("sigma table needs four columns: s sigma dsigma d2sigma")
    return tabulated(*data.T, name=f"table:{os.path.basename(path)}")


REGISTRY: dict[str, Callable[..., SigmaProfile]] = {
    "linear": linear,
    "power": affine_power,
    "exp": exponential,
    "const": constant,
}


def make_profile(spec: str) -> SigmaProfile:
    """Parse ``linear2``, ``linear:a,b``, ``power:a,b,p``, ``exp:a,b``, ``const:c`` or a table path."""
    spec = spec.strip()
    if spec == "linear2":
        return linear(2.0, 1.0)
    m = re.fullmatch(r"([a-z]+)(?::([-+0-9.eE,\s]*))?", spec)
    if m and m.group(1) in REGISTRY:
        args = [float(x) for x in m.group(2).split(",")] if m.group(2) else []
        try:
            return REGISTRY[m.group(1)](*args)
        except TypeError as exc:
            raise SigmaError(f"bad parameters for profile {m.group(1)!r}") from exc
    if os.path.exists(spec):
        return load_table(spec)
    raise SigmaError(f"unknown sigma profile {spec!r}")


# ---------------------------------------------------------------- membership

@dataclass(frozen=True)
class Membership:
    member: bool
    c0: float
    endpoint_margin: float
    curvature_margin: float
    slope_margin: float

    def as_dict(self) -> dict:
        return dict(self.__dict__)


def validate_sigma(profile: SigmaProfile, c0: float) -> Membership:
    """Check sigma(0) + 1/sigma(1) < c0, sup|sigma''| < c0, inf|sigma'| > 1/c0."""
    t = np.linspace(0.0, 1.0, VALIDATION_POINTS)
    ds = np.asarray(profile.dsigma(t), dtype=float) * np.ones_like(t)
    if np.any(ds >= 0):
        raise SigmaError("sigma not strictly decreasing")
    if not profile.sigma1 > 0:
        raise SigmaError("sigma must be positive on [0, 1]")
    d2 = np.asarray(profile.d2(t), dtype=float) * np.ones_like(t)
    e = c0 - (profile.sigma0 + 1.0 / profile.sigma1)
    c = c0 - float(np.max(np.abs(d2)))
    s = float(np.min(np.abs(ds))) - 1.0 / c0
    return Membership(e > 0 and c > 0 and s > 0, c0, e, c, s)


# --------------------------------------------------------------------- curves

def v_of(profile: SigmaProfile, t):
    tt = _as_time(t)
    return _scalar_out(t, profile._v(tt).reshape(np.shape(tt)))


def w_of(profile: SigmaProfile, t):
    tt = _as_time(t)
    return _scalar_out(t, profile._w(tt).reshape(np.shape(tt)))


def J_of(profile: SigmaProfile, t):
    tt = _as_time(t)
    return _scalar_out(t, profile._J(tt).reshape(np.shape(tt)))


def J_inverse(profile: SigmaProfile, y):
    """Solve J(t) = y by vectorised bisection."""
    y = np.asarray(y, dtype=float)
    J1 = J_of(profile, 1.0)
    if np.any(y < 0) or np.any(y > J1 * (1 + 1e-14)):
        raise SigmaError("value outside the range of J")
    lo = np.zeros(y.shape)
    hi = np.ones(y.shape)
    while np.max(hi - lo, initial=0.0) > BISECT_TOL:
        mid = 0.5 * (lo + hi)
        below = np.atleast_1d(profile._J(np.atleast_1d(mid))).reshape(mid.shape) < y
        lo = np.where(below, mid, lo)
        hi = np.where(below, hi, mid)
    return _scalar_out(y, 0.5 * (lo + hi))


def variance_increment(profile: SigmaProfile, T: float, t0, t1):
    """int_{t0}^{t1} sigma^2(s/T) ds for 0 <= t0 <= t1 <= T."""
    a = _as_time(np.asarray(t0, dtype=float) / T)
    b = _as_time(np.asarray(t1, dtype=float) / T)
    return 2.0 * T * (np.asarray(J_of(profile, b)) - np.asarray(J_of(profile, a)))


@dataclass(frozen=True)
class PredictionBundle:
    T: float
    v1: float
    w1: float
    m_prime: float
    sigma0: float
    sigma1: float

    def identity_gap(self) -> float:
        return self.m_prime - (self.v1 * self.T - self.w1 * self.T ** (1 / 3) - self.sigma1 * math.log(self.T))

    def as_dict(self) -> dict:
        return dict(self.__dict__)


def m_prime(profile: SigmaProfile, T: float) -> PredictionBundle:
    if not T >= 3:
        raise SigmaError("horizon too small")
    v1 = float(v_of(profile, 1.0))
    w1 = float(w_of(profile, 1.0))
    s1 = profile.sigma1
    m = v1 * T - w1 * T ** (1 / 3) - s1 * math.log(T)
    return PredictionBundle(float(T), v1, w1, m, profile.sigma0, s1)


def gamma(profile: SigmaProfile, T: float, t):
    """gamma_T(t) = T v(t/T) - T^(1/3) w(t/T) for t in [0, T]."""
    tt = _as_time(t, T)
    s = tt / T
    out = T * np.asarray(v_of(profile, s)) - T ** (1 / 3) * np.asarray(w_of(profile, s))
    return _scalar_out(t, out)


def gamma_prime(profile: SigmaProfile, T: float, t):
    tt = _as_time(t, T)
    s = tt / T
    out = profile.sigma(s) - T ** (-2 / 3) * profile.w_prime(s)
    return _scalar_out(t, np.asarray(out, dtype=float))


# ------------------------------------------------------------- glue and zeta

@dataclass(frozen=True)
class PhiParams:
    """Parabola a u^2 on [0, h/2] then a line of slope a h, u = t - (T - h)."""

    T: float
    h: float
    S: float
    a: float

    @property
    def start(self) -> float:
        return self.T - self.h

    def value(self, t):
        u = np.asarray(t, dtype=float) - self.start
        half = 0.5 * self.h
        out = np.where(u <= 0, 0.0, np.where(u <= half, self.a * u * u, self.a * half * half + self.a * self.h * (u - half)))
        return _scalar_out(t, out)

    def slope(self, t):
        u = np.asarray(t, dtype=float) - self.start
        out = np.where(u <= 0, 0.0, np.where(u <= 0.5 * self.h, 2 * self.a * u, self.a * self.h))
        return _scalar_out(t, out)

    def curvature(self, t):
        u = np.asarray(t, dtype=float) - self.start
        out = np.where((u > 0) & (u <= 0.5 * self.h), 2 * self.a, 0.0)
        return _scalar_out(t, out)

    def constraint_report(self, points: int = 10_000) -> dict:
        t = np.linspace(0.0, self.T, points)
        return {
            "zero_before_window": float(np.max(np.abs(self.value(t[t <= self.start])), initial=0.0)),
            "end_value_error": abs(float(self.value(self.T)) - self.S),
            "max_slope_over_bound": float(np.max(self.slope(t))) / (2 * self.S / self.h),
            "max_curvature_over_bound": float(np.max(self.curvature(t))) / (4 * self.S / self.h ** 2),
        }


def build_phi(profile: SigmaProfile, T: float) -> PhiParams:
    h = T ** (2 / 3)
    S = profile.sigma1 * math.log(T) if T > 0 else 0.0
    if not (S > 0 and h >= 8 and h <= T):
        raise SigmaError("horizon too small for glue")
    return PhiParams(float(T), h, S, 4 * S / (3 * h * h))


@dataclass(frozen=True)
class BarrierSpec:
    profile: SigmaProfile
    T: float
    K: float
    variant: str = "zeta"
    phi: PhiParams | None = None

    @property
    def in_regime(self) -> bool:
        """Whether K lies in [1, T^(1/3)]."""
        return 1.0 <= self.K <= self.T ** (1 / 3)


def barrier(profile: SigmaProfile, T: float, K: float, variant: str = "zeta") -> BarrierSpec:
    if variant not in ("gamma", "zeta"):
        raise SigmaError(f"unknown barrier variant {variant!r}")
    phi = build_phi(profile, T) if variant == "zeta" else None
    return BarrierSpec(profile, float(T), float(K), variant, phi)


def zeta(spec: BarrierSpec, t):
    """gamma_T + K, bent down by phi_T for the zeta variant."""
    g = np.asarray(gamma(spec.profile, spec.T, t)) + spec.K
    if spec.variant == "zeta":
        g = g - np.asarray(spec.phi.value(t))
    return _scalar_out(t, g)


# -------------------------------------------------------------- potential q_T

def _q_parts(profile: SigmaProfile, t: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    sig = np.asarray(profile.sigma(t), dtype=float)
    ds = np.asarray(profile.dsigma(t), dtype=float) * np.ones_like(t)
    d2 = np.asarray(profile.d2(t), dtype=float) * np.ones_like(t)
    lead = np.abs(ds) / sig ** 2
    ads = np.abs(ds)
    # (w'/sigma^2)' with w'/sigma^2 = W sigma^(-5/3) |sigma'|^(2/3) and |sigma'|' = sign(sigma') sigma''
    with np.errstate(divide="ignore", invalid="ignore"):
        corr = W_CONST * (
            (-5.0 / 3.0) * sig ** (-8.0 / 3.0) * ds * ads ** (2.0 / 3.0)
            + sig ** (-5.0 / 3.0) * (2.0 / 3.0) * ads ** (-1.0 / 3.0) * (np.sign(ds) * d2)
        )
    corr = np.where(ads > 0, corr, 0.0)
    return lead, corr


def positivity_threshold(profile: SigmaProfile) -> float:
    """Smallest T with q_T > 0 on the validation grid (0 if always positive)."""
    t = np.linspace(0.0, 1.0, VALIDATION_POINTS)
    lead, corr = _q_parts(profile, t)
    bad = corr < 0
    if not np.any(bad):
        return 0.0
    if np.any(lead[bad] <= 0):
        return math.inf
    return float(np.max(-corr[bad] / lead[bad]) ** 1.5)


def q_T(profile: SigmaProfile, T: float, t):
    """|sigma'|/sigma^2 + T^(-2/3) (w'/sigma^2)' at macroscopic time t."""
    tt = _as_time(t)
    grid = np.linspace(0.0, 1.0, VALIDATION_POINTS)
    lg, cg = _q_parts(profile, grid)
    if np.any(lg + T ** (-2 / 3) * cg <= 0):
        raise SigmaError("horizon too small for positive potential")
    lead, corr = _q_parts(profile, np.atleast_1d(tt))
    out = (lead + T ** (-2 / 3) * corr).reshape(np.shape(tt))
    if np.any(out <= 0):
        raise SigmaError("horizon too small for positive potential")
    return _scalar_out(t, out)


Q_TAGS = ("qT", "leading")


def Q_macro(profile: SigmaProfile, T: float, tag: str, s):
    """Q as a function of macroscopic time: q_T, or its leading term only."""
    if tag == "qT":
        return q_T(profile, T, s)
    if tag == "leading":
        tt = _as_time(s)
        lead, _ = _q_parts(profile, np.atleast_1d(tt))
        return _scalar_out(s, lead.reshape(np.shape(tt)))
    raise SigmaError(f"unknown Q tag {tag!r}")


def q_canonical(profile: SigmaProfile, T: float, tag: str, s):
    """q(s) with q(J(t)/J(1)) = 2 Q(t) / sigma^2(t), t macroscopic."""
    ss = _as_time(s)
    t = J_inverse(profile, ss * J_of(profile, 1.0))
    q = 2.0 * np.asarray(Q_macro(profile, T, tag, t)) / np.asarray(profile.sigma(t)) ** 2
    return _scalar_out(s, q)


def s0(profile: SigmaProfile, T: float) -> float:
    """s_0 = J^{-1}(4 T^(-1/3)) T, the start of the late window."""
    y = 4 * T ** (-1 / 3)
    if y > J_of(profile, 1.0):
        raise SigmaError("horizon too small")
    return float(J_inverse(profile, y)) * T


def s0_bracket(profile: SigmaProfile) -> tuple[float, float]:
    """Bounds on s_0 / T^(2/3) from sigma(1) <= sigma <= sigma(0)."""
    return 8.0 / profile.sigma0 ** 2, 8.0 / profile.sigma1 ** 2
