"""Homogeneous branching Brownian motion with unit variance and drift +1.

At this drift the additive martingale is W_t = sum e^{-X} and the derivative
martingale is D_t = sum X e^{-X}.  The derivative Gibbs measure puts weight
X e^{-X} at X/sqrt(t); its normalised version is compared with the BES(3)
time-one density rho(x) = sqrt(2/pi) x^2 e^{-x^2/2}.

Particles are optionally absorbed below a level (a pruning floor, or 0 for the
killed process).  Absorption uses the exact Brownian-bridge crossing
probability between segment endpoints, so it is continuous-time killing, not
a grid check.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from numba import njit
from scipy import special, stats

from . import rng
from .offspring import OffspringLaw, binary

MAX_TIME = 25.0
DEFAULT_CAP = 2_000_000


class GibbsError(ValueError):
    pass


class PopulationCapError(GibbsError):
    pass


# ------------------------------------------------------------------- kernel

@njit(cache=True)
def _homog(state, t_end, dt, beta0, ks, cdf, absorb, level, x0, cap):
    """Positions at t_end; the second value is 0 on success, 1 if the cap was hit."""
    capacity = 256
    pos = np.empty(capacity)
    nextb = np.empty(capacity)
    start = np.empty(capacity)
    pos[0] = x0
    nextb[0] = rng.exponential(state, beta0)
    n = 1
    nsteps = int(math.ceil(t_end / dt - 1e-9))
    for m in range(nsteps):
        t0 = m * dt
        t1 = min((m + 1) * dt, t_end)
        for i in range(n):
            start[i] = t0
        i = 0
        while i < n:
            s = start[i]
            x = pos[i]
            nb = nextb[i]
            alive = True
            while True:
                e = nb if nb < t1 else t1
                h = e - s
                xe = x + h + math.sqrt(h) * rng.normal(state)
                if absorb:
                    if xe <= level:
                        alive = False
                    elif h > 0.0:
                        if rng.uniform(state) < math.exp(-2.0 * (x - level) * (xe - level) / h):
                            alive = False
                x = xe
                s = e
                if not alive:
                    break
                if nb < t1:
                    u = rng.uniform(state)
                    j = 0
                    while j < cdf.size - 1 and u > cdf[j]:
                        j += 1
                    kids = ks[j]
                    if n + kids - 1 > capacity:
                        newcap = max(2 * capacity, n + kids)
                        pos = np.concatenate((pos, np.empty(newcap - capacity)))
                        nextb = np.concatenate((nextb, np.empty(newcap - capacity)))
                        start = np.concatenate((start, np.empty(newcap - capacity)))
                        capacity = newcap
                    for c in range(kids - 1):
                        pos[n] = x
                        start[n] = s
                        nextb[n] = s + rng.exponential(state, beta0)
                        n += 1
                    nb = s + rng.exponential(state, beta0)
                    continue
                break
            if alive:
                pos[i] = x
                nextb[i] = nb
                i += 1
            else:
                # swap in the last particle; it may not have been advanced yet
                n -= 1
                if i < n:
                    pos[i] = pos[n]
                    nextb[i] = nextb[n]
                    start[i] = start[n]
        if n > cap:
            return pos[:n].copy(), 1
    return pos[:n].copy(), 0


# --------------------------------------------------------------- measures

@dataclass
class EmpiricalMeasure:
    """Atoms X/sqrt(t) with weights X e^{-X}; ``positions`` keeps the raw X."""

    locations: np.ndarray
    weights: np.ndarray
    t: float
    positions: np.ndarray

    @property
    def total(self) -> float:
        return float(np.sum(self.weights))

    @property
    def D(self) -> float:
        return self.total

    @property
    def W(self) -> float:
        return float(np.sum(np.exp(-self.positions)))

    @property
    def negative_mass(self) -> float:
        return float(-np.sum(self.weights[self.weights < 0]))


def measure_from_positions(x: np.ndarray, t: float) -> EmpiricalMeasure:
    x = np.asarray(x, dtype=float)
    loc = x / math.sqrt(t) if t > 0 else np.zeros_like(x)
    return EmpiricalMeasure(loc, x * np.exp(-x), float(t), x)


def pool(measures) -> EmpiricalMeasure:
    ms = list(measures)
    return EmpiricalMeasure(
        np.concatenate([m.locations for m in ms]),
        np.concatenate([m.weights for m in ms]),
        ms[0].t,
        np.concatenate([m.positions for m in ms]),
    )


class BesselReference:
    """Time-one law of a BES(3) process started at 0."""

    mode = math.sqrt(2.0)

    @staticmethod
    def pdf(x):
        x = np.asarray(x, dtype=float)
        return np.where(x > 0, math.sqrt(2 / math.pi) * x * x * np.exp(-0.5 * x * x), 0.0)

    @staticmethod
    def cdf(x):
        x = np.asarray(x, dtype=float)
        xp = np.maximum(x, 0.0)
        return np.where(x > 0, special.erf(xp / math.sqrt(2)) - math.sqrt(2 / math.pi) * xp * np.exp(-0.5 * xp * xp), 0.0)

    @staticmethod
    def ppf(q):
        q = np.atleast_1d(np.asarray(q, dtype=float))
        # chi distribution with 3 degrees of freedom
        return stats.chi.ppf(q, 3)


def normalized_distance(measure: EmpiricalMeasure, ref: BesselReference = BesselReference()) -> float:
    """Kolmogorov-Smirnov distance between measure/total and the reference CDF."""
    total = measure.total
    if not total > 0:
        raise GibbsError("degenerate replica")
    order = np.argsort(measure.locations, kind="stable")
    loc = measure.locations[order]
    w = measure.weights[order] / total
    cum = np.cumsum(w)
    uniq, last = np.unique(loc[::-1], return_index=True)
    after = cum[::-1][last]  # empirical CDF at each distinct location
    idx = np.searchsorted(loc, uniq, side="left")
    before = np.where(idx > 0, cum[np.maximum(idx - 1, 0)], 0.0)
    F = ref.cdf(uniq)
    return float(max(np.max(np.abs(after - F)), np.max(np.abs(before - F))))


# -------------------------------------------------------------- simulation

def _check(t, floor):
    if not 0 <= t <= MAX_TIME:
        raise GibbsError(f"time must lie in [0, {MAX_TIME:g}]")


def simulate_homog(t: float, law: OffspringLaw = binary(), floor: float | None = -5.0, seed: int = 0,
                   replica: int = 0, dt: float = 0.1, x0: float = 0.0, cap: int = DEFAULT_CAP) -> EmpiricalMeasure:
    """Drifted BBM at time t; particles touching ``floor`` are removed (None keeps all)."""
    _check(t, floor)
    if t == 0:
        return measure_from_positions(np.array([x0]), 0.0)
    ks, cdf = law.cdf_table()
    state = np.array([rng.stream_key(np.uint64(seed), np.uint64(replica))], dtype=np.uint64)
    absorb = floor is not None
    x, status = _homog(state, float(t), float(dt), law.beta0, ks, cdf, absorb,
                       float(floor) if absorb else 0.0, float(x0), int(cap))
    if status:
        raise PopulationCapError("population cap exceeded: reduce t or raise floor")
    return measure_from_positions(x, t)


def replicas_homog(t: float, replicas: int, seed: int, law: OffspringLaw = binary(), floor: float | None = -5.0,
                   x0: float = 0.0) -> list[EmpiricalMeasure]:
    return [simulate_homog(t, law, floor, seed, r, x0=x0) for r in range(replicas)]


@dataclass
class GibbsReport:
    t: float
    replicas: int
    degenerate: int
    ks: float
    negative_mass_fraction: float
    D_mean: float
    D_stderr: float
    W_mean: float
    per_replica_D: np.ndarray
    per_replica_ks: np.ndarray
    ks_equal: float
    mean_location: float
    pooled: EmpiricalMeasure | None = None

    def as_dict(self) -> dict:
        return {
            "t": self.t, "replicas": self.replicas, "degenerate": self.degenerate, "ks": self.ks,
            "ks_equal_weight": self.ks_equal, "mean_location": self.mean_location,
            "reference_mean_location": 2 * math.sqrt(2 / math.pi),
            "negative_mass_fraction": self.negative_mass_fraction, "D_mean": self.D_mean,
            "D_stderr": self.D_stderr, "W_mean": self.W_mean,
        }


def gibbs_report(t: float, replicas: int, seed: int, law: OffspringLaw = binary(), floor: float | None = -5.0) -> GibbsReport:
    """Pooled KS distance to rho, pooling replicas with positive D_t (each weighted by D_t)."""
    ms = replicas_homog(t, replicas, seed, law, floor)
    D = np.array([m.D for m in ms])
    good = [m for m in ms if m.D > 0]
    if not good:
        raise GibbsError("degenerate replica")
    per_ks = np.array([normalized_distance(m) if m.D > 0 else np.nan for m in ms])
    pooled = pool(good)
    neg = pooled.negative_mass / max(pooled.total, 1e-300)
    equal = EmpiricalMeasure(pooled.locations, np.concatenate([m.weights / m.D for m in good]), t, pooled.positions)
    mean_loc = float(np.sum(pooled.locations * pooled.weights) / pooled.total)
    return GibbsReport(float(t), replicas, replicas - len(good), normalized_distance(pooled), neg,
                       float(D.mean()), float(D.std(ddof=1) / math.sqrt(D.size)),
                       float(np.mean([m.W for m in ms])), D, per_ks, normalized_distance(equal), mean_loc, pooled)


def bootstrap_ks(measures, resamples: int = 100, seed: int = 0, level: float = 0.95) -> tuple[float, float]:
    """Percentile interval for the pooled KS distance, resampling replicas."""
    good = [m for m in measures if m.D > 0]
    gen = np.random.default_rng(seed)
    vals = []
    for _ in range(resamples):
        pick = gen.integers(0, len(good), len(good))
        vals.append(normalized_distance(pool([good[i] for i in pick])))
    a = (1 - level) / 2
    return float(np.quantile(vals, a)), float(np.quantile(vals, 1 - a))


def martingale_means(times, replicas: int, seed: int, law: OffspringLaw = binary(), floor: float | None = None) -> dict:
    """MC mean and standard error of D_t and W_t at each time."""
    out = {}
    for t in times:
        ms = replicas_homog(t, replicas, seed, law, floor)
        D = np.array([m.D for m in ms])
        W = np.array([m.W for m in ms])
        row = {
            "D_mean": float(D.mean()), "D_stderr": float(D.std(ddof=1) / math.sqrt(D.size)),
            "W_mean": float(W.mean()), "W_stderr": float(W.std(ddof=1) / math.sqrt(W.size)),
        }
        if floor is not None:
            # sum (X - floor) e^{-X} is an exact martingale of the absorbed process, mean -floor
            C = D - floor * W
            row.update(compensated_mean=float(C.mean()), compensated_stderr=float(C.std(ddof=1) / math.sqrt(C.size)))
        out[float(t)] = row
    return out


def expected_D_with_floor(a: float, t: float) -> float:
    """E[D_t] from the origin with absorption at -a: 2 a Phi(-a/sqrt(t))."""
    return 2.0 * a * float(stats.norm.cdf(-a / math.sqrt(t)))


@dataclass
class SecondMoment:
    x: float
    t: float
    replicas: int
    mean: float
    stderr: float
    mean_D: float
    mean_D_stderr: float
    samples: np.ndarray = field(default=None, repr=False)

    @property
    def ci(self) -> tuple[float, float]:
        return max(0.0, self.mean - 1.96 * self.stderr), self.mean + 1.96 * self.stderr

    @property
    def scaled(self) -> float:
        return self.mean * math.exp(self.x)

    def as_dict(self) -> dict:
        lo, hi = self.ci
        return {"x": self.x, "t": self.t, "replicas": self.replicas, "estimate": self.mean, "stderr": self.stderr,
                "ci_low": lo, "ci_high": hi, "scaled": self.scaled, "mean_D": self.mean_D}


def second_moment_killed(x: float, t: float, law: OffspringLaw = binary(), replicas: int = 10_000, seed: int = 0) -> SecondMoment:
    """E_x[D_t^2] for the process absorbed at 0."""
    if not x > 0:
        raise GibbsError("starting point must be positive")
    D = np.array([simulate_homog(t, law, 0.0, seed, r, x0=x).D for r in range(replicas)])
    D2 = D * D
    return SecondMoment(float(x), float(t), replicas, float(D2.mean()), float(D2.std(ddof=1) / math.sqrt(replicas)),
                        float(D.mean()), float(D.std(ddof=1) / math.sqrt(replicas)), D)
