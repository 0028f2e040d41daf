"""Pruned Monte Carlo for branching Brownian motion with variance sigma^2(t/T).

Particles move with exact Gaussian increments over the variance clock
V(t) = int_0^t sigma^2(s/T) ds and branch at exact exponential(beta0) times.
Positions are advanced in macro steps; barrier checks happen on a fine grid
of spacing h.  Between two known points a path is refined on the fine grid by
sampling the Brownian bridge in V-time, but only when the bridge could reach
the level being watched with probability above ``BRIDGE_SKIP``; otherwise the
interior grid points are provably irrelevant to that tolerance.

Pruning happens at macro-step ends.  The default rule removes particles more
than delta below the current leader.  Alternatives: ``"gamma"`` prunes below
gamma_T(t) - delta (at desk-scale T most replicas lag gamma_T by more than
delta early on and die out), ``"leader-scaled"`` uses delta sigma(t/T)/sigma(0)
(cheaper, but its bias does not settle as delta grows).
"""
from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from numba import njit
from scipy import stats

from . import rng
from . import sigma as sig
from .offspring import OffspringLaw, binary, parse_law

BRIDGE_SKIP = 1e-12
EXCESS_FLOOR = 0.9
LEVEL_MARGIN = 0.01
PRUNE_RULES = {"none": -1, "leader-scaled": 0, "gamma": 1, "leader": 2}

STATUS_OK, STATUS_CAP, STATUS_EXTINCT = 0, 1, 2


class MonteCarloError(ValueError):
    pass


class PopulationCapError(MonteCarloError):
    """The population guard tripped; a numerical-guard failure rather than bad input."""


# ------------------------------------------------------------------- kernel

@njit(cache=True)
def _v_at(t, h, V, s2):
    nk = V.size - 1
    k = int(t / h)
    if k >= nk:
        k = nk - 1
    if k < 0:
        k = 0
    th = (t - k * h) / h
    th2 = th * th
    th3 = th2 * th
    return ((2 * th3 - 3 * th2 + 1) * V[k] + (th3 - 2 * th2 + th) * h * s2[k]
            + (-2 * th3 + 3 * th2) * V[k + 1] + (th3 - th2) * h * s2[k + 1])


@njit(cache=True)
def _lin(t, h, tab):
    nk = tab.size - 1
    k = int(t / h)
    if k >= nk:
        k = nk - 1
    th = (t - k * h) / h
    return tab[k] + th * (tab[k + 1] - tab[k])


@njit(cache=True)
def _skip_prob(e0, e1, a, var):
    if e0 >= a or e1 >= a:
        return 1.0
    if var <= 0.0:
        return 0.0
    return math.exp(-2.0 * (a - e0) * (a - e1) / var)


@njit(cache=True)
def _replica(state, T, h, steps_per_macro, V, s2, gam, zet, sratio, beta0, ks, cdf,
             delta, rule, cap, want_zeta, nt_lo, nt_hi, gaps, lineage_only):
    """One replica; returns (M, excess, NT, population, pruned, status, ngaps).

    ``lineage_only`` discards offspring so that slot 0 is a single line of descent.
    """
    nk = V.size - 1
    capacity = 1024
    pos = np.zeros(capacity)
    start = np.zeros(capacity)
    nextb = np.zeros(capacity)
    flag = np.zeros(capacity, dtype=np.bool_)
    n = 1
    nextb[0] = rng.exponential(state, beta0)
    r = -1e300
    pruned = 0
    ngaps = 0
    last_branch0 = 0.0
    lineage0 = True
    H = steps_per_macro * h
    nmacro = int(math.ceil(nk / steps_per_macro - 1e-9))
    for m in range(nmacro):
        t0 = m * H
        k1 = min((m + 1) * steps_per_macro, nk)
        t1 = k1 * h
        for i in range(n):
            start[i] = t0
        i = 0
        while i < n:
            s = start[i]
            x = pos[i]
            nb = nextb[i]
            fl = flag[i]
            while True:
                e = nb if nb < t1 else t1
                Vs = _v_at(s, h, V, s2)
                Ve = V[k1] if e == t1 else _v_at(e, h, V, s2)
                var = Ve - Vs
                xe = x + math.sqrt(max(var, 0.0)) * rng.normal(state)
                kA = int(math.floor(s / h + 1e-9)) + 1
                kB = int(math.floor(e / h + 1e-9))
                if kB > nk:
                    kB = nk
                if kA <= kB:
                    a1 = max(r, EXCESS_FLOOR) - LEVEL_MARGIN
                    p = _skip_prob(x - _lin(s, h, gam), xe - _lin(e, h, gam), a1, var)
                    if want_zeta and not fl:
                        p = max(p, _skip_prob(x - _lin(s, h, zet), xe - _lin(e, h, zet), -LEVEL_MARGIN, var))
                    on_grid = abs(e - kB * h) < 1e-9
                    if p >= BRIDGE_SKIP:
                        sa = s
                        xa = x
                        Va = Vs
                        for k in range(kA, kB + 1):
                            if k == kB and on_grid:
                                val = xe
                            else:
                                Vk = V[k]
                                w = (Vk - Va) / (Ve - Va) if Ve > Va else 0.0
                                sd = math.sqrt(max((Vk - Va) * (Ve - Vk) / (Ve - Va), 0.0)) if Ve > Va else 0.0
                                val = xa + w * (xe - xa) + sd * rng.normal(state)
                                sa = k * h
                                xa = val
                                Va = Vk
                            if val - gam[k] > r:
                                r = val - gam[k]
                            if want_zeta and val > zet[k]:
                                fl = True
                    elif on_grid:
                        if xe - gam[kB] > r:
                            r = xe - gam[kB]
                        if want_zeta and xe > zet[kB]:
                            fl = True
                x = xe
                s = e
                if nb < t1:
                    u = rng.uniform(state)
                    j = 0
                    while j < cdf.size - 1 and u > cdf[j]:
                        j += 1
                    nkids = ks[j]
                    if lineage_only:
                        nkids = 1
                    if n + nkids - 1 > capacity:
                        newcap = max(2 * capacity, n + nkids)
                        pos = np.concatenate((pos, np.zeros(newcap - capacity)))
                        start = np.concatenate((start, np.zeros(newcap - capacity)))
                        nextb = np.concatenate((nextb, np.zeros(newcap - capacity)))
                        flag = np.concatenate((flag, np.zeros(newcap - capacity, dtype=np.bool_)))
                        capacity = newcap
                    for c in range(nkids - 1):
                        pos[n] = x
                        start[n] = s
                        nextb[n] = s + rng.exponential(state, beta0)
                        flag[n] = fl
                        n += 1
                    if i == 0 and lineage0 and ngaps < gaps.size:
                        gaps[ngaps] = s - last_branch0
                        ngaps += 1
                        last_branch0 = s
                    nb = s + rng.exponential(state, beta0)
                    continue
                break
            pos[i] = x
            nextb[i] = nb
            flag[i] = fl
            i += 1
        if n > cap:
            return np.nan, r, -1, n, pruned, STATUS_CAP, ngaps
        if rule >= 0:
            lead = pos[0]
            for i in range(1, n):
                if pos[i] > lead:
                    lead = pos[i]
            if rule == 0:
                cut = lead - delta * sratio[k1]
            elif rule == 2:
                cut = lead - delta
            else:
                cut = gam[k1] - delta
            keep = 0
            for i in range(n):
                if pos[i] >= cut:
                    pos[keep] = pos[i]
                    nextb[keep] = nextb[i]
                    flag[keep] = flag[i]
                    keep += 1
                elif i == 0:
                    lineage0 = False
            pruned += n - keep
            n = keep
            if n == 0:
                return np.nan, r, 0, 0, pruned, STATUS_EXTINCT, ngaps
    M = pos[0]
    nt = 0
    for i in range(n):
        if pos[i] > M:
            M = pos[i]
        if want_zeta and (not flag[i]) and nt_lo <= pos[i] <= nt_hi:
            nt += 1
    return M, r, nt, n, pruned, STATUS_OK, ngaps


@njit(cache=True)
def _batch(seed, replicas, T, h, spm, V, s2, gam, zet, sratio, beta0, ks, cdf,
           delta, rule, cap, want_zeta, nt_lo, nt_hi):
    n = replicas.size
    M = np.empty(n)
    ex = np.empty(n)
    NT = np.empty(n, dtype=np.int64)
    pop = np.empty(n, dtype=np.int64)
    pr = np.empty(n, dtype=np.int64)
    status = np.empty(n, dtype=np.int64)
    nogaps = np.empty(0)
    state = np.zeros(1, dtype=np.uint64)
    for j in range(n):
        state[0] = rng.stream_key(seed, replicas[j])
        out = _replica(state, T, h, spm, V, s2, gam, zet, sratio, beta0, ks, cdf,
                       delta, rule, cap, want_zeta, nt_lo, nt_hi, nogaps, False)
        M[j], ex[j], NT[j], pop[j], pr[j], status[j] = out[0], out[1], out[2], out[3], out[4], out[5]
    return M, ex, NT, pop, pr, status


# --------------------------------------------------------------- set-up

@dataclass(frozen=True)
class MCConfig:
    sigma: str = "linear2"
    T: float = 40.0
    delta: float = 10.0
    law: str = "2"
    prune: str = "leader"
    h: float = 0.01
    macro: float = 0.16
    cap: int = 10_000_000
    zeta_K: float | None = None
    max_T: float = 60.0

    def __post_init__(self):
        if self.prune not in PRUNE_RULES:
            raise MonteCarloError(f"unknown pruning rule {self.prune!r}")
        if not 0 < self.h <= 0.01:
            raise MonteCarloError("fine step must lie in (0, 0.01]")
        if not self.T > 0:
            raise MonteCarloError("horizon must be positive")
        if self.T > self.max_T:
            raise MonteCarloError("horizon beyond desk-scale cap")
        if self.delta < 0:
            raise MonteCarloError("pruning depth must be nonnegative")


@dataclass
class _Tables:
    V: np.ndarray
    s2: np.ndarray
    gam: np.ndarray
    zet: np.ndarray
    sratio: np.ndarray
    spm: int
    h: float
    nt_lo: float
    nt_hi: float


def _tables(cfg: MCConfig) -> _Tables:
    profile = sig.make_profile(cfg.sigma)
    nk = int(round(cfg.T / cfg.h))
    h = cfg.T / nk
    t = h * np.arange(nk + 1)
    s = t / cfg.T
    V = 2.0 * cfg.T * np.asarray(sig.J_of(profile, s))
    sg = np.asarray(profile.sigma(s), dtype=float)
    gam = np.asarray(sig.gamma(profile, cfg.T, t), dtype=float)
    zet = np.full(nk + 1, np.inf)
    lo = hi = 0.0
    if cfg.zeta_K is not None:
        spec = sig.barrier(profile, cfg.T, cfg.zeta_K, "zeta")
        zet = np.asarray(sig.zeta(spec, t), dtype=float)
        lo, hi = zet[-1] - 2.0, zet[-1] - 1.0
    spm = max(1, int(round(cfg.macro / h)))
    return _Tables(V, sg ** 2, gam, zet, sg / sg[0], spm, h, lo, hi)


def step_increment(t: float, dt: float, profile: sig.SigmaProfile, T: float, stream: rng.Stream, size: int | None = None):
    """Gaussian increment with variance int_t^{t+dt} sigma^2(s/T) ds."""
    if not dt > 0 or t + dt > T * (1 + 1e-12):
        raise MonteCarloError("need dt > 0 and t + dt <= T")
    var = float(sig.variance_increment(profile, T, t, t + dt))
    z = stream.normal(1 if size is None else size)
    out = math.sqrt(var) * z
    return float(out[0]) if size is None else out


# ---------------------------------------------------------------- results

@dataclass
class RunStatistics:
    config: MCConfig
    seed: int
    replicas: np.ndarray
    M: np.ndarray
    excess: np.ndarray
    NT: np.ndarray
    population: np.ndarray
    pruned: np.ndarray
    status: np.ndarray

    @property
    def ok(self) -> np.ndarray:
        return self.status == STATUS_OK

    @property
    def extinct_fraction(self) -> float:
        return float(np.mean(self.status == STATUS_EXTINCT))

    def median_M(self) -> float:
        return float(np.median(self.M[self.ok]))


@dataclass
class ReplicaResult:
    M: float
    excess: float
    NT: int
    population: int
    pruned: int
    status: int
    gaps: np.ndarray = field(default_factory=lambda: np.empty(0))


def _run_chunk(args):
    cfg, seed, idx = args
    tb = _tables(cfg)
    law = parse_law(cfg.law)
    ks, cdf = law.cdf_table()
    out = _batch(np.uint64(seed), idx.astype(np.int64), cfg.T, tb.h, tb.spm, tb.V, tb.s2, tb.gam, tb.zet,
                 tb.sratio, law.beta0, ks, cdf, float(cfg.delta), PRUNE_RULES[cfg.prune], int(cfg.cap),
                 cfg.zeta_K is not None, tb.nt_lo, tb.nt_hi)
    return idx, out


def run_replicas(cfg: MCConfig, replicas: int, seed: int, workers: int = 1, chunk: int | None = None) -> RunStatistics:
    """Simulate replicas 0..replicas-1; the merge is keyed by replica index."""
    if replicas < 1:
        raise MonteCarloError("need at least one replica")
    idx = np.arange(replicas, dtype=np.int64)
    chunk = chunk or max(1, -(-replicas // max(1, 4 * workers)))
    parts = [(cfg, seed, idx[i:i + chunk]) for i in range(0, replicas, chunk)]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as ex:
            results = list(ex.map(_run_chunk, parts))
    else:
        results = [_run_chunk(p) for p in parts]
    cols = [np.empty(replicas), np.empty(replicas)] + [np.empty(replicas, dtype=np.int64) for _ in range(4)]
    for ids, out in results:
        for c, v in zip(cols, out):
            c[ids] = v
    st = RunStatistics(cfg, int(seed), idx, *cols)
    if np.any(st.status == STATUS_CAP):
        raise PopulationCapError("pruning depth too large for horizon")
    return st


def simulate_replica(cfg: MCConfig, seed: int, replica: int = 0, record_gaps: int = 0, lineage_only: bool = False) -> ReplicaResult:
    tb = _tables(cfg)
    law = parse_law(cfg.law)
    ks, cdf = law.cdf_table()
    state = np.array([rng.stream_key(np.uint64(seed), np.uint64(replica))], dtype=np.uint64)
    gaps = np.empty(int(record_gaps))
    M, ex, nt, pop, pr, status, ng = _replica(
        state, cfg.T, tb.h, tb.spm, tb.V, tb.s2, tb.gam, tb.zet, tb.sratio, law.beta0, ks, cdf,
        float(cfg.delta), PRUNE_RULES[cfg.prune], int(cfg.cap), cfg.zeta_K is not None, tb.nt_lo, tb.nt_hi, gaps,
        lineage_only)
    if status == STATUS_CAP:
        raise PopulationCapError("pruning depth too large for horizon")
    return ReplicaResult(float(M), float(ex), int(nt), int(pop), int(pr), int(status), gaps[:ng].copy())


# ------------------------------------------------------------- estimators

def wilson(k: int, n: int, level: float = 0.95) -> tuple[float, float]:
    ci = stats.binomtest(int(k), int(n)).proportion_ci(confidence_level=level, method="wilson")
    return float(ci.low), float(ci.high)


@dataclass
class TailEstimate:
    Ks: np.ndarray
    counts: np.ndarray
    n: int
    p: np.ndarray
    ci_low: np.ndarray
    ci_high: np.ndarray
    slope: float
    slope_stderr: float
    fitted: np.ndarray
    in_regime: np.ndarray
    reference: float = math.nan
    ratio: np.ndarray | None = None

    @property
    def ratio_band(self) -> float:
        r = self.ratio[self.counts > 0]
        return float(r.max() / r.min())

    @property
    def monotone(self) -> bool:
        return bool(np.all(np.diff(self.p) <= 0))

    def as_dict(self) -> dict:
        d = {
            "K": self.Ks.tolist(), "count": self.counts.tolist(), "n": self.n, "p": self.p.tolist(),
            "ci_low": self.ci_low.tolist(), "ci_high": self.ci_high.tolist(), "slope": self.slope,
            "slope_stderr": self.slope_stderr, "in_regime": self.in_regime.tolist(), "reference": self.reference,
        }
        if self.ratio is not None:
            d["ratio"] = self.ratio.tolist()
            d["ratio_band"] = self.ratio_band
        return d


def _check_K(Ks) -> np.ndarray:
    Ks = np.asarray(Ks, dtype=float)
    if Ks.size == 0 or np.any(Ks < 1):
        raise MonteCarloError("K below validity regime (need K >= 1)")
    return Ks


def _estimate(values: np.ndarray, Ks: np.ndarray, T: float, reference: float = math.nan) -> TailEstimate:
    n = values.size
    counts = np.array([int(np.sum(values >= K)) for K in Ks])
    p = counts / n
    lo_hi = np.array([wilson(c, n) for c in counts])
    use = counts > 0
    slope, se = math.nan, math.nan
    if use.sum() >= 2:
        y = np.log(p[use]) - np.log(Ks[use])
        res = stats.linregress(Ks[use], y)
        slope, se = float(res.slope), float(res.stderr)
    return TailEstimate(Ks, counts, n, p, lo_hi[:, 0], lo_hi[:, 1], slope, se, use, Ks <= T ** (1 / 3), reference)


def crossing_probability(run: RunStatistics, Ks) -> TailEstimate:
    """P(some particle exceeds gamma_T(t) + K at a fine-grid time) per K."""
    Ks = _check_K(Ks)
    return _estimate(run.excess[run.ok], Ks, run.config.T)


def tail_estimate(run: RunStatistics, Ks) -> TailEstimate:
    """P(M_T >= median + K) per K, with the ratio to K exp(-K/sigma(0))."""
    Ks = _check_K(Ks)
    M = run.M[run.ok]
    med = float(np.median(M))
    est = _estimate(M - med, Ks, run.config.T, med)
    s0 = sig.make_profile(run.config.sigma).sigma0
    est.ratio = est.p / (Ks * np.exp(-Ks / s0))
    return est


def population_check(t: float = 8.0, replicas: int = 4000, seed: int = 1, law: str = "2") -> dict:
    """Mean unpruned population at time t against e^(t/2)."""
    cfg = MCConfig(sigma="const:1", T=t, delta=0.0, law=law, prune="none", macro=0.5)
    run = run_replicas(cfg, replicas, seed)
    pop = run.population.astype(float)
    mean = float(pop.mean())
    se = float(pop.std(ddof=1) / math.sqrt(pop.size))
    target = math.exp(t / 2)
    return {"t": t, "mean": mean, "stderr": se, "target": target, "z": (mean - target) / se}


def branch_gaps(n: int = 10_000, seed: int = 3, law: str = "2", per_replica: int = 10) -> np.ndarray:
    """Inter-branch gaps along one line of descent.

    Only the first ``per_replica`` gaps of each 60-unit lineage are kept, so
    censoring by the horizon has probability about 1e-5 at beta0 = 1/2.
    """
    cfg = MCConfig(sigma="const:1", T=60.0, delta=0.0, law=law, prune="none", macro=1.0)
    gaps = []
    replica = 0
    while len(gaps) < n:
        gaps.extend(simulate_replica(cfg, seed, replica, record_gaps=per_replica, lineage_only=True).gaps.tolist())
        replica += 1
    return np.asarray(gaps[:n])


def pruning_bias(cfg: MCConfig, replicas: int, seed: int, extra: float = 2.0, workers: int = 1) -> dict:
    """Median of M_T at depth delta and delta + extra."""
    a = run_replicas(cfg, replicas, seed, workers)
    b_cfg = MCConfig(**{**cfg.__dict__, "delta": cfg.delta + extra})
    b = run_replicas(b_cfg, replicas, seed, workers)
    ma, mb = a.median_M(), b.median_M()
    return {"delta": cfg.delta, "median": ma, "delta_plus": cfg.delta + extra, "median_plus": mb, "gap": abs(mb - ma)}
