"""Offspring laws L >= 2 with finite support."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np


class LawError(ValueError):
    pass


@dataclass(frozen=True)
class OffspringLaw:
    """pmf on {2, 3, ...}; the branching rate beta0 = 1 / (2 (E[L] - 1)) makes E[N(t)] = e^(t/2)."""

    ks: tuple
    probs: tuple

    def __post_init__(self):
        if len(self.ks) != len(self.probs) or not self.ks:
            raise LawError("offspring law needs matching support and probabilities")
        if any(int(k) != k or k < 2 for k in self.ks):
            raise LawError("offspring support must be integers >= 2")
        if len(set(self.ks)) != len(self.ks):
            raise LawError("repeated offspring count")
        if any(p < 0 for p in self.probs) or abs(sum(self.probs) - 1.0) > 1e-12:
            raise LawError("offspring probabilities must be nonnegative and sum to 1")

    @property
    def mean(self) -> float:
        return float(sum(k * p for k, p in zip(self.ks, self.probs)))

    @property
    def factorial_moment2(self) -> float:
        return float(sum(k * (k - 1) * p for k, p in zip(self.ks, self.probs)))

    @property
    def beta0(self) -> float:
        return 1.0 / (2.0 * (self.mean - 1.0))

    @property
    def is_binary(self) -> bool:
        return self.ks == (2,)

    def pgf(self, s):
        """E[s^L]."""
        s = np.asarray(s, dtype=float)
        return sum(p * s ** k for k, p in zip(self.ks, self.probs))

    def arrays(self) -> tuple[np.ndarray, np.ndarray]:
        return np.asarray(self.ks, dtype=np.int64), np.asarray(self.probs, dtype=np.float64)

    def cdf_table(self) -> tuple[np.ndarray, np.ndarray]:
        ks, ps = self.arrays()
        cdf = np.cumsum(ps)
        cdf[-1] = 1.0
        return ks, cdf

    def spec(self) -> str:
        if self.is_binary:
            return "2"
        return ",".join(f"{k}:{p:.17g}" for k, p in zip(self.ks, self.probs))


def binary() -> OffspringLaw:
    return OffspringLaw((2,), (1.0,))


def parse_law(spec: str) -> OffspringLaw:
    """``"2"`` (deterministic) or ``"2:0.5,3:0.5"``."""
    spec = spec.strip()
    try:
        if ":" not in spec:
            return OffspringLaw((int(spec),), (1.0,))
        pairs = [item.split(":") for item in spec.split(",") if item.strip()]
        ks = tuple(int(k) for k, _ in pairs)
        ps = tuple(float(p) for _, p in pairs)
    except ValueError as exc:
        raise LawError(f"malformed offspring law {spec!r}") from exc
    order = sorted(range(len(ks)), key=ks.__getitem__)
    ks = tuple(ks[i] for i in order)
    ps = tuple(ps[i] for i in order)
    if abs(math.fsum(ps) - 1.0) <= 1e-12:
        ps = tuple(p / math.fsum(ps) for p in ps)
    return OffspringLaw(ks, ps)
