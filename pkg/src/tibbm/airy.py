"""Airy function of the first kind, its zeros, and the Dirichlet Airy eigenbasis.

Evaluation
----------
On [-8, 8] values come from Taylor series about a table of nodes spaced
0.25 apart.  The table itself is built by analytic continuation of the
Airy equation ``y'' = x y``: forward from the exact values at the origin
towards negative x (oscillatory side, no error growth) and backward from
the large-x asymptotic expansion at x = 8 towards the origin (Ai is the
dominant solution in that direction, so relative error stays put).  Beyond
|x| = 8 the classical asymptotic expansions are used; at that point the
optimally truncated series is accurate to ~1e-13.

The plain Maclaurin series is kept (``ai_maclaurin``) but only as a
diagnostic: for x > 3 its alternating terms cancel and relative accuracy
collapses.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from . import quadrature

AI0 = 1.0 / (3.0 ** (2.0 / 3.0) * math.gamma(2.0 / 3.0))
AIP0 = -1.0 / (3.0 ** (1.0 / 3.0) * math.gamma(1.0 / 3.0))

TABLE_EDGE = 8.0
TABLE_STEP = 0.25
TAYLOR_TERMS = 40
MAX_ZERO_INDEX = 200
DEFAULT_TRUNCATION = 40


class AiryError(ValueError):
    pass


# ---------------------------------------------------------------- asymptotics

@lru_cache(maxsize=1)
def _asymptotic_coeffs(kmax: int = 60) -> tuple[np.ndarray, np.ndarray]:
    u = np.empty(kmax + 1)
    v = np.empty(kmax + 1)
    u[0] = v[0] = 1.0
    for k in range(1, kmax + 1):
        u[k] = u[k - 1] * (6 * k - 5) * (6 * k - 3) * (6 * k - 1) / ((2 * k - 1) * 216.0 * k)
        v[k] = -(6 * k + 1) / (6 * k - 1) * u[k]
    return u, v


def _series(coeffs: np.ndarray, zeta: np.ndarray, parity: int | None = None) -> np.ndarray:
    """Optimally truncated sum_k (-1)^k c_k zeta^-k (or its even/odd part)."""
    total = np.zeros_like(zeta)
    active = np.ones(zeta.shape, dtype=bool)
    last = np.full(zeta.shape, np.inf)
    ks = range(len(coeffs)) if parity is None else range(parity, len(coeffs), 2)
    for j, k in enumerate(ks):
        sign = (-1.0) ** (j if parity is not None else k)
        term = sign * coeffs[k] * zeta ** (-float(k))
        mag = np.abs(term)
        active &= mag < last
        total = np.where(active, total + term, total)
        last = mag
        active &= mag > 1e-18 * np.abs(total)
        if not active.any():
            break
    return total


def _asymptotic_positive(x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    u, v = _asymptotic_coeffs()
    zeta = 2.0 / 3.0 * x ** 1.5
    pref = np.exp(-zeta) / (2.0 * math.sqrt(math.pi))
    q = x ** 0.25
    return pref / q * _series(u, zeta), -pref * q * _series(v, zeta)


def _asymptotic_negative(z: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Ai(-z), Ai'(-z) for large positive z."""
    u, v = _asymptotic_coeffs()
    zeta = 2.0 / 3.0 * z ** 1.5
    c = np.cos(zeta - math.pi / 4)
    s = np.sin(zeta - math.pi / 4)
    q = z ** 0.25
    val = (c * _series(u, zeta, 0) + s * _series(u, zeta, 1)) / (math.sqrt(math.pi) * q)
    der = q * (s * _series(v, zeta, 0) - c * _series(v, zeta, 1)) / math.sqrt(math.pi)
    return val, der


# ---------------------------------------------------------- taylor continuation

def _taylor(x0, a0, a1, h, nterms: int = TAYLOR_TERMS):
    """Propagate (y, y') of y'' = x y from x0 by an offset h (all arrays)."""
    x0, a0, a1, h = np.broadcast_arrays(*(np.asarray(t, dtype=float) for t in (x0, a0, a1, h)))
    prev2 = np.zeros_like(a0)  # a_{k-1}
    prev1 = a0                 # a_k
    cur = a1                   # a_{k+1}
    val = a0 + a1 * h
    der = a1.copy()
    hp = h.copy()  # h^(k+1), k = 0
    for k in range(0, nterms):
        # a_{k+2} from a_k and a_{k-1}
        nxt = (x0 * prev1 + prev2) / ((k + 2) * (k + 1))
        der = der + (k + 2) * nxt * hp
        hp = hp * h
        val = val + nxt * hp
        prev2, prev1, cur = prev1, cur, nxt
    return val, der


@lru_cache(maxsize=1)
def _node_table() -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    nodes = np.arange(-TABLE_EDGE, TABLE_EDGE + TABLE_STEP / 2, TABLE_STEP)
    vals = np.empty_like(nodes)
    ders = np.empty_like(nodes)
    i0 = int(round(TABLE_EDGE / TABLE_STEP))
    vals[i0], ders[i0] = AI0, AIP0
    for i in range(i0, 0, -1):
        v, d = _taylor(nodes[i], vals[i], ders[i], -TABLE_STEP)
        vals[i - 1], ders[i - 1] = float(v), float(d)
    top = len(nodes) - 1
    v, d = _asymptotic_positive(np.array([TABLE_EDGE]))
    vals[top], ders[top] = v[0], d[0]
    for i in range(top, i0 + 1, -1):
        v, d = _taylor(nodes[i], vals[i], ders[i], -TABLE_STEP)
        vals[i - 1], ders[i - 1] = float(v), float(d)
    for arr in (nodes, vals, ders):
        arr.setflags(write=False)
    return nodes, vals, ders


def seam_mismatch() -> dict[str, float]:
    """Disagreement between the two continuation sweeps and the asymptotics.

    The backward sweep from x=8 is continued one more step onto the origin
    and compared with the exact constants; the forward sweep ends at x=-8
    where it is compared with the oscillatory expansion.
    """
    nodes, vals, ders = _node_table()
    i0 = int(round(TABLE_EDGE / TABLE_STEP))
    v, d = _taylor(nodes[i0 + 1], vals[i0 + 1], ders[i0 + 1], -TABLE_STEP)
    va, da = _asymptotic_negative(np.array([TABLE_EDGE]))
    return {
        "origin_value": abs(float(v) - AI0) / AI0,
        "origin_derivative": abs(float(d) - AIP0) / abs(AIP0),
        "left_value": abs(vals[0] - va[0]),
        "left_derivative": abs(ders[0] - da[0]),
    }


# ------------------------------------------------------------------ evaluation

def airy_pair(x):
    """Return (Ai(x), Ai'(x)); scalar in, scalar out."""
    arr = np.asarray(x, dtype=float)
    if not np.all(np.isfinite(arr)):
        raise AiryError("Airy argument must be finite")
    flat = arr.ravel()
    val = np.empty_like(flat)
    der = np.empty_like(flat)
    mid = np.abs(flat) <= TABLE_EDGE
    if mid.any():
        nodes, vals, ders = _node_table()
        idx = np.rint((flat[mid] + TABLE_EDGE) / TABLE_STEP).astype(int)
        h = flat[mid] - nodes[idx]
        val[mid], der[mid] = _taylor(nodes[idx], vals[idx], ders[idx], h, nterms=30)
    pos = flat > TABLE_EDGE
    if pos.any():
        val[pos], der[pos] = _asymptotic_positive(flat[pos])
    neg = flat < -TABLE_EDGE
    if neg.any():
        val[neg], der[neg] = _asymptotic_negative(-flat[neg])
    if arr.ndim == 0:
        return float(val[0]), float(der[0])
    return val.reshape(arr.shape), der.reshape(arr.shape)


def ai(x):
    """Airy function of the first kind."""
    return airy_pair(x)[0]


def ai_prime(x):
    return airy_pair(x)[1]


def ai_maclaurin(x: float, nterms: int = 120) -> float:
    """Direct Maclaurin sum about the origin (diagnostic only)."""
    a = [AI0, AIP0, 0.0]
    total = AI0 + AIP0 * x
    p = x
    for k in range(3, nterms):
        a.append(a[k - 3] / (k * (k - 1)))
        p *= x
        total += a[k] * p
    return total


# ----------------------------------------------------------------------- zeros

def _refine_zeros(count: int, tol: float = 1e-14) -> np.ndarray:
    """Safeguarded Newton on all zeros at once, each kept inside its bracket."""
    n = np.arange(1, count + 1)
    t = 3.0 * math.pi * (4 * n - 1) / 8.0
    guess = t ** (2.0 / 3.0) * (1 + 5.0 / 48.0 * t ** -2 - 5.0 / 36.0 * t ** -4)
    gap = math.pi / np.sqrt(guess)
    lo, hi = guess - 0.3 * gap, guess + 0.3 * gap
    flo, fhi = ai(-lo), ai(-hi)
    if np.any(flo * fhi > 0):
        raise AiryError("failed to bracket Airy zeros")
    a = guess.copy()
    for _ in range(100):
        f, d = airy_pair(-a)
        cand = a + f / d  # d/da Ai(-a) = -Ai'(-a)
        outside = (cand <= lo) | (cand >= hi)
        cand = np.where(outside, 0.5 * (lo + hi), cand)
        fc = ai(-cand)
        same = fc * flo > 0
        lo = np.where(same, cand, lo)
        flo = np.where(same, fc, flo)
        hi = np.where(same, hi, cand)
        done = np.abs(cand - a) < tol * np.maximum(1.0, cand)
        a = cand
        if done.all():
            break
    return a


@lru_cache(maxsize=1)
def _zero_table() -> np.ndarray:
    z = _refine_zeros(MAX_ZERO_INDEX)
    z.setflags(write=False)
    return z


def airy_zero(n: int) -> float:
    """alpha_n > 0 with Ai(-alpha_n) = 0, alpha_1 < alpha_2 < ..."""
    if not 1 <= n <= MAX_ZERO_INDEX:
        raise AiryError("zero index exceeds table")
    return float(_zero_table()[n - 1])


def airy_zeros(count: int) -> np.ndarray:
    if not 1 <= count <= MAX_ZERO_INDEX:
        raise AiryError("zero index exceeds table")
    return _zero_table()[:count].copy()


# -------------------------------------------------------------------- eigenbasis

@dataclass(frozen=True)
class AiryBasis:
    """Cached zeros and normalisers of the Dirichlet Airy eigenbasis on (0, inf).

    ``psi(n, x) = Ai(x - alpha_n) / Ai'(-alpha_n)``.  Dividing by the signed
    derivative (not its absolute value) gives psi_n'(0) = 1 for every n;
    the L2 norm is |Ai'(-alpha_n)| either way.
    """

    N: int = DEFAULT_TRUNCATION
    zeros: np.ndarray = field(init=False, repr=False)
    slopes: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        if self.N < 1:
            raise AiryError("truncation must be positive")
        z = airy_zeros(self.N)
        object.__setattr__(self, "zeros", z)
        object.__setattr__(self, "slopes", ai_prime(-z))

    @property
    def normalizers(self) -> np.ndarray:
        return np.abs(self.slopes)

    def _check(self, n: int) -> None:
        if not 1 <= n <= self.N:
            raise AiryError(f"mode {n} outside truncation N={self.N}")

    def psi(self, n: int, x):
        self._check(n)
        return ai(np.asarray(x, dtype=float) - self.zeros[n - 1]) / self.slopes[n - 1]

    def psi_prime(self, n: int, x):
        self._check(n)
        return ai_prime(np.asarray(x, dtype=float) - self.zeros[n - 1]) / self.slopes[n - 1]

    def psi_scaled(self, n: int, q: float, x):
        """Eigenfunction of u'' - q x u with eigenvalue -alpha_n q^(2/3)."""
        if not q > 0:
            raise AiryError("scaling q must be positive")
        c = q ** (1.0 / 3.0)
        return q ** (1.0 / 6.0) * self.psi(n, c * np.asarray(x, dtype=float))

    def modes(self, x, q: float = 1.0) -> np.ndarray:
        """Matrix of psi^q_n(x) with shape (N, len(x))."""
        if not q > 0:
            raise AiryError("scaling q must be positive")
        x = np.atleast_1d(np.asarray(x, dtype=float))
        c = q ** (1.0 / 3.0)
        arg = c * x[None, :] - self.zeros[:, None]
        return q ** (1.0 / 6.0) * ai(arg) / self.slopes[:, None]

    def coupling(self) -> np.ndarray:
        return coupling_matrix(self.N)


@lru_cache(maxsize=8)
def basis(N: int = DEFAULT_TRUNCATION) -> AiryBasis:
    return AiryBasis(N)


def support_edge(N: int, margin: float = 15.0) -> float:
    """Right end beyond which every psi_n, n <= N, is below ~1e-14 of its peak."""
    return airy_zero(N) + margin


def grid_quadrature(N: int, margin: float = 15.0, width: float = 0.25, order: int = 20):
    """Quadrature nodes/weights on [0, alpha_N + margin] for mode inner products."""
    return quadrature.panel_nodes(quadrature.uniform_breaks(0.0, support_edge(N, margin), width), order)


def coupling_matrix(N: int) -> np.ndarray:
    """Generator A of the moving-basis coefficient dynamics (closed form).

    A_ij = (1/6)[(x psi_i', psi_j) - (x psi_j', psi_i)] which, with the
    psi_n'(0) = 1 normalisation, equals 2 / (alpha_j - alpha_i)^3 off the
    diagonal.
    """
    if N < 2:
        raise AiryError("coupling matrix needs N >= 2")
    a = airy_zeros(N)
    diff = a[:, None] - a[None, :]
    np.fill_diagonal(diff, 1.0)
    A = -2.0 / diff ** 3
    np.fill_diagonal(A, 0.0)
    return A


def coupling_matrix_quadrature(N: int) -> np.ndarray:
    """Same matrix from its inner-product definition, by quadrature."""
    b = basis(N)
    x, w = grid_quadrature(N)
    P = b.modes(x)
    dP = ai_prime(x[None, :] - b.zeros[:, None]) / b.slopes[:, None]
    M = (dP * (w * x)[None, :]) @ P.T  # M_ij = (x psi_i', psi_j)
    return (M - M.T) / 6.0


def gram_matrix(N: int) -> np.ndarray:
    b = basis(N)
    x, w = grid_quadrature(N)
    P = b.modes(x)
    return (P * w[None, :]) @ P.T


def norm_by_quadrature(n: int) -> float:
    """||Ai(. - alpha_n)||_2 on (0, inf)."""
    a = airy_zero(n)
    x, w = quadrature.panel_nodes(quadrature.uniform_breaks(0.0, a + 15.0, 0.25), 20)
    return math.sqrt(float(np.dot(w, ai(x - a) ** 2)))


def inner_weighted_x(n: int) -> float:
    """<|psi_n|, x> by quadrature with breakpoints at the sign changes of psi_n."""
    a = airy_zeros(max(n, 1))
    inner = (a[n - 1] - a[: n - 1])[::-1]
    breaks = np.concatenate(([0.0], inner, [a[n - 1] + 20.0]))
    refined = np.concatenate([np.linspace(lo, hi, 5)[:-1] for lo, hi in zip(breaks[:-1], breaks[1:])] + [breaks[-1:]])
    x, w = quadrature.panel_nodes(refined, 20)
    b = basis(max(n, DEFAULT_TRUNCATION) if n <= MAX_ZERO_INDEX else n)
    return float(np.dot(w, np.abs(b.psi(n, x)) * x))


def eigen_residual(n: int, h: float = 1e-3, xmax: float | None = None) -> float:
    """max |psi'' - x psi + alpha_n psi| on an interior grid, FD second derivative."""
    b = basis(max(n, DEFAULT_TRUNCATION))
    xmax = support_edge(n) if xmax is None else xmax
    x = np.arange(0.0, xmax + h / 2, h)
    p = b.psi(n, x)
    d2 = (p[2:] - 2 * p[1:-1] + p[:-2]) / h ** 2
    xi = x[1:-1]
    return float(np.max(np.abs(d2 - xi * p[1:-1] + b.zeros[n - 1] * p[1:-1])))


def validation_table(N: int = 20) -> list[dict]:
    """Rows (n, alpha_n, |Ai'(-alpha_n)|, ortho_error, eigen_residual)."""
    G = gram_matrix(N)
    err = np.abs(G - np.eye(N)).max(axis=1)
    b = basis(N)
    rows = []
    for n in range(1, N + 1):
        rows.append({
            "n": n,
            "alpha_n": float(b.zeros[n - 1]),
            "abs_ai_prime": float(b.normalizers[n - 1]),
            "ortho_error": float(err[n - 1]),
            "eigen_residual": eigen_residual(n),
        })
    return rows
