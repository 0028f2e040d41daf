import math

import mpmath as mp
import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from tibbm import airy
from oracles import maclaurin_ai

ALPHA1_GOLDEN = 2.33811


@pytest.mark.parametrize("x", [-19.5, -8.0, -6.3, -2.33811, -0.4, 0.0, 1.7, 3.2, 5.0, 7.9, 8.1, 12.0, 19.0])
def test_ai_matches_extended_precision_series(x):
    ref = maclaurin_ai(x)
    dref = maclaurin_ai(x, derivative=True)
    scale = abs(x) ** -0.25 / math.sqrt(math.pi) if x < -1 else abs(ref)
    dscale = abs(x) ** 0.25 / math.sqrt(math.pi) if x < -1 else abs(dref)
    assert abs(airy.ai(x) - ref) <= 1e-10 * scale
    assert abs(airy.ai_prime(x) - dref) <= 1e-10 * dscale


def test_golden_values():
    assert abs(airy.ai(-ALPHA1_GOLDEN)) < 1e-5
    assert airy.ai(0.0) == pytest.approx(0.3550280539, abs=1e-10)
    assert airy.ai_prime(0.0) == pytest.approx(-0.2588194038, abs=1e-10)
    assert airy.ai(5.0) == pytest.approx(1.0834e-4, rel=1e-4)
    assert airy.ai_prime(-ALPHA1_GOLDEN) == pytest.approx(0.70121, abs=1e-5)


def test_dense_grid_against_mpmath():
    xs = np.linspace(-20, 20, 801)
    v, d = airy.airy_pair(xs)
    ref = np.array([float(mp.airyai(x)) for x in xs])
    env = np.where(xs < -1, np.abs(np.minimum(xs, -1)) ** -0.25 / np.sqrt(np.pi), np.abs(ref))
    assert np.max(np.abs(v - ref) / env) < 1e-10


def test_seams_agree():
    mism = airy.seam_mismatch()
    assert max(mism.values()) < 1e-12


def test_maclaurin_diagnostic_loses_digits_for_positive_x():
    # why the direct series is not the production path
    assert abs(airy.ai_maclaurin(1.0) - airy.ai(1.0)) < 1e-14
    assert abs(airy.ai_maclaurin(6.0) / airy.ai(6.0) - 1) > 1e-10


@settings(max_examples=60, deadline=None)
@given(st.floats(min_value=-20, max_value=20))
def test_airy_equation_residual(x):
    h = 1e-4
    d2 = (airy.ai_prime(x + h) - airy.ai_prime(x - h)) / (2 * h)
    scale = max(1.0, abs(x)) * max(abs(airy.ai(x)), 1e-3 * abs(x) ** -0.25 if x < 0 else abs(airy.ai(x)))
    assert abs(d2 - x * airy.ai(x)) <= 1e-6 * max(scale, 1e-12)


def test_residual_at_1_7():
    h = 1e-3
    x = 1.7
    d2 = (airy.ai(x + h) - 2 * airy.ai(x) + airy.ai(x - h)) / h ** 2
    assert abs(d2 - x * airy.ai(x)) < 1e-6


@settings(max_examples=40, deadline=None)
@given(st.floats(min_value=-15, max_value=15))
def test_derivative_consistent_with_central_differences(x):
    h = 1e-5
    fd = (airy.ai(x + h) - airy.ai(x - h)) / (2 * h)
    assert abs(fd - airy.ai_prime(x)) < 1e-6


def test_first_zeros():
    assert airy.airy_zero(1) == pytest.approx(ALPHA1_GOLDEN, abs=1e-5)
    # bisection oracle on the extended-precision series between sign changes
    lo, hi = 3.5, 4.5
    assert maclaurin_ai(-lo) * maclaurin_ai(-hi) < 0
    for _ in range(45):
        mid = 0.5 * (lo + hi)
        if maclaurin_ai(-lo) * maclaurin_ai(-mid) <= 0:
            hi = mid
        else:
            lo = mid
    assert airy.airy_zero(2) == pytest.approx(0.5 * (lo + hi), abs=1e-9)
    assert airy.airy_zero(2) == pytest.approx(4.08795, abs=1e-5)


@pytest.mark.parametrize("n", [1, 7, 50, 123, 200])
def test_zero_table_against_mpmath(n):
    assert airy.airy_zero(n) == pytest.approx(-float(mp.airyaizero(n)), abs=1e-9)


def test_zeros_are_zeros_and_increasing():
    z = airy.airy_zeros(200)
    assert np.all(np.diff(z) > 0)
    assert np.max(np.abs(airy.ai(-z[:60]))) < 1e-10


def test_zero_index_out_of_range():
    with pytest.raises(airy.AiryError, match="zero index exceeds table"):
        airy.airy_zero(201)
    with pytest.raises(airy.AiryError, match="zero index exceeds table"):
        airy.airy_zero(0)


def test_zero_asymptotics():
    limit = (1.5 * math.pi) ** (2 / 3)
    assert airy.airy_zero(50) / 50 ** (2 / 3) == pytest.approx(limit, rel=0.02)
    ns = [5, 10, 20, 40, 80, 160]
    r = [airy.airy_zero(n) * n ** (-2 / 3) for n in ns]
    incr = np.abs(np.diff(r))
    assert np.all(np.diff(incr) < 0)
    assert abs(r[-1] - limit) < abs(r[0] - limit)
    # the stated limit 3*pi/2 is not what the zeros approach
    assert abs(r[-1] - 1.5 * math.pi) > 1.0


def test_psi_vanishes_at_origin_with_unit_slope():
    b = airy.basis(20)
    for n in range(1, 21):
        assert abs(b.psi(n, 0.0)) < 1e-12
        h = 1e-6
        assert (b.psi(n, h) - b.psi(n, 0.0)) / h == pytest.approx(1.0, abs=1e-5)
        assert b.psi_prime(n, 0.0) == pytest.approx(1.0, abs=1e-12)


@pytest.mark.parametrize("n", [1, 2, 3, 8, 20])
def test_psi_bounded_by_x(n):
    x = np.linspace(0, 30, 1000)
    assert np.all(np.abs(airy.basis(20).psi(n, x)) <= x + 1e-12)


def test_psi_scaled():
    b = airy.basis(20)
    x = np.linspace(0, 10, 301)
    for n in (1, 4):
        assert np.allclose(b.psi_scaled(n, 1.0, x), b.psi(n, x), atol=1e-15)
    for q in (0.3, 2.0, 7.5):
        for n in (1, 2, 5):
            assert np.all(np.abs(b.psi_scaled(n, q, x)) <= math.sqrt(q) * x + 1e-12)
    h = 1e-7
    assert (b.psi_scaled(1, 4.0, h) - b.psi_scaled(1, 4.0, 0.0)) / h == pytest.approx(2.0, abs=1e-5)
    with pytest.raises(airy.AiryError):
        b.psi_scaled(1, 0.0, 1.0)
    with pytest.raises(airy.AiryError):
        b.modes([1.0], q=-1.0)


@pytest.mark.parametrize("q", [0.5, 1.0, 3.0])
@pytest.mark.parametrize("n", [1, 3])
def test_psi_scaled_eigen_residual(q, n):
    b = airy.basis(20)
    h = 1e-3
    x = np.arange(h, 12.0, h)
    p = b.psi_scaled(n, q, x)
    pp = b.psi_scaled(n, q, x + h)
    pm = b.psi_scaled(n, q, x - h)
    res = (pp - 2 * p + pm) / h ** 2 - q * x * p + b.zeros[n - 1] * q ** (2 / 3) * p
    assert np.max(np.abs(res)) < 1e-5 * max(1.0, q ** 1.5)


def test_orthonormality_and_norm_identity():
    G = airy.gram_matrix(20)
    assert np.max(np.abs(G - np.eye(20))) < 1e-6
    b = airy.basis(20)
    for n in range(1, 21):
        assert airy.norm_by_quadrature(n) == pytest.approx(b.normalizers[n - 1], abs=1e-6)
    assert np.all(np.diff(b.normalizers) > 0)


def test_eigen_residual_small():
    for n in (1, 5, 20):
        assert airy.eigen_residual(n) < 1e-4


def test_coupling_matrix():
    A = airy.coupling_matrix(20)
    Aq = airy.coupling_matrix_quadrature(20)
    assert np.max(np.abs(A + A.T)) < 1e-12
    assert np.all(np.diag(A) == 0)
    assert np.max(np.abs(A - Aq)) < 1e-6
    a1, a2 = airy.airy_zero(1), airy.airy_zero(2)
    assert A[0, 1] == pytest.approx(2 / (a2 - a1) ** 3, abs=1e-12)
    assert A[0, 1] == pytest.approx(0.3732, abs=1e-4)
    with pytest.raises(airy.AiryError):
        airy.coupling_matrix(1)


def test_inner_weighted_x():
    vals = np.array([airy.inner_weighted_x(n) for n in range(1, 51)])
    assert np.all(np.isfinite(vals)) and np.all(vals > 0)
    ratio = vals / np.arange(1, 51) ** (4 / 3)
    print(f"max <|psi_n|,x>/n^(4/3) over n<=50: {ratio.max():.4f}")
    assert ratio.max() < 4.0
    assert ratio[-10:].max() < ratio[:10].max()


def test_inner_weighted_x_domain_truncation():
    # tail of Ai is negligible past alpha_n + 20: doubling the cutoff changes nothing
    n = 4
    a = airy.airy_zeros(n)
    b = airy.basis(20)
    from tibbm import quadrature

    def integral(edge):
        inner = (a[n - 1] - a[: n - 1])[::-1]
        br = np.concatenate(([0.0], inner, [edge]))
        fine = np.concatenate([np.linspace(lo, hi, 9)[:-1] for lo, hi in zip(br[:-1], br[1:])] + [br[-1:]])
        x, w = quadrature.panel_nodes(fine, 20)
        return float(np.dot(w, np.abs(b.psi(n, x)) * x))

    assert abs(integral(a[n - 1] + 20) - integral(a[n - 1] + 40)) < 1e-8
    assert airy.inner_weighted_x(n) == pytest.approx(integral(a[n - 1] + 40), abs=1e-8)


def test_validation_table_rows():
    rows = airy.validation_table(5)
    assert [r["n"] for r in rows] == [1, 2, 3, 4, 5]
    assert rows[0]["alpha_n"] == pytest.approx(2.33811, abs=1e-5)
    assert all(r["ortho_error"] < 1e-6 and r["eigen_residual"] < 1e-4 for r in rows)
