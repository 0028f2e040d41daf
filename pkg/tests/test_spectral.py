import math

import numpy as np
import pytest

from tibbm import airy, fields, quadrature
from tibbm import sigma as S
from tibbm import spectral as sp

LIN = S.make_profile("linear2")


@pytest.fixture(scope="module")
def qlin():
    return sp.linear_q(1.0, 0.5, epsilon=0.01)


def test_problem_constants(qlin):
    assert qlin.Q1 == pytest.approx(1.0)
    assert qlin.Q2 == pytest.approx(0.5)
    assert sp.make_problem("linear", 0.01).q(1.0) == pytest.approx(1.5)
    assert sp.make_problem("const:2", 0.01).q(0.3) == 2.0
    with pytest.raises(sp.SpectralError):
        sp.make_problem("cubic", 0.01)
    with pytest.raises(sp.SpectralError):
        sp.linear_q(1.0, -2.0)


def test_project_initial_definition(qlin):
    st = sp.project_initial(0.7, qlin)
    b = airy.basis(qlin.N)
    assert st.coeffs[0] == pytest.approx(b.psi_scaled(1, 1.0, 0.7), abs=1e-15)
    c = sp.constant_q(1.0)
    assert np.allclose(sp.project_initial(1.3, c).coeffs, [b.psi(n, 1.3) for n in range(1, 41)], atol=1e-15)
    with pytest.raises(sp.SpectralError):
        sp.project_initial(0.0, qlin)


def test_dirac_projection_acts_like_delta():
    x0 = 2.5

    def phi(x):
        return np.exp(-((x - 3.0) ** 2) / 0.5)

    errs = []
    for N in (10, 40, 150):
        p = sp.constant_q(1.0, N=N)
        c = sp.project_initial(x0, p).coeffs
        pairing = float(c @ sp.project_function(phi, p).coeffs)
        errs.append(abs(pairing - phi(x0)))
    assert errs[0] > errs[1] > errs[2]
    assert errs[2] < 1e-4


def test_constant_q_closed_form():
    p = sp.constant_q(1.7, epsilon=0.02)
    st = sp.project_function(sp.initial_bump, p)
    out = sp.evolve(st, p, 0.6)
    exact = sp.constant_q_solution(st, p, 0.6)
    assert np.max(np.abs(out.coeffs - exact)) < 1e-10


def test_norm_never_increases(qlin):
    st = sp.normalized_bump_state(qlin)
    states = sp.trajectory(st, qlin, np.linspace(0.05, 1.0, 20))
    norms = [1.0] + [float(s.norm()) for s in states]
    assert np.all(np.diff(norms) <= 1e-12)
    assert states[-1].max_norm_ratio <= 1 + sp.NORM_SLACK


def test_ground_mode_drift_halves(qlin):
    d = []
    for eps in (0.02, 0.01):
        p = qlin.with_epsilon(eps)
        st0 = sp.normalized_bump_state(p)
        d.append(abs(sp.evolve(st0, p, 1.0).coeffs[0] - st0.coeffs[0]))
    assert 2 / 1.5 <= d[0] / d[1] <= 2 * 1.5


def test_step_budget_guard(qlin):
    with pytest.raises(sp.SpectralError, match="epsilon too small"):
        sp.evolve(sp.project_initial(1.0, qlin.with_epsilon(1e-9)), qlin.with_epsilon(1e-9), 1.0)
    with pytest.raises(sp.SpectralError):
        sp.evolve(sp.evolve(sp.project_initial(1.0, qlin), qlin, 0.5), qlin, 0.2)


def test_vectorised_sources_match_single(qlin):
    xs = np.array([0.3, 1.1])
    many = sp.evolve(sp.project_initial(xs, qlin), qlin, 0.3)
    one = sp.evolve(sp.project_initial(1.1, qlin), qlin, 0.3)
    assert np.allclose(many.coeffs[:, 1], one.coeffs, rtol=0, atol=1e-14)


def test_fundamental_symmetry_constant_q():
    p = sp.constant_q(1.3, epsilon=0.01)
    pts = np.array([0.4, 0.9, 1.7])
    W = sp.fundamental_W(pts, pts, 0.1, p)
    assert np.max(np.abs(W - W.T)) < 1e-8 * np.max(np.abs(W))


def test_fundamental_dirichlet_and_sign(qlin):
    y = np.linspace(0, 8, 401)
    g = sp.fundamental_g(0.5, y, 0.5, qlin)
    assert abs(g[0]) <= 1e-12 * np.max(np.abs(g))
    assert np.min(g) >= -1e-6 * np.max(g)
    with pytest.warns(RuntimeWarning, match="time below proposition regime"):
        sp.fundamental_g(0.5, y, 0.02, qlin)


@pytest.mark.parametrize("x", [0.2, 0.5, 1.0])
def test_leading_shape(qlin, x):
    rep = sp.leading_shape(x, qlin, 1.0)
    assert rep.distance < 5 * qlin.epsilon


def test_leading_shape_error_is_order_epsilon(qlin):
    d = [sp.leading_shape(0.5, qlin.with_epsilon(e), 1.0).distance for e in (0.02, 0.01)]
    assert 1.3 < d[0] / d[1] < 3.0


def test_mode_decay_constant_q():
    p = sp.constant_q(1.0, epsilon=0.01)
    r = sp.check_mode_decay(p, 0.04)
    assert r.modes_used <= p.N - 1
    assert r.slope == pytest.approx(r.predicted_constant_q_slope, rel=0.02)
    r2 = sp.check_mode_decay(p.with_epsilon(0.005), 0.04)
    assert r2.slope / r.slope == pytest.approx(2.0, rel=0.1)
    with pytest.raises(sp.SpectralError, match="insufficient resolvable modes"):
        sp.check_mode_decay(p, 1.0)


def test_mode_decay_time_varying(qlin):
    r = sp.check_mode_decay(qlin, 0.04)
    assert r.C2 > 0


def test_pde_scalings(qlin):
    rep = sp.pde_scalings(qlin)
    assert all(1.3 <= r <= 3.0 for r in rep.drift_ratios)
    k = np.array(rep.kappa)
    assert k.max() / k.min() < 1.5
    assert rep.kappa_second > 0
    assert rep.max_norm_ratio <= 1 + sp.NORM_SLACK


def test_fd_oracle_guard_and_mass_decay():
    p = sp.linear_q(epsilon=0.04)
    with pytest.raises(sp.SpectralError, match="need dx"):
        sp.fd_oracle(p, sp.bump_field(0.02), 0.1)
    f = sp.bump_field(0.01, 12.0)
    norms = [f.l2_norm()]
    for t in (0.05, 0.1, 0.2):
        f = sp.fd_oracle(p, f, t, rescaled=False)
        norms.append(f.l2_norm())
    assert np.all(np.diff(norms) < 0)


def test_fd_oracle_ground_rate():
    eps = 0.04
    p = sp.constant_q(1.0, epsilon=eps)
    x = fields.uniform_grid(0.0, 14.0, 0.01)
    f = fields.ScalarField1D(x, airy.basis(5).psi(1, x))
    a = sp.fd_oracle(p, f, 0.1, rescaled=False)
    b = sp.fd_oracle(p, a, 0.2, rescaled=False)
    rate = -math.log(b.l2_norm() / a.l2_norm()) / 0.1
    assert rate == pytest.approx(airy.airy_zero(1) / eps, rel=0.01)


def test_fd_oracle_second_order():
    r = sp.fd_oracle_refined(sp.linear_q(epsilon=0.04), 1.0, 0.01, 16.0, levels=3)
    assert 1.8 < r.observed_order < 2.2


def test_spectral_matches_fd_coarse():
    gap = sp.oracle_gap(sp.linear_q(epsilon=0.04), levels=2)
    assert gap["gap_extrapolated"] < 1e-5


def test_epsilon_conventions():
    J1 = 7 / 6
    assert sp.epsilon_for(LIN, 1000.0) == pytest.approx(1 / (J1 * 10))
    assert sp.epsilon_for(LIN, 1000.0, "literal") == pytest.approx(J1 / 10)
    with pytest.raises(sp.SpectralError):
        sp.epsilon_for(LIN, 1000.0, "other")


@pytest.fixture(scope="module")
def transport():
    return sp.Transport(LIN, 1000.0)


def test_transport_residual(transport):
    y = np.linspace(2, 60, 117)
    for t in (400.0, 700.0, 950.0):
        assert sp.pde_residual(transport, 20.0, y, t) < 1e-3


def test_transport_literal_fails_residual():
    y = np.linspace(2, 60, 117)
    lit = sp.Transport(LIN, 1000.0, convention="literal")
    assert sp.pde_residual(lit, 20.0, y, 700.0) > 1e-2


def test_transport_identical_when_J1_is_one():
    # sigma(s) = sqrt(2) gives J(1) = 1 but is constant; use a decreasing profile rescaled to J(1) = 1
    c = math.sqrt(1 / (7 / 6))
    p = S.linear(2 * c, c)
    assert S.J_of(p, 1.0) == pytest.approx(1.0, abs=1e-12)
    y = np.linspace(2, 60, 30)
    a = sp.transport_G(20.0, y, 700.0, p, "qT", 1000.0)
    b = sp.transport_G(20.0, y, 700.0, p, "qT", 1000.0, convention="literal")
    assert np.allclose(a, b, rtol=1e-10, atol=0)


def test_transport_boundary(transport):
    G = sp.transport_G(20.0, np.array([0.0, 10.0]), 600.0, LIN, "qT", 1000.0)
    assert abs(G[0]) < 1e-12 * abs(G[1])


def test_transport_time_rescaling():
    a = sp.Transport(LIN, 1000.0)
    b = sp.Transport(LIN, 8000.0)
    assert a.tau(300.0) == pytest.approx(b.tau(2400.0), abs=1e-14)
    assert a.tau(1000.0) == pytest.approx(1.0)


def test_transport_against_direct_fd(transport):
    # independent CN solve of the first-moment PDE from a Gaussian start
    T, t1 = 1000.0, 500.0
    y = fields.uniform_grid(0.0, 150.0, 0.05)

    def f(z):
        return np.exp(-0.5 * ((z - 40) / 3) ** 2) / (3 * math.sqrt(2 * math.pi))

    u = fields.parabolic_solve(
        y, f(y), 0.0, t1, 5000,
        lambda t: 0.5 * float(LIN.sigma(t / T)) ** 2,
        lambda t, z: transport.potential(t, z),
    )
    xn, w = quadrature.panel_nodes(np.linspace(20, 60, 9), 16)
    v = (w * f(xn)) @ transport.kernel(xn, y, [t1])[0]
    assert sp.relative_l2_gap(v, u, y) < 1e-4
    lit = sp.Transport(LIN, T, convention="literal")
    v2 = (w * f(xn)) @ lit.kernel(xn, y, [t1])[0]
    assert sp.relative_l2_gap(v2, u, y) > 0.1
