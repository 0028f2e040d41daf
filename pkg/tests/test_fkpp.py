import math

import numpy as np
import pytest

from tibbm import fkpp, offspring
from tibbm import sigma as S
from tibbm.fields import ScalarField1D

LAW = offspring.binary()


def test_offspring_parsing_and_moments():
    law = offspring.parse_law("2:0.5,3:0.5")
    assert law.mean == pytest.approx(2.5)
    assert law.beta0 == pytest.approx(1 / 3)
    assert law.factorial_moment2 == pytest.approx(0.5 * 2 + 0.5 * 6)
    assert LAW.beta0 == 0.5
    assert offspring.parse_law("2").is_binary
    assert offspring.parse_law(law.spec()) == law
    for bad in ("1", "2:0.5,3:0.4", "two", "2:0.5,2:0.5"):
        with pytest.raises(offspring.LawError):
            offspring.parse_law(bad)


def test_front_position_examples():
    x = np.linspace(-5, 5, 201)
    H = np.where(x > 0, 1.0, 0.0)
    H[100] = 0.5
    assert fkpp.front_position(ScalarField1D(x, H)) == pytest.approx(0.0, abs=1e-15)
    a = x[140]
    Ha = np.where(x > a, 1.0, np.where(x == a, 0.5, 0.0))
    assert fkpp.front_position(ScalarField1D(x, Ha)) == pytest.approx(a, abs=1e-15)
    c = 0.37
    sig = 1 / (1 + np.exp(-(x - c)))
    assert abs(fkpp.front_position(ScalarField1D(x, sig)) - c) < x[1] - x[0]
    with pytest.raises(fkpp.FKPPError, match="front not in domain"):
        fkpp.front_position(ScalarField1D(x, np.zeros_like(x)))


def test_fit_expansion_recovers_synthetic():
    Ts = [200, 400, 800, 1600, 3200, 6400]
    fr = {T: 1.5 * T - 2.1155 * T ** (1 / 3) - math.log(T) + 0.3 for T in Ts}
    fit = fkpp.fit_expansion(fr)
    assert np.allclose(fit.coef[:3], [1.5, -2.1155, -1.0], atol=1e-8)
    assert fit.w1 == pytest.approx(2.1155)
    with pytest.raises(fkpp.FKPPError, match="insufficient horizon spread"):
        fkpp.fit_expansion({200: 1.0, 6400: 2.0})
    with pytest.raises(fkpp.FKPPError, match="insufficient horizon spread"):
        fkpp.fit_expansion({T: 1.0 for T in (100, 120, 140, 160, 180, 200)})


def test_solution_is_a_distribution_function():
    r = fkpp.solve_fkpp(S.make_profile("linear2"), LAW, 60.0, snapshot_times=(0.0, 10.0, 60.0))
    for snap in r.snapshots + [r.final]:
        F = snap.values
        assert F.min() >= 0 and F.max() <= 1
        assert np.all(np.diff(F) >= -1e-12)
    assert r.fronts.size == 1


def test_fixed_grid_exhaustion():
    grid = fkpp.GridConfig(moving=False, right_pad=20.0, left_pad=10.0)
    with pytest.raises(fkpp.FKPPError, match="domain exhausted"):
        fkpp.solve_fkpp(S.make_profile("const:1"), LAW, 40.0, grid)


def test_bramson_control():
    fr = fkpp.front_sweep(S.make_profile("const:1"), LAW, [250, 500, 1000])
    off = fkpp.bramson_offsets(fr)
    c = np.mean(list(off.values()))
    assert max(abs(v - c) for v in off.values()) <= 0.5
    assert abs(fr[500.0] - (500 - 1.5 * math.log(500) + c)) <= 2


def test_grid_convergence():
    p = S.make_profile("linear2")
    a = fkpp.solve_fkpp(p, LAW, 500.0).front
    b = fkpp.solve_fkpp(p, LAW, 500.0, fkpp.GridConfig(dx=0.025, dt=0.01)).front
    assert abs(a - b) < 0.1


def test_comparison_principle():
    hi = fkpp.solve_fkpp(S.make_profile("linear2"), LAW, 150.0).front
    lo = fkpp.solve_fkpp(S.make_profile("linear:1.8,0.8"), LAW, 150.0).front
    assert hi >= lo - 0.05
    hi = fkpp.solve_fkpp(S.make_profile("const:1.2"), LAW, 100.0).front
    lo = fkpp.solve_fkpp(S.make_profile("const:1"), LAW, 100.0).front
    assert hi >= lo - 0.05


def test_general_law_speed():
    # with beta0 = 1/(2(E L - 1)) the linear speed is sigma for every law
    law = offspring.parse_law("2:0.5,3:0.5")
    r = fkpp.solve_fkpp(S.make_profile("const:1"), law, 400.0, record_times=(200.0,))
    speed = (r.fronts[1] - r.fronts[0]) / 200.0
    assert speed == pytest.approx(1.0 - 1.5 * math.log(2) / 200, abs=5e-3)
