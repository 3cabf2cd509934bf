import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from kerrmp import fpe, tunneling as tn
from kerrmp.params import ModelParams


@pytest.fixture(scope="module")
def case():
    p = ModelParams.from_ratios(20.0716, 0.2, alpha3_ratio=1e-4, gamma=1e-3, n_thermal=0.5)
    prof = tn.lambda_profile(p)
    return p, prof, fpe.stationary_solution(p, prof)


def _total(d):
    return sum(np.trapezoid(d.density(r), d.eps[r]) for r in (1, 2, 3))


def test_normalized_and_nonnegative(case):
    _, _, d = case
    assert abs(_total(d) - 1) < 1e-12
    assert abs(sum(d.occupations) - 1) < 1e-12
    for r in (1, 2, 3):
        assert d.P[r].min() >= 0


def test_continuous_at_the_separatrix(case):
    _, _, d = case
    # the innermost nodes sit a relative 1e-12 away from the separatrix
    sep = d.eps[2][-1]
    assert abs(d.eps[1][0] - sep) < 1e-9 and abs(d.eps[3][0] - sep) < 1e-9
    np.testing.assert_allclose([d.P[1][0], d.P[3][0]], d.P[2][-1], rtol=1e-8)


def test_locked_below_crit_and_continuous_across_it(case):
    _, _, d = case
    below = d.eps[1] < d.eps_crit
    np.testing.assert_allclose(d.P[1][below], d.at(3, d.eps[1][below]), rtol=1e-10)
    h = 1e-9 * (d.eps_res - d.eps_crit)
    for r in (1, 3):
        assert abs(d.at(r, d.eps_crit + h) - d.at(r, d.eps_crit - h)) < 1e-6 * d.at(r, d.eps_crit)


def test_no_flow_without_the_resonant_pair(case):
    p, prof, d = case
    d0 = fpe.stationary_solution(p, fpe.scaled_profile(prof, res_weight=0.0), d.diagnostics["tables"])
    assert d0.flow_J == 0.0
    assert d.flow_J > 0
    # the pair drains region 1 into region 3
    assert d.occupations[0] < d0.occupations[0]


def test_bvp_conserves_flux_without_tunneling(case):
    p, prof, d = case
    d0 = fpe.stationary_solution(p, prof, d.diagnostics["tables"], tunneling=False)
    b0 = fpe.bvp_cross_check(p, prof, d.diagnostics["tables"], tunneling=False)
    assert abs(b0.flow_J) == 0.0
    assert abs(_total(b0) - 1) < 1e-10
    assert max(fpe.sup_mismatch(d0, b0).values()) < 1e-6


@settings(max_examples=4)
@given(st.floats(12, 24), st.floats(0.2, 0.6), st.floats(0.5, 3))
def test_zero_flow_solutions_are_probability_densities(m, fr, nth):
    p = ModelParams.from_ratios(m, fr, gamma=1e-3, n_thermal=nth)
    d = fpe.stationary_solution(p, None, points=80)
    assert d.flow_J == 0.0
    assert abs(_total(d) - 1) < 1e-10
    assert all(d.P[r].min() >= 0 for r in (1, 2, 3))
