import math

import numpy as np
import pytest

from kerrmp import tunneling as tn
from kerrmp.classical import find_stationary_points
from kerrmp.params import ModelParams


@pytest.fixture(scope="module")
def exact_resonance():
    return tn.lambda_profile(ModelParams.from_ratios(20, 0.2, gamma=1e-3, n_thermal=0.5))


def test_no_critical_point_without_detuning_or_high_order_terms(exact_resonance):
    prof = exact_resonance
    assert not prof.crit_found
    assert prof.eps_crit == prof.eps_1
    assert prof.eps_res is None
    assert np.all(prof.lambda_T >= 0)


def test_rate_is_nonnegative_and_vanishes_above_crit():
    prof = tn.lambda_profile(ModelParams.from_ratios(20.0716, 0.2, alpha3_ratio=1e-4, gamma=1e-3, n_thermal=0.5))
    assert prof.crit_found
    assert prof.eps_sep < prof.eps_crit < prof.eps_1
    assert np.all(prof.lambda_T >= 0)
    above = np.linspace(prof.eps_crit + 1e-6, prof.eps_1, 5)
    assert np.all(prof.lambda_at(above) == 0.0)


def test_amplitude_decays_with_depth_below_the_local_maximum():
    p = ModelParams.from_ratios(12, 0.4)
    prof = find_stationary_points(p)
    e = np.linspace(prof.eps_sep, prof.eps_1, 12)[1:-1]
    t = np.array([tn.tunneling_amplitude(p, x).value for x in e])
    assert np.all(np.diff(t) < 0)


def test_mismatch_vanishes_at_exact_resonance_without_high_order_terms():
    p = ModelParams.from_ratios(12, 0.4)
    prof = find_stationary_points(p)
    e = 0.5 * (prof.eps_sep + prof.eps_1)
    assert abs(tn.quasienergy_mismatch(p, e)) < 1e-12
    with pytest.raises(tn.BarrierError):
        tn.quasienergy_mismatch(p, prof.eps_1 + 1.0)


def test_lorentzian_rate():
    assert tn.lorentzian_rate(0.0, 1.0, 0.3) == 0.0
    assert tn.lorentzian_rate(0.2, 0.0, 0.3) == 0.0
    # on resonance the rate is 4 t^2 / width
    assert math.isclose(tn.lorentzian_rate(0.2, 0.01, 0.0), 4 * 1e-4 / 0.2)


def test_above_threshold_drive_rejected():
    with pytest.raises(tn.BarrierError):
        tn.lambda_profile(ModelParams.from_ratios(12, 1.5))
