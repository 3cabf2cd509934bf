import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from kerrmp import classical as cl
from kerrmp import spectrum as spc
from kerrmp.params import ModelParams


@pytest.fixture(scope="module")
def portrait():
    return cl.find_stationary_points(ModelParams.from_ratios(8, 0.4))


@given(st.floats(4, 30), st.floats(0.05, 0.95), st.floats(0, 1e-3), st.sampled_from(["weyl", "cnumber"]))
def test_stationary_points_are_critical(m, fr, a3, ordering):
    p = ModelParams.from_ratios(m, fr, alpha3_ratio=a3)
    pp = cl.find_stationary_points(p, ordering)
    assert pp.bistable
    for s in pp.stationary_points:
        assert abs(pp.hamiltonian.grad_conj(s.a)) < 1e-9 * pp.hamiltonian.energy_scale()
    assert pp.eps_2 < pp.eps_sep < pp.eps_1


def test_monostable_above_threshold():
    pp = cl.find_stationary_points(ModelParams.from_ratios(8, 1.2))
    assert not pp.bistable
    assert pp.region_of(pp.eps_2 + 1.0) == (2,)


def test_zero_drive_rejected():
    with pytest.raises(cl.ClassicalError):
        cl.find_stationary_points(ModelParams(delta=4.0))


def test_action_derivative_is_the_period(portrait):
    e, h = 0.5 * (portrait.eps_sep + portrait.eps_1), 1e-5
    for r, sign in ((1, -1), (3, 1)):
        dj = (cl.action(portrait, r, e + h) - cl.action(portrait, r, e - h)) / (2 * h)
        t = cl.period(portrait, r, e)
        assert abs(sign * dj - t) < 1e-6 * t


def test_coefficients_stay_finite_next_to_the_separatrix(portrait):
    for r in (1, 2, 3):
        lo, hi = portrait.window(r)
        e = lo + 1e-9 * portrait.scale if r != 2 else hi - 1e-9 * portrait.scale
        oi = cl.orbit_integrals(portrait, r, e)
        assert math.isfinite(oi.period) and oi.period > 0
        assert math.isfinite(oi.drift_k) and math.isfinite(oi.diffusion_d)
        assert oi.diffusion_d > 0


def test_contour_coefficients_match_quadrature(portrait):
    e = 0.5 * (portrait.eps_sep + portrait.eps_1)
    orbit = cl.trace_orbit(portrait, 1, e)
    t, k, d = cl.coefficients(orbit)
    oi = orbit.integrals
    assert abs(t - oi.period) < 1e-8 * t
    assert abs(k - oi.drift_k) < 1e-6 * abs(oi.drift_k)
    assert abs(d - oi.diffusion_d) < 1e-6 * oi.diffusion_d


def test_bohr_sommerfeld_levels_track_quantum_levels(portrait):
    sp = spc.diagonalize(portrait.params, 40)
    q = np.array([lv.eps for lv in sp.levels if lv.label == "2"])
    bs = np.array([e for _, e in cl.bohr_sommerfeld_levels(portrait, 2)])
    spacing = np.diff(q).mean()
    np.testing.assert_array_less(np.abs(bs[:4] - q[:4]), 0.05 * spacing)


def test_undriven_weyl_levels_are_exact():
    # with a tiny drive the region-2 levels approach the Fock energies
    p = ModelParams.from_ratios(8, 1e-4)
    pp = cl.find_stationary_points(p)
    n = np.arange(3)
    exact = -4.0 * n + 0.5 * n**2
    bs = np.array([e for _, e in cl.bohr_sommerfeld_levels(pp, 1)])[::-1][:3]
    assert np.max(np.abs(np.sort(bs)[::-1] - exact)) < 1e-3
