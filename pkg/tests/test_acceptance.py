"""Acceptance suite: one test per criterion, each at its stated tolerance."""

import math
import warnings

import numpy as np
import pytest

from kerrmp import experiments as ex
from kerrmp import fpe, lindblad, tunneling
from kerrmp.classical import find_stationary_points
from kerrmp.params import ModelParams


@pytest.fixture(autouse=True)
def _quiet():
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        warnings.simplefilter("ignore", UserWarning)
        yield


def test_c01_pure_kerr_anticrossings_coincide_with_integer_m():
    for m in range(8, 17):
        acs = ex.anticrossings_near(m, 0.1, half_width=0.25, points=201, n_max=max(60, 2 * m + 20))
        assert acs, f"no anticrossing found near m={m}"
        worst = max(abs(2 * a.delta_at_min - m) for a in acs)
        assert worst < 1e-3, f"m={m}: anticrossing {worst:.2e} away from resonance"


def test_c02_fine_structure_splitting_matches_first_order_shifts():
    for m in (5, 6, 7):
        shifts, acs = ex.compare_shifts(m, 0.1, 0.005)
        assert len(shifts) >= 2
        pos = np.sort([2 * a.delta_at_min for a in acs])
        # distinct pairs are resolved far beyond the polishing tolerance
        assert np.min(np.diff(pos)) > 1e-6
        for s in shifts:
            assert s.relative_error < 0.2, f"m={m} pair {s.pair}: {s.relative_error:.3f}"


@pytest.fixture(scope="module")
def motion():
    return ex.peak_motion(24, 0.4, [0.0, 5e-5, 1e-4], gamma=1e-5, n_thermal=3.0, n_max=70)


def test_c03_peaks_move_linearly_with_alpha3(motion):
    assert len(motion.fits) >= 2
    for pair, (_, _, r2) in motion.fits.items():
        assert len(motion.positions[pair]) == 3
        assert r2 > 0.99, f"pair {pair}: R^2 = {r2}"
    # a single merged peak at alpha3 = 0
    assert motion.merged_spread <= motion.step


def test_c04_every_peak_sits_on_an_anticrossing(motion):
    assert motion.unmatched == 0
    for a3, sw in zip(motion.alpha3, motion.sweeps):
        assert sw.peaks, f"no peak at alpha3={a3}"
        c = 0.5 * (sw.x[0] + sw.x[-1])
        acs = ex.anticrossings_near(24, 0.4, alpha3_ratio=a3, half_width=0.5 * (sw.x[-1] - sw.x[0]),
                                    points=sw.x.size, n_max=70, center=c)
        for pos, ac in ex.match_peaks(sw.peaks, acs, sw.step):
            assert ac is not None, f"peak at {pos} without an anticrossing (alpha3={a3})"


def test_c05_side_peaks_vanish_in_order_of_tunneling_amplitude():
    res = ex.side_peak_extinction(24, 0.4, 1e-4, [1e-7, 1e-6, 1e-5, 1e-4], n_thermal=3.0, n_max=70)
    assert len(res.side) >= 2
    for p in res.side:
        assert res.monotone[p], f"prominence of {p} not decreasing: {res.prominence[p]}"
        assert math.isfinite(res.extinction[p]), f"side peak {p} never vanishes"
    assert res.rank_correlation >= 0.9


def test_c06_closed_form_matches_finite_volume():
    p = ModelParams.from_ratios(20.0716, 0.2, alpha3_ratio=1e-4, gamma=1e-3, n_thermal=0.5)
    prof = tunneling.lambda_profile(p)
    # without tunneling both reduce to zero-flow solutions and agree to round-off
    d0 = fpe.stationary_solution(p, prof, tunneling=False)
    b0 = fpe.bvp_cross_check(p, prof, d0.diagnostics["tables"], tunneling=False)
    assert d0.flow_J == 0.0 and b0.flow_J == 0.0
    assert max(fpe.sup_mismatch(d0, b0).values()) < 1e-6
    # with the resonant pair, in the locked limit the closed form assumes below eps_crit
    locked = fpe.scaled_profile(prof, lambda_factor=1e6)
    tables = fpe.refine_tables(fpe.coefficient_tables(find_stationary_points(p), extra_nodes=[prof.eps_crit, prof.eps_res]),
                               find_stationary_points(p), 2)
    d = fpe.stationary_solution(p, locked, tables)
    b = fpe.bvp_cross_check(p, locked, tables)
    assert d.flow_J > 0
    mism = fpe.sup_mismatch(d, b)
    assert max(mism.values()) < 0.01, mism
    assert abs(b.flow_J - d.flow_J) < 0.01 * d.flow_J


@pytest.mark.parametrize("m", [16, 20])
def test_c07_fpe_and_quantum_p2_agree(m):
    for x in (float(m), m + 0.2):  # on the resonance peak and between peaks
        p = ModelParams.from_ratios(x, 0.3, gamma=1e-3, n_thermal=3.0)
        assert p.gamma / p.delta <= 1e-3
        dist = fpe.stationary_solution(p, tunneling.lambda_profile(p))
        st = lindblad.attach_occupations(lindblad.steady_state(p, int(2 * x + 46)))
        p2_f, p2_q = dist.occupations[1], st.occupations[1]
        assert abs(p2_f - p2_q) / p2_q < 0.25, f"m={x}: fpe {p2_f:.4f} vs quantum {p2_q:.4f}"


def test_c08_thermal_and_linear_oracles():
    p = ModelParams(delta=2.0, alpha=1.0, drive=0.0, gamma=0.05, n_thermal=3.0)
    st = lindblad.steady_state(p, 150)
    assert abs(st.mean_intensity - 3.0) < 1e-8
    lin = ModelParams(delta=1.5, alpha=1e-12, drive=0.4, gamma=0.2, n_thermal=0.7)
    st = lindblad.steady_state(lin, 80, check=False)
    a, n = lindblad.linear_oscillator_state(lin)
    assert abs(st.mean_a - a) < 1e-6
    assert abs(st.mean_intensity - n) < 1e-6


def test_c09_wkb_action_and_calibrated_amplitude():
    p = ModelParams.from_ratios(8, 0.4)
    pp = find_stationary_points(p)
    width = pp.eps_1 - pp.eps_sep
    assert tunneling.tunneling_action(p, pp.eps_sep + 1e-4 * width) < 1e-3
    eps = pp.eps_sep + width * np.linspace(1e-3, 0.99, 40)
    s = np.array([tunneling.tunneling_action(p, e) for e in eps])
    assert np.all(np.diff(s) > 0)
    cal = ex.wkb_calibration(24, 0.3, n_max=68)
    assert len(cal.anticrossings) >= 5
    assert cal.worst_factor < 3.0


def test_c10_distribution_shapes():
    # alpha Q / (delta gamma) = 0.1 at 2 delta / alpha = 20 means N = 1/2
    p = ModelParams.from_ratios(20.0716, 0.2, alpha3_ratio=1e-4, gamma=1e-3, n_thermal=0.5)
    assert abs(p.alpha * p.noise_q / (p.delta * p.gamma) - 0.1) < 1e-3
    prof = tunneling.lambda_profile(p)
    assert prof.crit_found and prof.eps_res is not None
    d = fpe.stationary_solution(p, prof)
    sep = prof.eps_sep
    # equilibrated branch decays away from the separatrix
    for r in (1, 3):
        assert set(fpe.branch_slopes(d, r, sep, d.eps_crit)) == {-1.0}
    # flow-carrying branch: probability runs up region 1 and back down region 3
    assert d.flow_J > 0
    assert d.at(1, d.eps_res) > d.at(3, d.eps_res)
    assert set(fpe.branch_slopes(d, 1, d.eps_crit, d.eps_res)) == {1.0}
    assert set(fpe.branch_slopes(d, 3, d.eps_crit, d.eps_res)) == {-1.0}
    # no tunneling: region 1 grows away from the separatrix
    d0 = fpe.stationary_solution(p, prof, tunneling=False)
    assert d0.flow_J == 0.0
    assert set(fpe.branch_slopes(d0, 1, sep, prof.eps_1)) == {1.0}
