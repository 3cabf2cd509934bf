import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from kerrmp import spectrum as spc
from kerrmp.params import ModelParams


def test_undriven_spectrum_is_the_diagonal():
    p = ModelParams(delta=3.3, alpha=1.0)
    sp = spc.diagonalize(p, 30)
    n = np.arange(31)
    np.testing.assert_allclose(sp.energies, np.sort(-3.3 * n + 0.5 * n**2), atol=1e-12)


@given(st.integers(4, 12))
def test_levels_n_and_m_minus_n_degenerate_at_resonance(m):
    p = ModelParams.from_ratios(m, 0.0)
    sp = spc.diagonalize(p, 3 * m)
    clustered = {i for c in sp.degenerate for i in c}
    # every state below n = m/2 has a partner
    assert len(clustered) >= 2 * (m // 2)
    n = np.arange(3 * m + 1)
    e = -0.5 * m * n + 0.5 * n**2
    for k in range(m // 2):
        assert abs(e[k] - e[m - k]) < 1e-12


def test_parabolic_refinement_recovers_synthetic_gap():
    t = 0.0123

    def levels(x):
        h = np.array([[x, t, 0.0], [t, -x, 0.0], [0.0, 0.0, 5.0]])
        return np.linalg.eigvalsh(h)

    xs = np.linspace(-0.2, 0.17, 38)
    gaps = np.array([levels(x)[1] - levels(x)[0] for x in xs])
    k = int(np.argmin(gaps))
    xm, g2 = spc.refine_minimum(xs[k - 1:k + 2], gaps[k - 1:k + 2] ** 2)
    assert abs(math.sqrt(g2) - 2 * t) < 1e-6
    assert abs(xm) < 1e-6


def test_scan_finds_anticrossings_near_integer_m():
    grid = spc.detuning_grid(8, 0.1, 0.25, 51)
    acs = spc.scan_anticrossings(grid, 40)
    assert acs
    for ac in acs:
        assert abs(2 * ac.delta_at_min - 8) < 1e-3
        assert ac.min_gap > 0


def test_shift_vanishes_without_high_order_terms_and_is_linear():
    base = ModelParams.from_ratios(6, 0.1)
    pairs = spc.resonant_pairs(base)
    assert pairs
    for pr in pairs:
        assert spc.predict_shift(pr, base) == 0.0
        s1 = spc.predict_shift(pr, ModelParams.from_ratios(6, 0.1, alpha3_ratio=0.002))
        s2 = spc.predict_shift(pr, ModelParams.from_ratios(6, 0.1, alpha3_ratio=0.004))
        assert s1 != 0.0
        assert abs(s2 - 2 * s1) < 1e-10 * abs(s1)


def test_unmixed_pair_is_rejected():
    p = ModelParams.from_ratios(6, 0.1, alpha3_ratio=0.002)
    with pytest.raises(spc.MixingError):
        spc.predict_shift((0, 1), p)


def test_region_weights_partition_each_state():
    sp = spc.diagonalize(ModelParams.from_ratios(8, 0.4), 40)
    np.testing.assert_allclose(sp.weights.sum(axis=1), 1.0)
    assert set(sp.labels) <= {"1", "2", "3", "3'"}
    assert sp.indices("2")
