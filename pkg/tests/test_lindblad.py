import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from kerrmp import lindblad
from kerrmp.params import ModelParams


@settings(max_examples=10)
@given(st.floats(2, 8), st.floats(0.1, 0.8), st.floats(0.02, 0.2), st.floats(0, 2))
def test_steady_state_is_a_density_matrix(m, fr, gamma, nth):
    p = ModelParams.from_ratios(m, fr, gamma=gamma, n_thermal=nth)
    st_ = lindblad.steady_state(p, 30, check=False)
    rho = st_.rho
    assert abs(np.trace(rho) - 1) < 1e-10
    assert np.allclose(rho, rho.conj().T)
    assert np.linalg.eigvalsh(rho).min() > -1e-9
    assert st_.residual < 1e-8


def test_iterative_agrees_with_direct():
    p = ModelParams.from_ratios(6, 0.4, gamma=0.05, n_thermal=0.5)
    a = lindblad.steady_state(p, 30, method="direct", check=False)
    b = lindblad.steady_state(p, 30, method="iterative", check=False)
    assert lindblad.trace_distance(a.rho, b.rho) < 1e-8


def test_occupations_sum_to_one():
    p = ModelParams.from_ratios(8, 0.4, gamma=0.02, n_thermal=1.0)
    st_ = lindblad.attach_occupations(lindblad.steady_state(p, 40))
    assert abs(sum(st_.occupations) - 1) < 1e-9
    assert all(x >= -1e-12 for x in st_.occupations)


def test_zero_damping_rejected():
    with pytest.raises(ValueError):
        lindblad.steady_state(ModelParams.from_ratios(6, 0.4), 20)


def test_peak_positions_parabolic_vertex():
    x = np.linspace(-1, 1, 21)
    y = -(x - 0.033) ** 2
    (pos, _, _), = lindblad.peak_positions(x, y)
    assert abs(pos - 0.033) < 1e-12
