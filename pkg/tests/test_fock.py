import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from kerrmp.fock import (annihilation, apply_lindblad, build_hamiltonian, build_lindblad_superoperator,
                         thermal_state, unvec, vec)
from kerrmp.params import ModelParams, TruncationError


def test_hamiltonian_diagonal_and_drive():
    p = ModelParams(delta=2.0, alpha=1.0, drive=0.3, alpha_q={3: 0.01})
    h = build_hamiltonian(p, 6)
    n = np.arange(7)
    np.testing.assert_allclose(np.diag(h), -2.0 * n + 0.5 * n**2 + 0.01 * n**3)
    np.testing.assert_allclose(np.diag(h, 1), 0.3 * np.sqrt(n[1:]))


def test_truncation_guard():
    p = ModelParams(delta=10.0, alpha=1.0)
    with pytest.raises(TruncationError):
        build_hamiltonian(p, 12)
    build_hamiltonian(p, 12, check=False)


def test_from_ratios_resolves_f_crit():
    p = ModelParams.from_ratios(12, 0.5)
    assert p.delta == 6.0
    assert abs(p.drive / p.f_crit() - 0.5) < 1e-14


def test_vectorization_roundtrip_is_column_major():
    x = np.arange(9.0).reshape(3, 3)
    assert np.array_equal(vec(x), x.ravel(order="F"))
    assert np.array_equal(unvec(vec(x), 3), x)


def test_superoperator_matches_direct_application():
    p = ModelParams(delta=1.0, alpha=1.0, drive=0.4, gamma=0.1, n_thermal=0.3)
    rng = np.random.default_rng(1)
    a = np.zeros((8, 8), dtype=complex)
    a[:6, :6] = rng.normal(size=(6, 6)) + 1j * rng.normal(size=(6, 6))
    rho = a @ a.conj().T
    rho /= np.trace(rho)
    gen = build_lindblad_superoperator(p, 7)
    # the two forms differ only where the truncated creation operator hits the cutoff
    np.testing.assert_allclose(unvec(gen @ vec(rho), 8)[:7, :7], apply_lindblad(p, rho)[:7, :7], atol=1e-12)


def test_thermal_state_is_stationary_without_drive():
    p = ModelParams(delta=1.0, alpha=1.0, gamma=0.2, n_thermal=0.5)
    rho = thermal_state(60, 0.5)
    gen = build_lindblad_superoperator(p, 59)
    # stationary up to the population leaking past the cutoff
    assert np.linalg.norm(gen @ vec(rho)) < 1e-8


@given(delta=st.floats(0.1, 3.0), drive=st.floats(0.0, 2.0), gamma=st.floats(1e-4, 1.0),
       nth=st.floats(0.0, 3.0), a3=st.floats(-0.01, 0.01))
def test_generator_preserves_trace_and_hermiticity(delta, drive, gamma, nth, a3):
    p = ModelParams(delta=delta, alpha=1.0, drive=drive, gamma=gamma, n_thermal=nth, alpha_q={3: a3})
    dim = 12
    h = build_hamiltonian(p, dim - 1, check=False)
    assert np.allclose(h, h.T)
    gen = build_lindblad_superoperator(p, dim - 1, hamiltonian=h)
    trace_row = np.zeros(dim * dim)
    trace_row[np.arange(dim) * (dim + 1)] = 1.0
    assert np.max(np.abs(trace_row @ gen)) < 1e-12 * max(1.0, abs(gen).max())
    rng = np.random.default_rng(0)
    x = rng.normal(size=(dim, dim)) + 1j * rng.normal(size=(dim, dim))
    rho = x + x.conj().T
    out = unvec(gen @ vec(rho), dim)
    assert np.allclose(out, out.conj().T, atol=1e-10)


def test_annihilation_commutator():
    a = annihilation(6).toarray()
    comm = a @ a.T - a.T @ a
    np.testing.assert_allclose(np.diag(comm)[:-1], 1.0)
