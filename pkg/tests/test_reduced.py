import numpy as np
import pytest

from kerrmp import reduced
from kerrmp.params import ModelParams


@pytest.fixture(scope="module")
def gen():
    p = ModelParams.from_ratios(12.03, 0.3, alpha3_ratio=1e-4, gamma=1e-3, n_thermal=1.0)
    return reduced.build_reduced_generator(p)


def test_rate_block_conserves_probability(gen):
    m = gen.population_block().toarray()
    assert np.all(m - np.diag(np.diag(m)) >= 0)
    np.testing.assert_allclose(m.sum(axis=0), 0.0, atol=1e-12 * np.abs(m).max())
    full = gen.matrix().toarray()
    np.testing.assert_allclose(full[:gen.n_levels].sum(axis=0), 0.0, atol=1e-12 * np.abs(full).max())


def test_stationary_state_is_normalized_and_positive(gen):
    st = reduced.reduced_steady_state(gen)
    assert abs(st.diag.sum() - 1) < 1e-12
    assert st.diag.min() > -1e-12
    assert abs(sum(st.occupations()) - 1) < 1e-12


def test_eliminating_coherences_gives_the_same_populations(gen):
    a = reduced.reduced_steady_state(gen)
    b = reduced.reduced_steady_state(gen, eliminate=True)
    np.testing.assert_allclose(a.diag, b.diag, atol=1e-10)
    np.testing.assert_allclose(a.offdiag, b.offdiag, atol=1e-10)


def test_evolution_conserves_probability_and_relaxes(gen):
    st = reduced.reduced_steady_state(gen)
    p0 = np.zeros(gen.n_levels)
    p0[0] = 1.0
    times = [0.0, 10.0, 1e6]
    p, _ = reduced.evolve(gen, p0, np.zeros(gen.n_pairs, complex), times)
    np.testing.assert_allclose(p.sum(axis=1), 1.0, atol=1e-9)
    np.testing.assert_allclose(p[-1], st.diag, atol=1e-6)


def test_zero_damping_rejected():
    g = reduced.build_reduced_generator(ModelParams.from_ratios(12, 0.3))
    with pytest.raises(ValueError):
        reduced.reduced_steady_state(g)


def test_pair_blocks_are_positive(gen):
    st = reduced.reduced_steady_state(gen)
    assert gen.n_pairs > 0
    for pr, z in zip(gen.pairs, st.offdiag):
        assert abs(z) ** 2 <= st.diag[pr.i1] * st.diag[pr.i3] + 1e-15
