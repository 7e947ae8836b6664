import numpy as np
import pytest
from hypothesis import given, strategies as st

from grwlab.model import (GrwModel, ModelError, SystemSplit, build_hamiltonian, config_index,
                          configurations, embed_single, hopping_matrix, split)


def test_hopping_matrix_oracle():
    h = hopping_matrix(3, mass=1.0, spacing=1.0)
    expected = np.array([[1, -0.5, 0], [-0.5, 1, -0.5], [0, -0.5, 1]])
    assert np.allclose(h, expected)
    assert np.allclose(hopping_matrix(3, mass=2.0, spacing=0.5), expected * 2.0)


def test_collapse_kernel_oracle_truncated_gaussian():
    m = GrwModel(1, 3, sigma=1.0, lam=1.0)
    g = np.exp(-np.array([0.0, 1.0, 4.0]) / 2)
    assert np.allclose(m.collapse.kernel[0], g / g.sum())
    mid = np.exp(-np.array([1.0, 0.0, 1.0]) / 2)
    assert np.allclose(m.collapse.kernel[1], mid / mid.sum())


def test_configuration_order_first_label_most_significant():
    c = configurations(2, 3)
    assert c.shape == (9, 2)
    assert tuple(c[5]) == (1, 2)
    assert config_index((1, 2), 3) == 5
    with pytest.raises(ModelError):
        config_index((3, 0), 3)


def test_embed_single_acts_on_one_label():
    x = np.diag([0.0, 1.0, 2.0])
    op = embed_single(x, 1, 2, 3)
    assert np.allclose(np.diag(op), configurations(2, 3)[:, 1])


def test_contact_and_potential():
    h = build_hamiltonian("hopping", 2, 3, {"contact": 2.0, "potential": [0, 1, 0]})
    cfg = configurations(2, 3)
    kin = np.diag(build_hamiltonian("hopping", 2, 3)).real
    d = np.diag(h).real - kin
    assert np.allclose(d, 2.0 * (cfg[:, 0] == cfg[:, 1]) + (cfg == 1).sum(axis=1))


@pytest.mark.parametrize("kw", [dict(sites=0), dict(spacing=0.0), dict(sigma=-1.0), dict(lam=-1.0),
                                dict(lam=np.inf), dict(masses=(1.0, 2.0))])
def test_invalid_models_are_rejected(kw):
    args = dict(n_particles=1, sites=3)
    args.update(kw)
    with pytest.raises(ModelError):
        GrwModel(**args)


def test_non_hermitian_hamiltonian_rejected():
    with pytest.raises(ModelError):
        GrwModel(1, 2, hamiltonian=np.array([[0, 1], [0, 0]]))


def test_zero_particles_is_a_scalar_model():
    m = GrwModel(0, 4, lam=1.0)
    assert m.dim == 1 and m.total_rate == 0.0


def test_split_of_non_interacting_model_is_isolated():
    m = GrwModel(2, 3, lam=1.0, hamiltonian=build_hamiltonian("hopping", 2, 3))
    m_sys, m_env, iso = split(m, SystemSplit((1,)))
    assert iso
    perm = SystemSplit((1,)).permutation(m)
    h = m.hamiltonian[np.ix_(perm, perm)]
    rebuilt = np.kron(m_sys.hamiltonian, np.eye(3)) + np.kron(np.eye(3), m_env.hamiltonian)
    assert np.allclose(h, rebuilt)


def test_contact_interaction_breaks_isolation():
    m = GrwModel(2, 3, lam=1.0, hamiltonian=build_hamiltonian("hopping", 2, 3, {"contact": 1.0}))
    assert not split(m, SystemSplit((0,)))[2]


def test_region_split_is_not_isolated_with_collapses():
    m = GrwModel(1, 4, lam=1.0)
    assert not split(m, SystemSplit((0,), (0, 1)))[2]


def test_split_validation():
    m = GrwModel(2, 3)
    for bad in (SystemSplit((0, 0)), SystemSplit((2,)), SystemSplit((0,), (5,))):
        with pytest.raises(ModelError):
            bad.validate(m)


@given(st.integers(1, 12), st.floats(0.2, 5.0), st.floats(0.3, 3.0))
def test_collapse_completeness(sites, sigma, spacing):
    m = GrwModel(1, sites, spacing=spacing, sigma=sigma * spacing, lam=1.0)
    k = m.collapse.kernel
    assert np.all(k >= 0)
    assert np.allclose(spacing * k.sum(axis=1), 1.0, atol=1e-12)


@given(st.integers(1, 3), st.integers(1, 4))
def test_sum_of_collapse_operators_is_identity(n, sites):
    m = GrwModel(n, sites, lam=1.0, sigma=0.8)
    d = m.collapse.diagonals()
    assert np.allclose(m.spacing * d.sum(axis=1), 1.0)


@given(st.integers(1, 3), st.integers(2, 4), st.floats(0.0, 3.0))
def test_propagator_is_unitary(n, sites, t):
    m = GrwModel(n, sites, hamiltonian=build_hamiltonian("hopping", n, sites))
    u = m.propagator(t)
    assert np.allclose(u @ u.conj().T, np.eye(m.dim), atol=1e-10)
