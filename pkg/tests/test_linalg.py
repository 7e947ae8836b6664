import numpy as np
import pytest
from hypothesis import given, strategies as st

from grwlab import linalg as la


def test_partial_trace_of_product_state(gen):
    a = la.random_density(3, gen)
    b = la.random_density(2, gen)
    ab = la.tensor_product(a, b)
    assert np.allclose(la.partial_trace(ab, (3, 2), "env"), a)
    assert np.allclose(la.partial_trace(ab, (3, 2), "sys"), b)


def test_partial_trace_rejects_bad_dims():
    with pytest.raises(la.DimensionError):
        la.partial_trace(np.eye(6), (2, 2))
    with pytest.raises(ValueError):
        la.partial_trace(np.eye(4), (2, 2), over="both")


def test_psd_sqrt_squares_back(gen):
    rho = la.random_density(5, gen, rank=2)
    r = la.psd_sqrt(rho)
    assert np.allclose(r @ r, rho, atol=1e-10)
    assert la.is_hermitian(r)


def test_psd_sqrt_rejects_negative():
    with pytest.raises(la.LinalgError):
        la.psd_sqrt(np.diag([1.0, -0.1]))


def test_herm_eig_rejects_non_hermitian():
    with pytest.raises(la.NotHermitianError):
        la.herm_eig(np.array([[0, 1], [0, 0]]))


def test_trace_distance_of_orthogonal_pure_states():
    assert la.trace_distance(la.projector(la.ket(2, 0)), la.projector(la.ket(2, 1))) == pytest.approx(1.0)


def test_expm_is_unitary_and_matches_scipy(gen):
    from scipy.linalg import expm

    h = la.random_hermitian(4, gen)
    u = la.expm_skew_herm(h, 0.7)
    assert np.allclose(u @ u.conj().T, np.eye(4), atol=1e-12)
    assert np.allclose(u, expm(-0.7j * h), atol=1e-10)


def test_schmidt_rank():
    prod = np.kron(la.ket(2, 0), la.ket(3, 1))
    bell = la.normalize(np.kron(la.ket(2, 0), la.ket(2, 0)) + np.kron(la.ket(2, 1), la.ket(2, 1)))
    assert la.schmidt_rank(prod, (2, 3)) == 1
    assert la.schmidt_rank(bell, (2, 2)) == 2
    assert np.allclose(la.schmidt_coefficients(bell, (2, 2)), [2**-0.5] * 2)


def test_normalize_zero_raises():
    with pytest.raises(la.LinalgError):
        la.normalize(np.zeros(3))


@given(st.integers(1, 4), st.integers(1, 4), st.integers(0, 2**31))
def test_partial_traces_preserve_trace(d1, d2, s):
    rho = la.random_density(d1 * d2, np.random.default_rng(s))
    for over in ("sys", "env"):
        red = la.partial_trace(rho, (d1, d2), over)
        assert np.trace(red).real == pytest.approx(1.0)
        assert np.linalg.eigvalsh(la.hermitize(red))[0] > -1e-12


@given(st.integers(1, 5), st.integers(0, 2**31))
def test_trace_distance_is_a_bounded_metric(d, s):
    g = np.random.default_rng(s)
    a, b, c = (la.random_density(d, g) for _ in range(3))
    dab = la.trace_distance(a, b)
    assert 0 <= dab <= 1 + 1e-12
    assert dab == pytest.approx(la.trace_distance(b, a))
    assert dab <= la.trace_distance(a, c) + la.trace_distance(c, b) + 1e-12
