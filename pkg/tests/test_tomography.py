import numpy as np
import pytest

from grwlab.experiments import standard_experiment
from grwlab.formalism import flow_law, grw_povm_mc
from grwlab.formalism.tomography import tomography_matrix, tomography_states
from grwlab.linalg import random_hermitian


@pytest.mark.parametrize("d", [1, 2, 4])
def test_basis_is_informationally_complete(d):
    a = tomography_matrix(tomography_states(d))
    assert a.shape == (d * d, d * d)
    assert np.linalg.matrix_rank(a) == d * d


def test_linear_inversion_recovers_an_operator(gen):
    states = tomography_states(3)
    e = random_hermitian(3, gen)
    probs = np.einsum("bi,ij,bj->b", states.conj(), e, states).real
    est = (np.linalg.pinv(tomography_matrix(states)) @ probs).reshape(3, 3)
    assert np.allclose(est, e)


def test_monte_carlo_povm_within_errors():
    exp = standard_experiment(0.15)
    exact, _ = flow_law(exp)
    res = grw_povm_mc(exp, 4000, 77)
    assert res.counts.shape == (16, 2)
    assert np.all(res.counts.sum(axis=1) == 4000)
    assert res.agrees_with(exact, 4.0)
    assert res.povm.completeness_error() < 1e-12


def test_monte_carlo_povm_is_reproducible_across_workers():
    exp = standard_experiment(0.15)
    a = grw_povm_mc(exp, 300, 1, jobs=1)
    b = grw_povm_mc(exp, 300, 1, jobs=2)
    assert np.array_equal(a.counts, b.counts)
