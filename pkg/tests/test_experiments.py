import numpy as np
import pytest

from grwlab.experiments import (ScenarioError, ScenarioResult, coupling_hamiltonian, diagonal_projector,
                                pointer_projectors, run_collapse_detection, run_consecutive, run_deviation_sweep,
                                run_two_pointer, run_warming, sequential_outcomes, standard_experiment,
                                swap_operator)
from grwlab.linalg import is_hermitian


def test_builders():
    s = swap_operator(4)
    assert np.allclose(s @ s, np.eye(4))
    p = pointer_projectors()
    assert np.allclose(p["left"] + p["right"], np.eye(4))
    h = coupling_hamiltonian(p["right"])
    assert is_hermitian(h)
    d = diagonal_projector()
    assert np.allclose(d @ d, d) and np.trace(d).real == pytest.approx(2)
    assert not np.allclose(d @ p["right"], p["right"] @ d)


def test_reference_needs_provenance():
    r = ScenarioResult("x")
    with pytest.raises(ValueError):
        r.reference("a", 1.0, "")


def test_collapse_detection_small():
    res = run_collapse_detection(M=5000, seed=3)
    assert res.ok
    assert res.references["P(C>0|Z=1)"]["value"] == pytest.approx(0.46211715726000974)


def test_collapse_detection_refuses_overlapping_packets():
    with pytest.raises(ScenarioError):
        run_collapse_detection(M=10, packets=(5, 6))


def test_two_pointer_small():
    res = run_two_pointer(M=1000, seed=4)
    assert res.ok
    assert 0 <= res.measured["zero_flash_fraction"]["value"] < 0.3


def test_consecutive_small():
    res = run_consecutive(M=5000, seed=5)
    assert res.ok
    table = res.curves["joint_table"]["rows"]
    assert sum(r[1] for r in table) == 5000


def test_trivial_second_experiment_reproduces_first_marginal():
    res = run_consecutive(M=2000, seed=6, trivial_second=True)
    assert res.ok
    assert len(res.curves["joint_table"]["rows"]) == 2


def test_sequential_outcomes_without_gap_repeat():
    exp = standard_experiment(0.0)
    psi = np.array([0.6, 0, 0, 0.8], dtype=complex)
    z1, z2 = sequential_outcomes(exp, exp, psi, None, 0.0, 500, 1)
    assert np.array_equal(z1, z2)


def test_deviation_sweep_short():
    res = run_deviation_sweep(lam_grid=(0.0, 1e-2, 1e-1), n_max=2, nodes=6)
    assert res.passed["d(0)"] and res.passed["log_log_slope"]


def test_warming_small():
    res = run_warming(M=3000, seed=7, n_points=4)
    assert res.ok
