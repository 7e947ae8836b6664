import numpy as np
import pytest

from grwlab.experiments import diagonal_projector, standard_experiment
from grwlab.formalism import (HistoryEvent, KrausMap, PovmError, RareEventError, compose_experiments,
                              conditional_density_matrix, consistency_error, flow_law, gap_kraus,
                              projectivity_error, quantum_povm, quantum_superops)
from grwlab.linalg import random_density, random_hermitian, trace_distance
from grwlab.master import INTEGRATOR_TOL, build_channel, evolve_density
from grwlab.model import GrwModel, build_hamiltonian


def quantum_law(**kw):
    exp = standard_experiment(0.0, **kw)
    return quantum_povm(exp), quantum_superops(exp)


def test_repeated_ideal_measurement_is_projective_and_repeatable():
    joint, maps = compose_experiments(quantum_law(), quantum_law())
    assert projectivity_error(joint) <= 1e-9
    assert np.allclose(joint[("left", "right")], 0, atol=1e-12)
    assert consistency_error(joint, maps) <= 1e-10


def test_non_commuting_sequence_is_complete_but_not_projective():
    joint, maps = compose_experiments(quantum_law(), quantum_law(object_projector=diagonal_projector()))
    assert joint.completeness_error() <= 1e-10
    assert projectivity_error(joint) > 0.1
    assert consistency_error(joint, maps) <= 1e-10


def test_grw_composition_with_channel_gap(gen):
    law1 = flow_law(standard_experiment(0.15))
    law2 = flow_law(standard_experiment(0.15, object_projector=diagonal_projector()))
    gap = build_channel(GrwModel(1, 4, lam=0.15), (0, 0.5))
    joint, maps = compose_experiments(law1, law2, gap)
    assert joint.completeness_error() <= 1e-6
    assert joint.min_eigenvalue() >= -1e-8
    assert consistency_error(joint, maps) <= 1e-8
    rho = random_density(4, gen)
    marg1 = joint.coarsen(lambda z: z[0]).probabilities(rho)
    assert np.allclose(marg1, law1[0].probabilities(rho), atol=1e-6)


def test_gap_specifications(gen):
    h = random_hermitian(4, gen)
    a = gap_kraus(("unitary", h, 0.3), 4)
    assert np.allclose(a.ops[0] @ a.ops[0].conj().T, np.eye(4))
    assert gap_kraus(None, 4).rank == 1
    with pytest.raises(PovmError):
        gap_kraus(KrausMap(np.eye(2)), 4)
    with pytest.raises(PovmError):
        gap_kraus("free", 4)


def small_model(lam=0.8):
    return GrwModel(1, 4, lam=lam, sigma=0.8, hamiltonian=build_hamiltonian("hopping", 1, 4))


def test_unconditional_event_gives_master_equation(gen):
    m = small_model()
    rho0 = random_density(4, gen)
    rho, p = conditional_density_matrix(m, rho0, (0, 1), HistoryEvent("all"))
    assert p == pytest.approx(1.0)
    assert trace_distance(rho, evolve_density(m, rho0, (0, 1))) <= 1e-12


def test_count_events_have_poisson_probabilities(gen):
    m = small_model()
    rho0 = random_density(4, gen)
    probs = [conditional_density_matrix(m, rho0, (0, 1), HistoryEvent("count", n))[1] for n in range(3)]
    lam = 0.8
    expected = [np.exp(-lam), lam * np.exp(-lam), lam**2 / 2 * np.exp(-lam)]
    assert np.allclose(probs, expected, atol=10 * INTEGRATOR_TOL)
    _, p_ge = conditional_density_matrix(m, rho0, (0, 1), HistoryEvent("count", 1, "ge"))
    assert p_ge == pytest.approx(1 - np.exp(-lam), abs=10 * INTEGRATOR_TOL)


def test_no_flash_state_is_unitary_when_kernel_is_flat():
    m = small_model()
    psi = np.full(4, 0.5, dtype=complex)
    rho, _ = conditional_density_matrix(m, psi, (0, 1), HistoryEvent("count", 0))
    u = m.propagator(1.0)
    assert trace_distance(rho, np.outer(u @ psi, (u @ psi).conj())) <= 1e-6


def test_monte_carlo_route_agrees():
    m = small_model()
    rho0 = random_density(4, np.random.default_rng(3))
    ev = HistoryEvent("first-region", sites=(0, 1))
    exact, p = conditional_density_matrix(m, rho0, (0, 1), ev)
    mc, p_mc = conditional_density_matrix(m, rho0, (0, 1), ev, method="mc", M=20_000, seed=5)
    assert abs(p - p_mc) <= 4 * np.sqrt(p * (1 - p) / 20_000)
    assert trace_distance(exact, mc) <= 0.03


def test_rare_event_refused():
    m = small_model(lam=1e-4)
    with pytest.raises(RareEventError):
        conditional_density_matrix(m, np.eye(4) / 4, (0, 1), HistoryEvent("count", 3))
    with pytest.raises(ValueError):
        conditional_density_matrix(m, np.eye(4) / 4, (0, 1), HistoryEvent("all"), method="mc")
