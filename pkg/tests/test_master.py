import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy.linalg import expm

from grwlab.linalg import random_density, random_hermitian, trace_distance
from grwlab.master import (INTEGRATOR_TOL, ChannelMatrix, PsdViolationError, build_channel, evolve_density,
                           heisenberg_operators, step_count, unvec, vec)
from grwlab.model import GrwModel, build_hamiltonian


def lindblad_generator(model):
    """Superoperator built directly from explicit collapse operators."""
    d = model.dim
    h = model.hamiltonian
    eye = np.eye(d)
    gen = -1j * (np.kron(eye, h) - np.kron(h.T, eye))
    for i in range(model.n_particles):
        for x in range(model.sites):
            s = np.diag(np.sqrt(model.collapse.diagonal(i, x)))
            gen += model.lam * model.spacing * np.kron(s.conj(), s)
    gen -= model.lam * model.n_particles * np.eye(d * d)
    return gen


def model_2x3(lam=0.8):
    return GrwModel(2, 3, lam=lam, sigma=0.9,
                    hamiltonian=build_hamiltonian("hopping", 2, 3, {"contact": 0.7}))


def test_vec_round_trip(gen):
    r = random_density(4, gen)
    assert np.array_equal(unvec(vec(r), 4), r)


def test_pure_collapse_dephasing_oracle(gen):
    m = GrwModel(1, 4, lam=1.3, sigma=1.0)
    rho0 = random_density(4, gen)
    k = m.collapse.overlap_kernel()
    exact = rho0 * np.exp(-1.3 * 0.9 * (1 - k))
    assert np.allclose(evolve_density(m, rho0, (0, 0.9)), exact, atol=1e-12)


def test_matches_explicit_generator(gen):
    m = model_2x3()
    rho0 = random_density(m.dim, gen)
    exact = unvec(expm(1.5 * lindblad_generator(m)) @ vec(rho0), m.dim)
    assert trace_distance(evolve_density(m, rho0, (0, 1.5)), exact) <= INTEGRATOR_TOL


def test_unitary_limit(gen):
    m = model_2x3(lam=0.0)
    rho0 = random_density(m.dim, gen)
    u = m.propagator(0.6)
    assert np.allclose(evolve_density(m, rho0, (0, 0.6)), u @ rho0 @ u.conj().T, atol=1e-9)


def test_channel_is_cptp_and_composes(gen):
    m = model_2x3()
    c1 = build_channel(m, (0, 0.4))
    c2 = build_channel(m, (0, 0.8))
    assert c1.trace_defect() < 1e-10
    assert np.linalg.eigvalsh(c1.choi())[0] > -1e-10
    assert np.allclose(c1.compose(c1).matrix, c2.matrix, atol=1e-8)
    rho = random_density(m.dim, gen)
    assert np.allclose(c1.apply(rho), evolve_density(m, rho, (0, 0.4)), atol=1e-12)


def test_channel_identity_and_unitary():
    u = expm(-1j * random_hermitian(3, np.random.default_rng(1)))
    rho = random_density(3, np.random.default_rng(2))
    assert np.allclose(ChannelMatrix.identity(3).apply(rho), rho)
    assert np.allclose(ChannelMatrix.unitary(u).apply(rho), u @ rho @ u.conj().T)


def test_heisenberg_dual(gen):
    m = model_2x3()
    rho = random_density(m.dim, gen)
    x = random_hermitian(m.dim, gen)
    lhs = np.trace(evolve_density(m, rho, (0, 0.7)) @ x)
    rhs = np.trace(rho @ heisenberg_operators(m, x, 0.7))
    assert lhs == pytest.approx(rhs, abs=1e-9)


def test_step_count_resolves_rates():
    m = model_2x3(lam=5.0)
    assert step_count(m, 1.0) >= 5000
    assert step_count(m, 1.0, steps=7) == 7


def test_coarse_steps_can_violate_positivity():
    m = GrwModel(1, 6, lam=400.0, sigma=0.3)
    rho = np.full((6, 6), 1 / 6, dtype=complex)
    with pytest.raises(PsdViolationError):
        evolve_density(m, rho, (0, 1.0), steps=1)


@given(st.floats(0.0, 2.0), st.floats(0.0, 2.0), st.integers(0, 2**31))
def test_trace_and_positivity_preserved(lam, t, s):
    m = GrwModel(1, 4, lam=lam, sigma=0.8, hamiltonian=build_hamiltonian("hopping", 1, 4))
    rho = evolve_density(m, random_density(4, np.random.default_rng(s)), (0, t))
    assert np.trace(rho).real == pytest.approx(1.0, abs=1e-10)
    assert np.linalg.eigvalsh(rho)[0] > -1e-9
