import numpy as np
import pytest
from hypothesis import given, strategies as st

from grwlab.jump import FlashHistory
from grwlab.linalg import partial_trace, random_state
from grwlab.model import GrwModel, SystemSplit
from grwlab.ontology import (AMBIGUOUS, MacroPartition, default_readout_window, macro_state_f, macro_state_m,
                             matter_density, matter_density_from_rho)


def test_localized_particle_is_a_spike():
    m = GrwModel(1, 5, spacing=0.5, masses=(2.0,))
    fld = matter_density(m, m.localized_state([3]))
    expected = np.zeros(5)
    expected[3] = 2.0 / 0.5
    assert np.allclose(fld.values, expected)
    assert fld.total_mass == pytest.approx(2.0)


def test_two_particles_on_one_site():
    m = GrwModel(2, 3)
    fld = matter_density(m, m.localized_state([1, 1]))
    assert np.allclose(fld.values, [0, 2, 0])


def test_partial_density_adds_up(gen):
    m = GrwModel(2, 3, masses=(1.0, 3.0))
    psi = random_state(9, gen)
    total = matter_density(m, psi).values
    a = matter_density(m, psi, SystemSplit((0,))).values
    b = matter_density(m, psi, SystemSplit((1,))).values
    assert np.allclose(a + b, total)


def test_density_from_reduced_state(gen):
    m = GrwModel(2, 3, masses=(1.0, 3.0))
    psi = random_state(9, gen)
    rho_sys = partial_trace(np.outer(psi, psi.conj()), (3, 3), "env")
    direct = matter_density(m, psi, SystemSplit((0,))).values
    assert np.allclose(matter_density_from_rho(m, rho_sys, (0,)).values, direct)


def test_partition_validation():
    with pytest.raises(ValueError):
        MacroPartition({"a": [0, 1], "b": [1]})
    with pytest.raises(ValueError):
        MacroPartition({"a": [0]}, theta=0.5)
    with pytest.raises(ValueError):
        MacroPartition({AMBIGUOUS: [0]})


def test_macro_states():
    m = GrwModel(1, 4)
    part = MacroPartition({"l": [0, 1], "r": [2, 3]}, 0.9)
    assert macro_state_m(matter_density(m, m.localized_state([3])), part) == "r"
    psi = (m.localized_state([0]) + m.localized_state([3])) / np.sqrt(2)
    assert macro_state_m(matter_density(m, psi), part) == AMBIGUOUS


def test_flash_readout_uses_trailing_window():
    part = MacroPartition({"l": [0, 1], "r": [2, 3]}, 0.9)
    h = FlashHistory([0.1, 0.95, 0.97], [3, 0, 1], [0, 0, 0], 0.0, 1.0)
    assert default_readout_window((0.0, 1.0)) == pytest.approx((0.9, 1.0))
    assert macro_state_f(h, part) == "l"
    assert macro_state_f(h, part, (0.0, 1.0)) == AMBIGUOUS
    assert macro_state_f(FlashHistory.empty(0, 1), part) == AMBIGUOUS
    assert macro_state_f(h, part, labels=[1]) == AMBIGUOUS


@given(st.integers(1, 3), st.integers(1, 4), st.integers(0, 2**31))
def test_mass_is_conserved(n, sites, seed):
    g = np.random.default_rng(seed)
    masses = tuple(g.uniform(0.5, 2.0, size=n))
    m = GrwModel(n, sites, spacing=0.7, masses=masses)
    fld = matter_density(m, random_state(m.dim, g))
    assert fld.total_mass == pytest.approx(sum(masses))
    assert np.all(fld.values >= 0)
