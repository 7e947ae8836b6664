import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy import stats

from grwlab import rng as prng
from grwlab.jump import (Ensemble, FlashHistory, HistoryError, center_distribution,
                         history_density, l_operator, sample_collapse_center, simulate, simulate_batch,
                         simulate_ensemble)
from grwlab.model import GrwModel, build_hamiltonian


def hopping_model(n=1, sites=5, lam=1.0, sigma=1.0):
    return GrwModel(n, sites, lam=lam, sigma=sigma, hamiltonian=build_hamiltonian("hopping", n, sites))


def test_history_validation():
    with pytest.raises(HistoryError):
        FlashHistory([0.5, 0.2], [0, 1], [0, 0], 0.0, 1.0)
    with pytest.raises(HistoryError):
        FlashHistory([1.0], [0], [0], 0.0, 1.0)
    h = FlashHistory([0.1, 0.6], [2, 3], [0, 1], 0.0, 1.0)
    assert len(h.restrict(0.5, 1.0)) == 1
    assert FlashHistory.from_events(h.events, 0.0, 1.0) == h


def test_zero_rate_gives_no_flashes_and_unitary_evolution():
    m = hopping_model(lam=0.0)
    psi = m.localized_state([2])
    ens = simulate_batch(m, psi, (0, 1.3), 1, np.arange(4))
    assert ens.times.size == 0
    assert np.allclose(ens.final_states, m.propagator(1.3) @ psi)


def test_flash_counts_are_poisson():
    m = hopping_model(n=2, sites=3, lam=0.75)
    ens = simulate_ensemble(m, m.localized_state([0, 2]), (0, 1), 99, 20_000)
    c = ens.counts
    mean = 1.5
    assert abs(c.mean() - mean) < 4 * np.sqrt(mean / c.size)
    k = np.arange(6)
    obs = np.append(np.bincount(np.minimum(c, 5), minlength=6)[:5], np.sum(c >= 5))
    exp = np.append(stats.poisson.pmf(k[:5], mean), stats.poisson.sf(4, mean)) * c.size
    assert stats.chisquare(obs, exp).pvalue > 1e-3


def test_labels_are_uniform():
    m = hopping_model(n=3, sites=2, lam=1.0)
    ens = simulate_ensemble(m, m.localized_state([0, 1, 0]), (0, 2), 5, 5000)
    obs = np.bincount(ens.labels, minlength=3)
    assert stats.chisquare(obs).pvalue > 1e-3


def test_batching_and_chunking_do_not_change_results():
    m = hopping_model(n=2, sites=3, lam=1.0)
    psi = m.localized_state([1, 1])
    whole = simulate_ensemble(m, psi, (0, 2), 8, 300, chunk=1000)
    parts = simulate_ensemble(m, psi, (0, 2), 8, 300, chunk=37)
    single = simulate_batch(m, psi, (0, 2), 8, prng.stream_id(np.array([123])))
    for name in ("offsets", "times", "sites", "labels", "final_states", "streams"):
        assert np.array_equal(getattr(whole, name), getattr(parts, name))
    assert single.history(0) == whole.history(123)
    assert np.array_equal(single.final_states[0], whole.final_states[123])


def test_parallel_workers_do_not_change_results():
    m = hopping_model(n=1, sites=4, lam=2.0)
    psi = m.localized_state([0])
    a = simulate_ensemble(m, psi, (0, 1), 3, 200, chunk=50, jobs=1)
    b = simulate_ensemble(m, psi, (0, 1), 3, 200, chunk=50, jobs=2)
    assert np.array_equal(a.times, b.times) and np.array_equal(a.final_states, b.final_states)


def test_checkpoints_do_not_alter_flashes():
    m = hopping_model(n=2, sites=3, lam=1.0)
    psi = m.localized_state([0, 2])
    a = simulate_batch(m, psi, (0, 2), 4, np.arange(50))
    b = simulate_batch(m, psi, (0, 2), 4, np.arange(50), checkpoint_times=[0.5, 1.0, 1.5])
    assert np.array_equal(a.times, b.times) and np.array_equal(a.sites, b.sites)
    assert np.allclose(a.final_states, b.final_states, atol=1e-12)
    assert b.checkpoint_states.shape == (50, 3, m.dim)
    with pytest.raises(ValueError):
        simulate_batch(m, psi, (0, 2), 4, [0], checkpoint_times=[2.0])


def test_single_trajectory_matches_batch_and_records_states():
    m = hopping_model(n=1, sites=4, lam=3.0)
    psi = m.localized_state([1])
    tr = simulate(m, psi, (0, 1), 10, stream=7)
    ens = simulate_batch(m, psi, (0, 1), 10, [7])
    assert tr.history == ens.history(0)
    assert len(tr.checkpoints) == len(tr.history) + 2
    assert np.allclose(tr.final_state, ens.final_states[0])


def test_states_stay_normalized():
    m = hopping_model(n=2, sites=3, lam=2.0)
    ens = simulate_batch(m, m.localized_state([0, 0]), (0, 3), 1, np.arange(100))
    assert np.allclose(np.linalg.norm(ens.final_states, axis=1), 1.0, atol=1e-12)


def test_unnormalized_start_rejected():
    m = hopping_model()
    with pytest.raises(ValueError):
        simulate_batch(m, 2 * m.localized_state([0]), (0, 1), 1, [0])


def test_center_sampling_matches_distribution():
    m = hopping_model(sites=6, sigma=1.3)
    psi = m.propagator(0.8) @ m.localized_state([1])
    p = center_distribution(m, psi, 0)
    assert p.sum() == pytest.approx(1.0)
    r = prng.CounterRng(5)
    draws = np.array([sample_collapse_center(m, psi, 0, r) for _ in range(4000)])
    obs = np.bincount(draws, minlength=6)
    keep = p * 4000 >= 5
    exp = p[keep] * 4000
    assert stats.chisquare(obs[keep], exp * obs[keep].sum() / exp.sum()).pvalue > 1e-3


def test_empty_history_density_is_survival_probability():
    m = hopping_model(n=2, sites=3, lam=0.4)
    psi = m.localized_state([0, 1])
    assert history_density(m, psi, FlashHistory.empty(0, 2)) == pytest.approx(np.exp(-0.4 * 2 * 2))


@given(st.floats(0.0, 0.999), st.floats(0.1, 2.0))
def test_one_flash_density_sums_to_rate_times_survival(t, lam):
    m = hopping_model(n=2, sites=3, lam=lam)
    psi = m.propagator(0.3) @ m.localized_state([0, 2])
    total = sum(history_density(m, psi, FlashHistory([t], [x], [i], 0.0, 1.0))
                for x in range(3) for i in range(2))
    assert total == pytest.approx(2 * lam * np.exp(-2 * lam), rel=1e-10)


def test_l_operator_flash_factors_include_rate():
    m = GrwModel(1, 3, lam=2.0)
    f = FlashHistory([0.2], [1], [0], 0.0, 1.0)
    L = l_operator(m, f)
    expected = np.exp(-1.0) * np.sqrt(2.0) * np.diag(np.sqrt(m.collapse.kernel[:, 1]))
    assert np.allclose(L, expected)


def test_ensemble_concat_and_first():
    m = hopping_model(lam=3.0)
    psi = m.localized_state([0])
    a = simulate_batch(m, psi, (0, 1), 2, [0, 1])
    b = simulate_batch(m, psi, (0, 1), 2, [2])
    c = Ensemble.concat([a, b])
    full = simulate_batch(m, psi, (0, 1), 2, [0, 1, 2])
    assert np.array_equal(c.times, full.times) and np.array_equal(c.offsets, full.offsets)
    first = full.first()
    for k in range(3):
        if full.counts[k]:
            assert first[k] == full.offsets[k]
        else:
            assert first[k] == -1
