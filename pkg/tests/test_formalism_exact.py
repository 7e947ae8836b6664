import math

import numpy as np
import pytest
from scipy import stats

from grwlab.experiments import pointer_projectors, runtime_experiment, standard_experiment
from grwlab.formalism import (ConstantCalibration, CostGuardError, CountThreshold, Experiment, ExperimentError,
                              FirstFlashInRegions, LastFlashRegion, NotAdaptedError, NthFlash, consistency_error,
                              flow_law, grw_law_exact, grw_povm_exact, poisson_tail, quantum_povm,
                              quantum_superops, random_runtime_exact, sample_outcomes)
from grwlab.formalism.grw_exact import simplex_rule, time_rule
from grwlab.linalg import op_norm
from grwlab.master import INTEGRATOR_TOL
from grwlab.model import GrwModel

# P(n > 3) for a Poisson count of mean 0.3, summed by hand in double precision.
POISSON_TAIL_03_3 = 2.6581119002172e-4


def test_poisson_tail_oracle():
    assert poisson_tail(0.3, 3) == pytest.approx(POISSON_TAIL_03_3, rel=1e-10)
    assert poisson_tail(0.0, 0) == 0.0


@pytest.mark.parametrize("n", [1, 2, 3])
def test_simplex_rule_integrates_polynomials(n):
    x, w = simplex_rule(n, 6)
    assert w.sum() == pytest.approx(1 / math.factorial(n))
    # ∫ x_1 over the ordered simplex in [0,1]^n equals 1/(n+1)!
    assert np.dot(w, x[:, 0]) == pytest.approx(1 / math.factorial(n + 1))
    assert np.all(np.diff(x, axis=1) >= 0)


def test_time_rule_covers_window():
    t, w = time_rule((0.0, 2.0), 2, 5)
    assert w.sum() == pytest.approx(2.0)


def test_quantum_povm_is_ideal_half_line_measurement():
    exp = standard_experiment(0.0)
    q = quantum_povm(exp)
    assert np.allclose(q["right"], np.diag([0, 0, 1, 1]), atol=1e-12)
    assert np.allclose(q["left"], np.diag([1, 1, 0, 0]), atol=1e-12)
    assert consistency_error(q, quantum_superops(exp)) <= 1e-12


def test_grw_quantum_limit_is_exact():
    exp = standard_experiment(0.0)
    g, rem = grw_povm_exact(exp, 3)
    assert rem == 0.0
    q = quantum_povm(exp)
    assert max(op_norm(g[z] - q[z]) for z in q.outcomes) <= 1e-10


def test_grw_exact_completeness_and_consistency():
    exp = standard_experiment(0.15)
    law = grw_law_exact(exp, 3)
    assert law.remainder == pytest.approx(poisson_tail(0.3, 3))
    assert law.povm.completeness_error() <= law.remainder + 1e-10
    assert law.povm.min_eigenvalue() >= -1e-8
    assert consistency_error(law.povm, law.superops) <= 1e-8


def test_flow_route_matches_enumeration():
    exp = standard_experiment(0.15)
    enum = grw_law_exact(exp, 3)
    flow, maps = flow_law(exp)
    assert flow.completeness_error() <= 10 * INTEGRATOR_TOL
    assert consistency_error(flow, maps) <= 1e-8
    for z in flow.outcomes:
        assert op_norm(flow[z] - enum.povm[z]) <= enum.remainder + INTEGRATOR_TOL


def test_flow_route_with_flash_calibration():
    cal = LastFlashRegion({"left": [0, 1], "right": [2, 3]})
    exp = standard_experiment(0.2, calibration=cal)
    flow, maps = flow_law(exp)
    enum = grw_law_exact(exp, 3)
    for z in flow.outcomes:
        assert op_norm(flow[z] - enum.povm[z]) <= enum.remainder + INTEGRATOR_TOL
    assert consistency_error(flow, maps) <= 1e-8


def test_count_threshold_effect_is_poisson_weight():
    exp = standard_experiment(0.5, calibration=CountThreshold(1))
    flow, _ = flow_law(exp)
    # collapses never depend on the state, so "above" is the scalar P(n >= 1)
    assert np.allclose(flow["above"], (1 - math.exp(-1.0)) * np.eye(4), atol=10 * INTEGRATOR_TOL)


def test_cost_guard():
    with pytest.raises(CostGuardError):
        grw_law_exact(standard_experiment(0.15), 6, budget=1e3)


def test_random_runtime_law():
    exp = runtime_experiment()
    povm, maps = random_runtime_exact(exp)
    assert len(povm) == 2 * 4 + 1
    assert povm.completeness_error() <= 10 * INTEGRATOR_TOL
    assert povm.min_eigenvalue() >= -1e-8
    assert consistency_error(povm, maps) <= 1e-8
    assert povm.outcomes[-1] == ("none", 2.0)


def test_random_runtime_quantum_limit_never_stops():
    exp = runtime_experiment(lam=0.0)
    povm, _ = random_runtime_exact(exp)
    assert np.allclose(povm[("none", 2.0)], np.eye(4), atol=1e-10)


def test_stopping_rules_must_be_adapted():
    with pytest.raises(NotAdaptedError):
        FirstFlashInRegions({"a": [0]}, grid=[1.0], binning="left")
    with pytest.raises(NotAdaptedError):
        NthFlash(1, grid=[1.0], lookahead=0.1)
    with pytest.raises(ExperimentError):
        FirstFlashInRegions({"a": [0]}, grid=[1.0, 0.5])


def test_experiment_validation():
    m = GrwModel(2, 4)
    ptr = pointer_projectors()
    with pytest.raises(ExperimentError):
        Experiment(m, 1, np.array([1, 0, 0, 0]), (0, 1), pointer={"left": ptr["left"], "right": ptr["left"]})
    with pytest.raises(ExperimentError):
        Experiment(m, 1, np.array([2, 0, 0, 0]), (0, 1), pointer=ptr)
    with pytest.raises(ExperimentError):
        Experiment(m, 1, np.array([1, 0, 0, 0]), (1, 1), pointer=ptr)
    with pytest.raises(ExperimentError):
        Experiment(m, 1, np.array([1, 0, 0, 0]), (0, 1))
    with pytest.raises(ExperimentError):
        LastFlashRegion({"a": [0, 1], "b": [1]}, fallback="none").bind(
            Experiment(m, 1, np.array([1, 0, 0, 0]), (0, 1), ConstantCalibration()))


def test_sampled_outcomes_follow_exact_law():
    exp = standard_experiment(0.15)
    povm, _ = flow_law(exp)
    psi = np.array([0.6, 0.0, 0.0, 0.8], dtype=complex)
    z, _ = sample_outcomes(exp, psi, 20_000, 17)
    obs = np.bincount(z, minlength=2)
    exp_counts = povm.probabilities(psi) * 20_000
    assert stats.chisquare(obs, exp_counts).pvalue > 1e-3


def test_sampled_runtime_outcomes_follow_exact_law():
    exp = runtime_experiment()
    povm, _ = random_runtime_exact(exp)
    psi = np.full(4, 0.5, dtype=complex)
    z, _ = sample_outcomes(exp, psi, 20_000, 23)
    obs = np.bincount(z, minlength=len(povm))
    probs = povm.probabilities(psi)
    assert stats.chisquare(obs, probs / probs.sum() * obs.sum()).pvalue > 1e-3
