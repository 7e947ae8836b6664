"""Exact laws of operators from automaton flows: fixed windows and random run-times."""
from __future__ import annotations

import numpy as np

from ..linalg import hermitize
from ..master import INTEGRATOR_TOL
from .experiment import Experiment, ExperimentError
from .flow import DEAD, flow_backward, flow_forward
from .povm import Povm, kraus_from_choi, matrix_units


def _app_trace(rho: np.ndarray, d_sys: int, d_app: int) -> np.ndarray:
    t = rho.reshape(*rho.shape[:-2], d_sys, d_app, d_sys, d_app)
    return np.einsum("...ajbj->...ab", t)


def _sandwich(exp: Experiment, y: np.ndarray) -> np.ndarray:
    """``tr_app([I⊗ρ_app] Y) = Σ_r V_r† Y V_r`` for a stack of observables."""
    v = exp.dilation()
    d = exp.d_sys
    r = v.shape[1] // d
    g = np.einsum("ia,...ij,jb->...ab", v.conj(), y, v)
    g = g.reshape(*y.shape[:-2], r, d, r, d)
    return hermitize_stack(np.einsum("...rarb->...ab", g))


def hermitize_stack(x: np.ndarray) -> np.ndarray:
    return 0.5 * (x + np.conj(np.swapaxes(x, -1, -2)))


def _initial_inputs(exp: Experiment) -> np.ndarray:
    """``E_jk ⊗ ρ_app`` for all matrix units of the object."""
    units = matrix_units(exp.d_sys)
    return np.einsum("kab,cd->kacbd", units, exp.rho_app).reshape(len(units), exp.model.dim, exp.model.dim)


def _choi_from_outputs(outputs: np.ndarray, d: int) -> np.ndarray:
    """Row-major Choi matrix from ``C(E_ij)`` stacked in unit order ``i*d + j``."""
    c = outputs.reshape(d, d, d, d)  # [i, j, r, c]
    return np.einsum("ijrc->ricj", c).reshape(d * d, d * d)


def flow_law(exp: Experiment, steps: int | None = None, superops: bool = True):
    """Fixed-window GRW law through the calibration automaton (no truncation).

    Returns:
        ``(Povm, superops or None)``.
    """
    auto = exp.calibration.automaton()
    if auto is None:
        raise ExperimentError("calibration has no finite automaton")
    fa, table = auto
    model = exp.model
    d_sys, d_app = exp.d_sys, exp.d_app
    dur = exp.window[1] - exp.window[0]
    nz = len(exp.calibration.outcomes)
    ptr = exp.full_pointer() if exp.calibration.uses_readout else [np.eye(model.dim)]
    y = np.zeros((fa.n_states, nz, model.dim, model.dim), dtype=np.complex128)
    for q in range(fa.n_states):
        for k, p in enumerate(ptr):
            y[q, table[q, k]] += p
    y0 = flow_backward(model, fa.transitions, y, dur, steps)[fa.initial]
    effects = _sandwich(exp, y0)
    povm = Povm(list(exp.calibration.outcomes), effects,
                {"law": "grw", "route": "flow", "remainder_bound": INTEGRATOR_TOL})
    maps = None
    if superops:
        rho = np.zeros((fa.n_states, d_sys**2, model.dim, model.dim), dtype=np.complex128)
        rho[fa.initial] = _initial_inputs(exp)
        rho = flow_forward(model, fa.transitions, rho, dur, steps)
        out = np.zeros((nz, d_sys**2, d_sys, d_sys), dtype=np.complex128)
        for q in range(fa.n_states):
            for k, p in enumerate(ptr):
                out[table[q, k]] += _app_trace(p @ rho[q] @ p, d_sys, d_app)
        maps = {z: kraus_from_choi(_choi_from_outputs(out[i], d_sys), d_sys, d_sys)
                for i, z in enumerate(exp.calibration.outcomes)}
    return povm, maps


def _runtime_tables(exp: Experiment):
    n_run, trans_run = exp.stopping.stop_automaton()
    nz = len(exp.stopping.zs)
    n_states = n_run + nz
    m = exp.model
    active = np.zeros((n_states, m.n_particles, m.sites), dtype=np.int64)
    active[:n_run] = np.where(trans_run >= 0, trans_run, n_run + (-trans_run - 1))
    for z in range(nz):
        active[n_run + z] = n_run + z
    frozen = active.copy()
    frozen[:n_run] = np.where(trans_run >= 0, trans_run, DEAD)
    return n_run, nz, active, frozen


def random_runtime_exact(exp: Experiment, steps_per_unit: float | None = None, superops: bool = True):
    """Joint (outcome, time) law for an experiment with a stopping rule.

    Effects come from backward flows (one per time bin), operations from a
    single forward flow harvested at every grid time.

    Returns:
        ``(Povm, superops or None)`` over ``exp.outcomes``.
    """
    if exp.stopping is None:
        raise ExperimentError("experiment has no stopping rule")
    rule = exp.stopping
    model = exp.model
    s = exp.window[0]
    grid = rule.grid
    n_run, nz, active, frozen = _runtime_tables(exp)
    n_states = n_run + nz
    d, d_sys, d_app = model.dim, exp.d_sys, exp.d_app
    edges = np.concatenate([[s], grid])

    def steps(dur):
        return None if steps_per_unit is None else max(1, int(np.ceil(steps_per_unit * dur)))

    outcomes = exp.outcomes
    effects = np.zeros((len(outcomes), d_sys, d_sys), dtype=np.complex128)
    eye = np.eye(d)
    for k in range(len(grid)):
        y = np.zeros((n_states, nz, d, d), dtype=np.complex128)
        for z in range(nz):
            y[n_run + z, z] = eye
        y = flow_backward(model, active, y, edges[k + 1] - edges[k], steps(edges[k + 1] - edges[k]))
        if k > 0:
            y = flow_backward(model, frozen, y, edges[k] - s, steps(edges[k] - s))
        effects[k * nz:(k + 1) * nz] = _sandwich(exp, y[0])
    y = np.zeros((n_states, 1, d, d), dtype=np.complex128)
    y[:n_run, 0] = eye
    y = flow_backward(model, frozen, y, grid[-1] - s, steps(grid[-1] - s))
    effects[-1] = _sandwich(exp, y[0])[0]
    povm = Povm(outcomes, effects, {"law": "grw", "route": "flow", "runtime": "random",
                                    "remainder_bound": INTEGRATOR_TOL})
    maps = None
    if superops:
        rho = np.zeros((n_states, d_sys**2, d, d), dtype=np.complex128)
        rho[0] = _initial_inputs(exp)
        outs = np.zeros((len(outcomes), d_sys**2, d_sys, d_sys), dtype=np.complex128)
        for k in range(len(grid)):
            dur = edges[k + 1] - edges[k]
            rho = flow_forward(model, active, rho, dur, steps(dur))
            for z in range(nz):
                outs[k * nz + z] = _app_trace(rho[n_run + z], d_sys, d_app)
                rho[n_run + z] = 0
        outs[-1] = _app_trace(rho[:n_run].sum(axis=0), d_sys, d_app)
        maps = {z: kraus_from_choi(_choi_from_outputs(outs[i], d_sys), d_sys, d_sys)
                for i, z in enumerate(outcomes)}
    return povm, maps


def random_runtime_povm(exp: Experiment, method: str = "exact", **kw):
    """Joint outcome/time POVM by the exact flow route or MC tomography.

    ``method="exact"`` returns ``(Povm, superops)``; ``method="mc"`` returns a
    :class:`~grwlab.formalism.tomography.TomographyResult` and needs ``M`` and
    ``seed`` keyword arguments.
    """
    if method == "exact":
        return random_runtime_exact(exp, **kw)
    if method == "mc":
        from .tomography import grw_povm_mc
        return grw_povm_mc(exp, **kw)
    raise ValueError(f"unknown method {method!r}")
