"""Quantum law of operators for a fixed-window or random run-time experiment."""
from __future__ import annotations

from typing import Mapping

import numpy as np

from ..linalg import hermitize
from .experiment import Experiment, ExperimentError
from .povm import KrausMap, Povm


def _require_pointer(exp: Experiment):
    if not exp.pointer:
        raise ExperimentError("the quantum law needs pointer projectors")


def _effect(exp: Experiment, u: np.ndarray, p_app: np.ndarray) -> np.ndarray:
    """``tr_app([I⊗ρ_app] U† [I⊗P] U)`` via the dilation ``V``."""
    v = exp.dilation()
    a = u @ v
    q = np.kron(np.eye(exp.d_sys), p_app)
    blocks = a.conj().T @ q @ a
    r = v.shape[1] // exp.d_sys
    e = sum(blocks[k * exp.d_sys:(k + 1) * exp.d_sys, k * exp.d_sys:(k + 1) * exp.d_sys] for k in range(r))
    return hermitize(e)


def _kraus(exp: Experiment, u: np.ndarray, p_app: np.ndarray) -> KrausMap:
    """Kraus operators ``(I⊗⟨e|)(I⊗P)U(I⊗√p_r|φ_r⟩)`` of ``T ↦ tr_app((I⊗P)U(T⊗ρ)U†(I⊗P))``."""
    v = exp.dilation()
    a = np.kron(np.eye(exp.d_sys), p_app) @ u @ v
    d_sys, d_app = exp.d_sys, exp.d_app
    r = v.shape[1] // d_sys
    x = a.reshape(d_sys, d_app, r, d_sys)
    ops = np.transpose(x, (1, 2, 0, 3)).reshape(d_app * r, d_sys, d_sys)
    keep = np.max(np.abs(ops), axis=(1, 2)) > 0
    if not keep.any():
        keep[0] = True
    return KrausMap(ops[keep])


def quantum_povm(exp: Experiment) -> Povm:
    """Effects ``E_z = tr_app([I⊗ρ_app] U†_{t−s} [I⊗P_z] U_{t−s})``."""
    _require_pointer(exp)
    u = exp.model.propagator(exp.window[1] - exp.window[0])
    effects = np.array([_effect(exp, u, p) for p in exp.pointer.values()])
    return Povm(list(exp.pointer), effects, {"law": "quantum"})


def quantum_superops(exp: Experiment) -> dict:
    """Operations ``C_z(T) = tr_app([I⊗P_z] U [T⊗ρ_app] U† [I⊗P_z])`` in Kraus form."""
    _require_pointer(exp)
    u = exp.model.propagator(exp.window[1] - exp.window[0])
    return {z: _kraus(exp, u, p) for z, p in exp.pointer.items()}


def quantum_random_runtime_povm(exp: Experiment, projectors: Mapping[tuple, np.ndarray],
                                check: bool = True, tol: float = 1e-8) -> tuple[Povm, dict]:
    """Random run-time quantum law.

    Args:
        exp: experiment supplying the model, ``rho_app`` and window start.
        projectors: ``(z, t) -> P_app`` projecting on apparatus states in which
            the run is over at ``t`` with pointer ``z``.

    Returns:
        ``(Povm, superops)`` with ``E_{z,t} = tr_app([I⊗ρ] U†_{t−s} [I⊗P_{z,t}] U_{t−s})``.
    """
    s = exp.window[0]
    keys = list(projectors)
    effects, maps = [], {}
    for key in keys:
        t = float(key[1])
        u = exp.model.propagator(t - s)
        p = np.asarray(projectors[key], dtype=np.complex128)
        effects.append(_effect(exp, u, p))
        maps[key] = _kraus(exp, u, p)
    povm = Povm(keys, np.array(effects), {"law": "quantum", "runtime": "random"})
    if check:
        povm.check(tol)
    return povm, maps
