"""Exact flash-history integrals through automaton-resolved master equations.

When an outcome or event is read from the flashes by a finite automaton, the
integral ``∫ L ρ L†`` over histories ending in automaton state ``q`` obeys a
coupled master equation

    dρ_q/dt = −i[H, ρ_q] − Nλ ρ_q + λ Σ_{q'} K_{q'→q} ∘ ρ_{q'},

with Hadamard kernels ``K_{q'→q} = Σ a·sqrt(Λ_i(x)) sqrt(Λ_i(x))ᵀ`` summed over
the flashes ``(i, x)`` that move ``q'`` to ``q``. No truncation in the flash
count is needed. The Heisenberg (backward) version gives effects directly.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..master import rk4, step_count
from ..model import GrwModel

DEAD = -1


def transfer_kernels(model: GrwModel, trans: np.ndarray) -> dict:
    """``{(src, dst): K}`` for an automaton table ``trans[q, i, x]``; ``DEAD`` targets are dropped."""
    sq = model.collapse.sqrt_diagonals()  # (N, L, d)
    a = model.spacing
    out: dict = {}
    n_states = trans.shape[0]
    for q in range(n_states):
        for dst in np.unique(trans[q]):
            if dst == DEAD:
                continue
            mask = trans[q] == dst
            v = sq[mask]  # (k, d)
            out[(q, int(dst))] = a * v.T @ v
    return out


@dataclass
class _Dynamics:
    model: GrwModel
    kernels: dict
    n_states: int

    def forward(self, rho):
        m = self.model
        h = m.hamiltonian
        out = -1j * (h @ rho - rho @ h)
        if m.lam:
            out -= m.total_rate * rho
            for (src, dst), k in self.kernels.items():
                out[dst] += m.lam * k * rho[src]
        return out

    def backward(self, y):
        m = self.model
        h = m.hamiltonian
        out = 1j * (h @ y - y @ h)
        if m.lam:
            out -= m.total_rate * y
            for (src, dst), k in self.kernels.items():
                out[src] += m.lam * k * y[dst]
        return out


def flow_forward(model: GrwModel, trans: np.ndarray, rho: np.ndarray, duration: float,
                 steps: int | None = None) -> np.ndarray:
    """Evolve ``rho`` of shape ``(n_states, ..., d, d)`` forward by ``duration``."""
    dyn = _Dynamics(model, transfer_kernels(model, trans), trans.shape[0])
    n = step_count(model, duration, steps)
    return rk4(dyn.forward, rho, duration, n)


def flow_backward(model: GrwModel, trans: np.ndarray, y: np.ndarray, duration: float,
                  steps: int | None = None) -> np.ndarray:
    """Evolve observables ``y`` of shape ``(n_states, ..., d, d)`` backward by ``duration``."""
    dyn = _Dynamics(model, transfer_kernels(model, trans), trans.shape[0])
    n = step_count(model, duration, steps)
    return rk4(dyn.backward, y, duration, n)


def automaton_states(ens, trans: np.ndarray, initial: int = 0) -> np.ndarray:
    """Final automaton state of every trajectory in an ensemble (``DEAD`` is absorbing)."""
    M = len(ens)
    state = np.full(M, initial, dtype=np.int64)
    owner = ens.owner
    rank = np.arange(ens.times.size) - ens.offsets[owner]
    for r in range(int(ens.counts.max(initial=0))):
        k = np.flatnonzero(rank == r)
        b = owner[k]
        live = state[b] != DEAD
        k, b = k[live], b[live]
        state[b] = trans[state[b], ens.labels[k], ens.sites[k]]
    return state
