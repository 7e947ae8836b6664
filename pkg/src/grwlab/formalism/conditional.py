"""Density matrices conditional on events of the flash history."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .. import rng as prng
from ..jump import simulate_batch
from ..linalg import hermitize
from ..model import GrwModel
from .flow import DEAD, automaton_states, flow_forward

MIN_PROBABILITY = 1e-6


class RareEventError(ValueError):
    pass


@dataclass(frozen=True)
class HistoryEvent:
    """Cylinder event on the flashes of a window.

    Kinds:
        ``"all"``: every history.
        ``"count"``: exactly (``mode="eq"``) or at least (``mode="ge"``) ``n`` flashes.
        ``"first-region"``: the first flash lies in ``sites`` (among ``labels``).
    """

    kind: str
    n: int = 0
    mode: str = "eq"
    sites: tuple = ()
    labels: tuple | None = None

    def automaton(self, model: GrwModel) -> tuple[np.ndarray, np.ndarray]:
        """``(transitions, accepting_mask)``."""
        N, L = model.n_particles, model.sites
        if self.kind == "all":
            return np.zeros((1, N, L), dtype=np.int64), np.array([True])
        if self.kind == "count":
            cap = self.n + 1
            trans = np.zeros((cap + 1, N, L), dtype=np.int64)
            for q in range(cap + 1):
                trans[q] = min(q + 1, cap)
            acc = np.zeros(cap + 1, bool)
            if self.mode == "eq":
                acc[self.n] = True
            elif self.mode == "ge":
                acc[self.n:] = True
            else:
                raise ValueError(f"unknown count mode {self.mode!r}")
            return trans, acc
        if self.kind == "first-region":
            trans = np.zeros((3, N, L), dtype=np.int64)
            labs = np.zeros(N, bool)
            labs[list(range(N) if self.labels is None else self.labels)] = True
            inside = np.zeros(L, bool)
            inside[list(self.sites)] = True
            trans[0] = np.where(labs[:, None], np.where(inside[None, :], 1, 2), 0)
            trans[1] = 1
            trans[2] = 2
            return trans, np.array([False, True, False])
        raise ValueError(f"unknown event kind {self.kind!r}")


def conditional_density_matrix(model: GrwModel, rho0: np.ndarray, window: tuple[float, float],
                               event: HistoryEvent, method: str = "exact", M: int | None = None,
                               seed: int | None = None, steps: int | None = None) -> tuple[np.ndarray, float]:
    """``ρ_{t|B} = ∫_B L ρ0 L† / P(B)`` and ``P(B)``.

    ``method="exact"`` integrates the event-resolved master equation;
    ``method="mc"`` averages ``|ψ_t⟩⟨ψ_t|`` over simulated trajectories in ``B``
    (initial states drawn from the eigen-ensemble of ``rho0``).
    """
    rho0 = np.asarray(rho0, dtype=np.complex128)
    if rho0.ndim == 1:
        rho0 = np.outer(rho0, rho0.conj())
    trans, acc = event.automaton(model)
    dur = float(window[1]) - float(window[0])
    if method == "exact":
        rho = np.zeros((trans.shape[0], model.dim, model.dim), dtype=np.complex128)
        rho[0] = rho0
        rho = flow_forward(model, trans, rho, dur, steps)
        sub = rho[acc].sum(axis=0)
        prob = float(np.trace(sub).real)
    elif method == "mc":
        if M is None or seed is None:
            raise ValueError("the MC route needs M and seed")
        w, v = np.linalg.eigh(hermitize(rho0))
        w = np.clip(w, 0, None)
        streams = prng.stream_id(np.arange(M, dtype=np.uint64), 7)
        u = prng.uniforms(seed, streams, np.uint64(prng.AUX_BLOCK))[:, 0]
        r = np.minimum(np.searchsorted(np.cumsum(w), u * w.sum(), side="right"), w.size - 1)
        ens = simulate_batch(model, v.T[r], window, seed, streams)
        state = automaton_states(ens, trans)
        hit = (state != DEAD) & acc[np.maximum(state, 0)]
        prob = float(hit.mean())
        psi = ens.final_states[hit]
        sub = (psi.T @ psi.conj()) / M if hit.any() else np.zeros_like(rho0)
    else:
        raise ValueError(f"unknown method {method!r}")
    if prob < MIN_PROBABILITY:
        raise RareEventError(f"conditioning event has probability {prob:.3e}")
    return hermitize(sub / prob), prob
