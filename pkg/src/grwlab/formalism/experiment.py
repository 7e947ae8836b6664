"""Experiments: object + apparatus models, calibration functions, stopping rules.

The object occupies the leading ``n_sys`` particle labels of the joint model,
so the joint Hilbert space is ``H_sys ⊗ H_app`` in Kronecker order.

Outcomes are read from the flash history together with an optional terminal
projective readout of the apparatus pointer (the late-flash idealization in
which the final flashes of a macroscopic pointer reveal its position with
certainty). Calibrations that ignore the readout are purely flash based.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Mapping, Sequence

import numpy as np

from .. import rng as prng
from ..jump import Ensemble, FlashHistory, simulate_batch
from ..linalg import hermitize
from ..model import GrwModel, SystemSplit


class ExperimentError(ValueError):
    pass


class NotAdaptedError(ExperimentError):
    """A stopping rule or outcome would depend on flashes after the stopping time."""


@dataclass
class FlashAutomaton:
    """Finite-state reader of flash histories.

    ``transitions[q, i, x]`` is the state entered from ``q`` by a flash of
    label ``i`` at site ``x``.
    """

    transitions: np.ndarray
    initial: int = 0

    @property
    def n_states(self) -> int:
        return self.transitions.shape[0]


def _region_lookup(regions: Mapping, sites: int) -> np.ndarray:
    """Site -> region index (-1 outside all regions)."""
    lut = np.full(sites, -1, dtype=np.int64)
    for j, (_, xs) in enumerate(regions.items()):
        for x in xs:
            if not 0 <= x < sites:
                raise ExperimentError(f"region site {x} out of range")
            if lut[x] >= 0:
                raise ExperimentError("regions must be disjoint")
            lut[x] = j
    return lut


def _label_mask(labels, n_particles: int) -> np.ndarray:
    mask = np.zeros(n_particles, dtype=bool)
    if labels is None:
        mask[:] = True
    else:
        for i in labels:
            if not 0 <= i < n_particles:
                raise ExperimentError(f"label {i} out of range")
            mask[i] = True
    return mask


class Calibration:
    """Maps (flash history, pointer readout) to an outcome index.

    Subclasses implement :meth:`evaluate` on equal-length batches of
    histories: ``times``, ``sites`` and ``labels`` have shape ``(B, n)`` and
    ``readout`` holds pointer indices (or ``None`` when unused).
    """

    uses_readout = False
    outcomes: list

    def bind(self, exp: "Experiment") -> None:
        self.exp = exp

    def evaluate(self, times, sites, labels, readout) -> np.ndarray:
        raise NotImplementedError

    def automaton(self):
        """``(FlashAutomaton, table)`` with ``table[state, readout]`` the outcome, or ``None``."""
        return None

    def evaluate_ensemble(self, ens: Ensemble, readout: np.ndarray | None) -> np.ndarray:
        out = np.empty(len(ens), dtype=np.int64)
        counts = ens.counts
        for n in np.unique(counts):
            rows = np.flatnonzero(counts == n)
            idx = ens.offsets[rows][:, None] + np.arange(n)[None, :]
            r = None if readout is None else readout[rows]
            out[rows] = self.evaluate(ens.times[idx], ens.sites[idx], ens.labels[idx], r)
        return out


class PointerCalibration(Calibration):
    """Outcome = terminal pointer readout."""

    uses_readout = True

    def bind(self, exp):
        super().bind(exp)
        self.outcomes = list(exp.pointer)

    def evaluate(self, times, sites, labels, readout):
        return np.asarray(readout, dtype=np.int64)

    def automaton(self):
        n = self.exp.model
        return FlashAutomaton(np.zeros((1, n.n_particles, n.sites), dtype=np.int64)), \
            np.arange(len(self.outcomes))[None, :]


class ConstantCalibration(Calibration):
    def __init__(self, outcome="any"):
        self.outcomes = [outcome]

    def evaluate(self, times, sites, labels, readout):
        return np.zeros(np.shape(times)[0], dtype=np.int64)

    def automaton(self):
        n = self.exp.model
        return FlashAutomaton(np.zeros((1, n.n_particles, n.sites), dtype=np.int64)), \
            np.zeros((1, max(1, len(self.exp.pointer))), dtype=np.int64)


class LastFlashRegion(Calibration):
    """Region of the last qualifying flash; falls back when there is none.

    Args:
        regions: outcome name -> sites.
        labels: labels whose flashes count (default: apparatus labels).
        fallback: ``"pointer"`` to use the terminal readout (pointer keys must
            be region names) or a fixed outcome name.
    """

    def __init__(self, regions: Mapping[str, Sequence[int]], labels=None, fallback="pointer"):
        self.regions = {k: tuple(v) for k, v in regions.items()}
        self.labels = labels
        self.fallback = fallback
        self.outcomes = list(self.regions)
        if fallback != "pointer" and fallback not in self.outcomes:
            self.outcomes.append(fallback)
        self.uses_readout = fallback == "pointer"

    def bind(self, exp):
        super().bind(exp)
        m = exp.model
        self.lut = _region_lookup(self.regions, m.sites)
        labels = exp.app_labels if self.labels is None else self.labels
        self.lab_mask = _label_mask(labels, m.n_particles)
        if self.uses_readout:
            missing = [k for k in exp.pointer if k not in self.outcomes]
            if missing:
                raise ExperimentError(f"pointer keys {missing} are not region names")
            self.readout_map = np.array([self.outcomes.index(k) for k in exp.pointer])

    def _fallback(self, readout, B):
        if self.uses_readout:
            return self.readout_map[np.asarray(readout)]
        return np.full(B, self.outcomes.index(self.fallback), dtype=np.int64)

    def evaluate(self, times, sites, labels, readout):
        sites = np.asarray(sites)
        B, n = sites.shape
        out = self._fallback(readout, B).copy()
        if n == 0:
            return out
        reg = np.where(self.lab_mask[labels], self.lut[sites], -1)
        for k in range(n):
            hit = reg[:, k] >= 0
            out[hit] = reg[hit, k]
        return out

    def automaton(self):
        m = self.exp.model
        nreg = len(self.regions)
        trans = np.zeros((nreg + 1, m.n_particles, m.sites), dtype=np.int64)
        for q in range(nreg + 1):
            trans[q] = q
            for i in range(m.n_particles):
                if self.lab_mask[i]:
                    hit = self.lut >= 0
                    trans[q, i, hit] = self.lut[hit] + 1
        nread = max(1, len(self.exp.pointer))
        table = np.zeros((nreg + 1, nread), dtype=np.int64)
        table[0] = self._fallback(np.arange(nread), nread) if self.uses_readout else \
            self.outcomes.index(self.fallback)
        for j in range(nreg):
            table[j + 1] = j
        return FlashAutomaton(trans), table


class MajorityRegion(LastFlashRegion):
    """Region holding the most qualifying flashes in a readout window.

    Ties and empty windows fall back like :class:`LastFlashRegion`.
    """

    def __init__(self, regions, readout_window: tuple[float, float], labels=None, fallback="pointer"):
        super().__init__(regions, labels, fallback)
        self.readout_window = (float(readout_window[0]), float(readout_window[1]))

    def bind(self, exp):
        super().bind(exp)
        r0, r1 = self.readout_window
        if r1 > exp.window[1] + 1e-12:
            raise NotAdaptedError("readout window extends past the end of the experiment")

    def evaluate(self, times, sites, labels, readout):
        sites = np.asarray(sites)
        B, n = sites.shape
        out = self._fallback(readout, B).copy()
        if n == 0:
            return out
        r0, r1 = self.readout_window
        inwin = (np.asarray(times) >= r0) & (np.asarray(times) < r1)
        reg = np.where(self.lab_mask[labels] & inwin, self.lut[sites], -1)
        counts = np.stack([(reg == j).sum(axis=1) for j in range(len(self.regions))], axis=1)
        best = counts.max(axis=1)
        winners = (counts == best[:, None]).sum(axis=1)
        ok = (best > 0) & (winners == 1)
        out[ok] = counts[ok].argmax(axis=1)
        return out

    def automaton(self):
        return None


class CountThreshold(Calibration):
    """``"above"`` when at least ``threshold`` qualifying flashes occur."""

    def __init__(self, threshold: int, labels=None, region: Sequence[int] | None = None,
                 outcomes=("below", "above")):
        if threshold < 1:
            raise ExperimentError("threshold must be at least 1")
        self.threshold = int(threshold)
        self.labels = labels
        self.region = None if region is None else tuple(region)
        self.outcomes = list(outcomes)

    def bind(self, exp):
        super().bind(exp)
        m = exp.model
        self.lab_mask = _label_mask(self.labels, m.n_particles)
        self.site_mask = np.ones(m.sites, bool)
        if self.region is not None:
            self.site_mask[:] = False
            self.site_mask[list(self.region)] = True

    def evaluate(self, times, sites, labels, readout):
        sites = np.asarray(sites)
        if sites.shape[1] == 0:
            return np.zeros(sites.shape[0], dtype=np.int64)
        hit = self.lab_mask[labels] & self.site_mask[sites]
        return (hit.sum(axis=1) >= self.threshold).astype(np.int64)

    def automaton(self):
        m = self.exp.model
        c = self.threshold
        trans = np.zeros((c + 1, m.n_particles, m.sites), dtype=np.int64)
        hit = self.lab_mask[:, None] & self.site_mask[None, :]
        for q in range(c + 1):
            trans[q] = np.where(hit, min(q + 1, c), q)
        table = np.zeros((c + 1, max(1, len(self.exp.pointer))), dtype=np.int64)
        table[c] = 1
        return FlashAutomaton(trans), table


class CustomCalibration(Calibration):
    """User calibration ``fn(history, readout_key) -> outcome`` (evaluated per history)."""

    def __init__(self, fn: Callable, outcomes: Sequence, uses_readout: bool = False):
        self.fn = fn
        self.outcomes = list(outcomes)
        self.uses_readout = uses_readout

    def evaluate(self, times, sites, labels, readout):
        s, t = self.exp.window
        keys = list(self.exp.pointer)
        out = np.empty(len(times), dtype=np.int64)
        for b in range(len(times)):
            h = FlashHistory(times[b], sites[b], labels[b], s, t)
            key = keys[readout[b]] if readout is not None else None
            out[b] = self.outcomes.index(self.fn(h, key))
        return out


class StoppingRule:
    """Random run-time ``τ`` binned to a finite grid, with an adapted outcome.

    The bin value is the right edge of the grid cell containing the stopping
    time, so ``{T = t_k}`` is decided by the flashes before ``t_k``. Runs that
    have not stopped by the last grid time end there with outcome ``"none"``.
    """

    grid: np.ndarray
    zs: list

    def outcome_space(self) -> list:
        out = [(z, float(t)) for t in self.grid for z in self.zs]
        return out + [("none", float(self.grid[-1]))]

    def _check_grid(self, grid, binning, lookahead):
        grid = np.asarray(grid, dtype=float)
        if grid.ndim != 1 or grid.size < 1 or np.any(np.diff(grid) <= 0):
            raise ExperimentError("time grid must be strictly increasing")
        if binning != "right":
            raise NotAdaptedError("binning to the left edge reports a time before the decision")
        if lookahead:
            raise NotAdaptedError("outcome peeks at flashes after the stopping time")
        return grid

    def bind(self, exp: "Experiment") -> None:
        self.exp = exp
        if self.grid[0] <= exp.window[0]:
            raise ExperimentError("time grid must start after the window start")

    def stop_automaton(self):
        """``(n_run, trans)``: ``trans[q, i, x] >= 0`` is a running state, ``-z-1`` stops with outcome z."""
        raise NotImplementedError

    def evaluate_ensemble(self, ens: Ensemble) -> np.ndarray:
        """Index into :meth:`outcome_space` for each trajectory."""
        n_run, trans = self.stop_automaton()
        M = len(ens)
        state = np.zeros(M, dtype=np.int64)
        stop_t = np.full(M, np.inf)
        stop_z = np.full(M, -1, dtype=np.int64)
        owner = ens.owner
        rank = np.arange(ens.times.size) - ens.offsets[owner]
        for r in range(int(ens.counts.max(initial=0))):
            k = np.flatnonzero(rank == r)
            b = owner[k]
            live = stop_z[b] < 0
            k, b = k[live], b[live]
            nxt = trans[state[b], ens.labels[k], ens.sites[k]]
            stop = nxt < 0
            stop_z[b[stop]] = -nxt[stop] - 1
            stop_t[b[stop]] = ens.times[k[stop]]
            state[b[~stop]] = nxt[~stop]
        return self._bin(stop_t, stop_z)

    def _bin(self, stop_t, stop_z):
        grid = self.grid
        nz = len(self.zs)
        out = np.full(stop_t.size, len(grid) * nz, dtype=np.int64)
        stopped = (stop_z >= 0) & (stop_t < grid[-1])
        k = np.searchsorted(grid, stop_t[stopped], side="right")
        out[stopped] = k * nz + stop_z[stopped]
        return out


class FirstFlashInRegions(StoppingRule):
    """Stop at the first qualifying flash inside any detector region; outcome = region."""

    def __init__(self, regions: Mapping[str, Sequence[int]], grid, labels=None, binning="right",
                 lookahead: float = 0.0):
        self.regions = {k: tuple(v) for k, v in regions.items()}
        self.zs = list(self.regions)
        self.labels = labels
        self.grid = self._check_grid(grid, binning, lookahead)

    def bind(self, exp):
        super().bind(exp)
        m = exp.model
        self.lut = _region_lookup(self.regions, m.sites)
        self.lab_mask = _label_mask(exp.app_labels if self.labels is None else self.labels, m.n_particles)

    def stop_automaton(self):
        m = self.exp.model
        trans = np.zeros((1, m.n_particles, m.sites), dtype=np.int64)
        for i in range(m.n_particles):
            if self.lab_mask[i]:
                hit = self.lut >= 0
                trans[0, i, hit] = -self.lut[hit] - 1
        return 1, trans


class NthFlash(StoppingRule):
    """Stop at the ``n``-th qualifying flash."""

    def __init__(self, n: int, grid, labels=None, binning="right", lookahead: float = 0.0):
        if n < 1:
            raise ExperimentError("n must be positive")
        self.n = int(n)
        self.labels = labels
        self.zs = ["stopped"]
        self.grid = self._check_grid(grid, binning, lookahead)

    def bind(self, exp):
        super().bind(exp)
        self.lab_mask = _label_mask(self.labels, exp.model.n_particles)

    def stop_automaton(self):
        m = self.exp.model
        trans = np.zeros((self.n, m.n_particles, m.sites), dtype=np.int64)
        for q in range(self.n):
            nxt = q + 1 if q + 1 < self.n else -1
            trans[q] = np.where(self.lab_mask[:, None], nxt, q)
        return self.n, trans


@dataclass(eq=False)
class Experiment:
    """A modeled experiment on the object (leading labels) with an apparatus.

    Attributes:
        model: joint GRW model of object and apparatus.
        n_sys: number of object particles (labels ``0..n_sys-1``).
        rho_app: apparatus ready state.
        window: ``(s, t)``; with a stopping rule ``t`` is the last grid time.
        calibration: outcome function (ignored when ``stopping`` is set).
        pointer: ordered mapping readout name -> apparatus projector.
        stopping: optional random run-time rule.
    """

    model: GrwModel
    n_sys: int
    rho_app: np.ndarray
    window: tuple
    calibration: Calibration | None = None
    pointer: dict = field(default_factory=dict)
    stopping: StoppingRule | None = None

    def __post_init__(self):
        m = self.model
        if not 0 <= self.n_sys <= m.n_particles:
            raise ExperimentError("n_sys out of range")
        self.rho_app = np.asarray(self.rho_app, dtype=np.complex128)
        if self.rho_app.ndim == 1:
            self.rho_app = np.outer(self.rho_app, self.rho_app.conj())
        if self.rho_app.shape != (self.d_app, self.d_app):
            raise ExperimentError("rho_app has the wrong dimension")
        if abs(np.trace(self.rho_app) - 1) > 1e-9 or np.linalg.eigvalsh(hermitize(self.rho_app))[0] < -1e-10:
            raise ExperimentError("rho_app must be a density matrix")
        s, t = (float(w) for w in self.window)
        if not s < t:
            raise ExperimentError("window must have positive length")
        self.window = (s, t)
        self.pointer = {k: np.asarray(v, dtype=np.complex128) for k, v in self.pointer.items()}
        if self.pointer:
            tot = sum(self.pointer.values())
            if np.max(np.abs(tot - np.eye(self.d_app))) > 1e-9:
                raise ExperimentError("pointer projectors do not sum to the identity")
            for k, p in self.pointer.items():
                if p.shape != (self.d_app, self.d_app) or np.max(np.abs(p @ p - p)) > 1e-9:
                    raise ExperimentError(f"pointer {k!r} is not a projector")
        if self.calibration is None and self.stopping is None:
            self.calibration = PointerCalibration()
        if self.calibration is not None:
            if self.calibration.uses_readout and not self.pointer:
                raise ExperimentError("calibration needs pointer projectors")
            self.calibration.bind(self)
        if self.stopping is not None:
            self.stopping.bind(self)
            if self.stopping.grid[-1] > t + 1e-12:
                raise ExperimentError("stopping grid extends past the window")

    @property
    def d_sys(self) -> int:
        return self.model.sites ** self.n_sys

    @property
    def d_app(self) -> int:
        return self.model.sites ** (self.model.n_particles - self.n_sys)

    @property
    def app_labels(self) -> tuple:
        return tuple(range(self.n_sys, self.model.n_particles))

    @property
    def split(self) -> SystemSplit:
        return SystemSplit(tuple(range(self.n_sys)))

    @property
    def outcomes(self) -> list:
        if self.stopping is not None:
            return self.stopping.outcome_space()
        return list(self.calibration.outcomes)

    def app_ensemble(self, tol: float = 1e-14) -> tuple[np.ndarray, np.ndarray]:
        w, v = np.linalg.eigh(hermitize(self.rho_app))
        keep = w > tol
        return w[keep], v[:, keep]

    def dilation(self) -> np.ndarray:
        """``V = [√p_r (I ⊗ φ_r)]_r`` of shape ``(d, R·d_sys)``; ``V V† ⊗``-traces to ``I⊗ρ_app``."""
        p, phis = self.app_ensemble()
        eye = np.eye(self.d_sys)
        return np.concatenate([np.sqrt(pr) * np.kron(eye, phis[:, [r]]) for r, pr in enumerate(p)], axis=1)

    def full_pointer(self) -> list[np.ndarray]:
        eye = np.eye(self.d_sys)
        return [np.kron(eye, p) for p in self.pointer.values()]


def sample_outcomes(exp: Experiment, psi_sys: np.ndarray, M: int, seed: int, tag: int = 0,
                    first_index: int = 0, return_readout: bool = False):
    """Simulate ``M`` runs of ``exp`` on the object state ``psi_sys``.

    ``psi_sys`` is one state or one state per run (shape ``(M, d_sys)``).
    The apparatus starts in an eigenvector of ``rho_app`` drawn with its
    eigenvalue weight; the pointer readout (if used) is drawn with Born
    weights from the final joint state. Returns outcome indices into
    ``exp.outcomes`` and the ensemble, plus the readout indices (``None``
    when unused) if ``return_readout``.
    """
    psi_sys = np.asarray(psi_sys, dtype=np.complex128)
    streams = prng.stream_id(np.arange(first_index, first_index + M, dtype=np.uint64), tag)
    p, phis = exp.app_ensemble()
    u_app = prng.uniforms(seed, streams, np.uint64(prng.AUX_BLOCK))
    r = np.minimum(np.searchsorted(np.cumsum(p), u_app[:, 0] * p.sum(), side="right"), p.size - 1)
    psi_sys = np.broadcast_to(psi_sys, (M, exp.d_sys))
    psi0 = np.einsum("ma,mb->mab", psi_sys, phis.T[r]).reshape(M, -1)
    ens = simulate_batch(exp.model, psi0, exp.window, seed, streams)
    readout = None
    if exp.stopping is not None:
        z = exp.stopping.evaluate_ensemble(ens)
    else:
        if exp.calibration.uses_readout:
            readout = sample_readout(exp, ens.final_states, u_app[:, 1])
        z = exp.calibration.evaluate_ensemble(ens, readout)
    return (z, ens, readout) if return_readout else (z, ens)


def sample_readout(exp: Experiment, states: np.ndarray, u: np.ndarray) -> np.ndarray:
    """Born-rule draw of the pointer readout on joint states of shape ``(M, d)``."""
    M = states.shape[0]
    x = states.reshape(M, exp.d_sys, exp.d_app)
    probs = np.stack([np.einsum("mab,bc,mac->m", x.conj(), p, x).real for p in exp.pointer.values()], axis=1)
    cdf = np.cumsum(probs, axis=1)
    k = np.sum(cdf < (u * cdf[:, -1])[:, None], axis=1)
    return np.minimum(k, len(exp.pointer) - 1)
