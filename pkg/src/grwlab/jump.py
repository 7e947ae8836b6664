"""The GRW jump process: trajectory simulation and flash-history operators.

The simulator is vectorized over trajectories. Each trajectory owns a Philox
stream; jump ``r`` of a trajectory consumes counter blocks ``2r`` and
``2r + 1`` of its stream (waiting time, label, center). All per-trajectory
arithmetic is done row-wise in a fixed order, so a trajectory's bits do not
depend on which other trajectories share its batch.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import partial
from typing import Iterable, Sequence

import numpy as np

from . import rng as prng
from .model import GrwModel

UNDERFLOW = 1e-300


class HistoryError(ValueError):
    pass


class CollapseUnderflowError(FloatingPointError):
    pass


@dataclass(frozen=True)
class FlashEvent:
    site: int
    time: float
    label: int


@dataclass(frozen=True, eq=False)
class FlashHistory:
    """Time-ordered flashes in the window ``[start, end)``.

    Stored column-wise; ``events`` gives the row view.
    """

    times: np.ndarray
    sites: np.ndarray
    labels: np.ndarray
    start: float
    end: float

    def __post_init__(self):
        t = np.asarray(self.times, dtype=np.float64).reshape(-1)
        x = np.asarray(self.sites, dtype=np.int64).reshape(-1)
        i = np.asarray(self.labels, dtype=np.int64).reshape(-1)
        if not (t.shape == x.shape == i.shape):
            raise HistoryError("times, sites and labels must have equal length")
        if not self.start <= self.end:
            raise HistoryError("window start after end")
        if t.size:
            if np.any(np.diff(t) <= 0):
                raise HistoryError("flash times must be strictly increasing")
            if t[0] < self.start or t[-1] >= self.end:
                raise HistoryError("flash outside window")
        object.__setattr__(self, "times", t)
        object.__setattr__(self, "sites", x)
        object.__setattr__(self, "labels", i)

    @classmethod
    def from_events(cls, events: Iterable[FlashEvent], start: float, end: float) -> "FlashHistory":
        ev = list(events)
        return cls(np.array([e.time for e in ev], dtype=float), np.array([e.site for e in ev], dtype=np.int64),
                   np.array([e.label for e in ev], dtype=np.int64), start, end)

    @classmethod
    def empty(cls, start: float, end: float) -> "FlashHistory":
        return cls(np.zeros(0), np.zeros(0, np.int64), np.zeros(0, np.int64), start, end)

    @property
    def events(self) -> list[FlashEvent]:
        return [FlashEvent(int(x), float(t), int(i)) for t, x, i in zip(self.times, self.sites, self.labels)]

    def __len__(self) -> int:
        return int(self.times.size)

    def restrict(self, start: float, end: float) -> "FlashHistory":
        m = (self.times >= start) & (self.times < end)
        return FlashHistory(self.times[m], self.sites[m], self.labels[m], start, end)

    def select(self, mask) -> "FlashHistory":
        m = np.asarray(mask, dtype=bool)
        return FlashHistory(self.times[m], self.sites[m], self.labels[m], self.start, self.end)

    def __eq__(self, other) -> bool:
        if not isinstance(other, FlashHistory):
            return NotImplemented
        return (self.start == other.start and self.end == other.end
                and np.array_equal(self.times, other.times) and np.array_equal(self.sites, other.sites)
                and np.array_equal(self.labels, other.labels))


@dataclass
class Trajectory:
    history: FlashHistory
    checkpoints: list
    seed: int
    stream: int

    @property
    def final_state(self) -> np.ndarray:
        return self.checkpoints[-1][1]


@dataclass
class Ensemble:
    """Flashes and end states of a batch of trajectories.

    Flashes are stored flat, grouped by trajectory: trajectory ``k`` owns
    entries ``offsets[k]:offsets[k+1]``.
    """

    start: float
    end: float
    offsets: np.ndarray
    times: np.ndarray
    sites: np.ndarray
    labels: np.ndarray
    final_states: np.ndarray
    seed: int
    streams: np.ndarray
    checkpoint_times: np.ndarray = field(default_factory=lambda: np.zeros(0))
    checkpoint_states: np.ndarray | None = None
    flash_states: np.ndarray | None = None

    def __len__(self) -> int:
        return self.offsets.size - 1

    @property
    def counts(self) -> np.ndarray:
        return np.diff(self.offsets)

    @property
    def owner(self) -> np.ndarray:
        """Trajectory index of every flash."""
        return np.repeat(np.arange(len(self)), self.counts)

    def history(self, k: int) -> FlashHistory:
        a, b = self.offsets[k], self.offsets[k + 1]
        return FlashHistory(self.times[a:b], self.sites[a:b], self.labels[a:b], self.start, self.end)

    def first(self, mask: np.ndarray | None = None) -> np.ndarray:
        """Index of the first flash (optionally among ``mask``) per trajectory, -1 if none."""
        sel = np.ones(self.times.size, bool) if mask is None else np.asarray(mask, bool)
        owner = self.owner[sel]
        pos = np.flatnonzero(sel)
        first = np.full(len(self), -1, dtype=np.int64)
        uniq, idx = np.unique(owner, return_index=True)
        first[uniq] = pos[idx]
        return first

    @classmethod
    def concat(cls, parts: Sequence["Ensemble"]) -> "Ensemble":
        """Join ensembles over the same window and seed, in order."""
        if not parts:
            raise ValueError("nothing to concatenate")
        p0 = parts[0]
        sizes = np.array([p.offsets[-1] for p in parts])
        shift = np.concatenate([[0], np.cumsum(sizes)[:-1]])
        offsets = np.concatenate([[0]] + [p.offsets[1:] + s for p, s in zip(parts, shift)])
        cat = lambda name: None if getattr(p0, name) is None else np.concatenate([getattr(p, name) for p in parts])
        return cls(p0.start, p0.end, offsets.astype(np.int64), cat("times"), cat("sites"), cat("labels"),
                   cat("final_states"), p0.seed, cat("streams"), p0.checkpoint_times,
                   cat("checkpoint_states"), cat("flash_states"))

    def trajectory(self, k: int) -> Trajectory:
        cps = [(self.start, None)]
        if self.checkpoint_states is not None:
            cps += [(float(t), self.checkpoint_states[k, j]) for j, t in enumerate(self.checkpoint_times)]
        cps.append((self.end, self.final_states[k]))
        return Trajectory(self.history(k), cps, self.seed, int(self.streams[k]))


def _rowwise_matvec(a_re, a_im, x_re, x_im):
    """``out[b] = A @ x[b]`` accumulated column by column in fixed order."""
    out_re = x_re[:, 0:1] * a_re[:, 0]
    out_re -= x_im[:, 0:1] * a_im[:, 0]
    out_im = x_re[:, 0:1] * a_im[:, 0]
    out_im += x_im[:, 0:1] * a_re[:, 0]
    for j in range(1, a_re.shape[1]):
        xr = x_re[:, j:j + 1]
        xi = x_im[:, j:j + 1]
        out_re += xr * a_re[:, j]
        out_re -= xi * a_im[:, j]
        out_im += xr * a_im[:, j]
        out_im += xi * a_re[:, j]
    return out_re, out_im


def _row_sq_norm(x_re, x_im):
    acc = x_re[:, 0] * x_re[:, 0]
    acc += x_im[:, 0] * x_im[:, 0]
    for j in range(1, x_re.shape[1]):
        acc += x_re[:, j] * x_re[:, j]
        acc += x_im[:, j] * x_im[:, j]
    return acc


class _Propagator:
    """Row-wise deterministic ``exp(-iHdt)`` through the eigenbasis."""

    def __init__(self, model: GrwModel):
        self.free = not np.any(model.hamiltonian)
        if not self.free:
            w, v = model.eig
            self.w = np.ascontiguousarray(w)
            self.v_re = np.ascontiguousarray(v.real)
            self.v_im = np.ascontiguousarray(v.imag)
            vh = v.conj().T
            self.vh_re = np.ascontiguousarray(vh.real)
            self.vh_im = np.ascontiguousarray(vh.imag)

    def __call__(self, x_re, x_im, dt):
        if self.free or x_re.shape[0] == 0:
            return x_re, x_im
        c_re, c_im = _rowwise_matvec(self.vh_re, self.vh_im, x_re, x_im)
        phase = np.multiply.outer(np.ascontiguousarray(dt), -self.w)
        p_re = np.cos(phase)
        p_im = np.sin(phase)
        d_re = c_re * p_re
        d_re -= c_im * p_im
        d_im = c_re * p_im
        d_im += c_im * p_re
        return _rowwise_matvec(self.v_re, self.v_im, d_re, d_im)


def _sample_sites(model: GrwModel, prob: np.ndarray, labels: np.ndarray, u: np.ndarray) -> np.ndarray:
    """Inverse-CDF draw of collapse centers from configuration probabilities."""
    configs = model.configs
    L = model.sites
    B = prob.shape[0]
    marg = np.zeros((B, L))
    for lab in np.unique(labels):
        rows = np.flatnonzero(labels == lab)
        sub = prob[rows]
        m = np.zeros((rows.size, L))
        col = configs[:, lab]
        for q in range(prob.shape[1]):
            m[:, col[q]] += sub[:, q]
        marg[rows] = m
    kernel = model.collapse.kernel * model.spacing
    cdf = np.empty((B, L))
    acc = np.zeros(B)
    for x in range(L):
        px = marg[:, 0] * kernel[0, x]
        for k in range(1, L):
            px += marg[:, k] * kernel[k, x]
        acc = acc + px
        cdf[:, x] = acc
    thresh = u * cdf[:, -1]
    return np.minimum(np.sum(cdf < thresh[:, None], axis=1), L - 1).astype(np.int64)


def sample_collapse_center(model: GrwModel, psi: np.ndarray, label: int, rng) -> int:
    """Draw a collapse center with probability ``a·⟨ψ|Λ_label(x)|ψ⟩``.

    Args:
        rng: anything with a ``random()`` method returning a uniform in [0, 1).
    """
    psi = np.asarray(psi, dtype=np.complex128)
    prob = (psi.real**2 + psi.imag**2)[None, :]
    u = np.array([float(rng.random())])
    return int(_sample_sites(model, prob, np.array([label]), u)[0])


def center_distribution(model: GrwModel, psi: np.ndarray, label: int) -> np.ndarray:
    """Exact collapse-center probabilities ``a·⟨ψ|Λ_label(x)|ψ⟩`` over sites."""
    prob = np.abs(np.asarray(psi)) ** 2
    return model.spacing * model.collapse.diagonals()[label] @ prob


def _draw(seed: int, streams: np.ndarray, rounds: np.ndarray) -> np.ndarray:
    blocks = 2 * rounds.astype(np.uint64)
    u0 = prng.uniforms(seed, streams, blocks)
    u1 = prng.uniforms(seed, streams, blocks + np.uint64(1))
    return np.concatenate([u0, u1], axis=-1)


def simulate_batch(model: GrwModel, psi0: np.ndarray, window: tuple[float, float], seed: int,
                   streams: Sequence[int] | np.ndarray, checkpoint_times: Sequence[float] = (),
                   record_flash_states: bool = False) -> Ensemble:
    """Simulate independent GRW trajectories.

    Args:
        model: the GRW model.
        psi0: initial state, shape ``(dim,)`` (shared) or ``(M, dim)``.
        window: ``(t0, t1)``.
        seed: 64-bit master seed.
        streams: one stream id per trajectory.
        checkpoint_times: extra times in ``(t0, t1)`` at which states are kept.
            They do not change the realized flashes.
        record_flash_states: keep the post-collapse state at every flash.

    Returns:
        An :class:`Ensemble`.
    """
    t0, t1 = float(window[0]), float(window[1])
    if not t0 <= t1:
        raise ValueError("window start after end")
    streams = np.asarray(streams, dtype=np.uint64).reshape(-1)
    M = streams.size
    dim = model.dim
    psi0 = np.asarray(psi0, dtype=np.complex128)
    if psi0.ndim == 1:
        psi0 = np.broadcast_to(psi0, (M, dim))
    if psi0.shape != (M, dim):
        raise ValueError(f"initial states have shape {psi0.shape}, expected {(M, dim)}")
    norms = np.linalg.norm(psi0, axis=1)
    if M and np.max(np.abs(norms - 1.0)) > 1e-10:
        raise ValueError("initial states must be normalized")
    cks = np.asarray(sorted(checkpoint_times), dtype=float)
    if cks.size and (cks[0] <= t0 or cks[-1] >= t1):
        raise ValueError("checkpoint times must lie strictly inside the window")

    x_re = np.ascontiguousarray(psi0.real, dtype=np.float64).copy()
    x_im = np.ascontiguousarray(psi0.imag, dtype=np.float64).copy()
    prop = _Propagator(model)
    sqrt_kernel = model.collapse.sqrt_kernel
    configs = model.configs
    rate = model.total_rate
    n_lab = model.n_particles

    t = np.full(M, t0)
    rounds = np.zeros(M, dtype=np.int64)
    ck_ptr = np.zeros(M, dtype=np.int64)
    ck_ext = np.append(cks, np.inf)
    ck_states = np.zeros((M, cks.size, dim), dtype=np.complex128) if cks.size else None
    ev_owner, ev_t, ev_x, ev_i, ev_states = [], [], [], [], []

    if rate > 0:
        u = _draw(seed, streams, rounds)
        t_next = t + (-np.log(u[:, 0])) / rate
    else:
        u = np.zeros((M, 4))
        t_next = np.full(M, np.inf)

    active = np.arange(M)
    while active.size:
        tn = t_next[active]
        tc = ck_ext[ck_ptr[active]]
        is_flash = (tn < tc) & (tn < t1)
        is_ck = ~is_flash & (tc < t1)
        target = np.where(is_flash, tn, np.where(is_ck, tc, t1))
        dt = target - t[active]
        r_re, r_im = prop(x_re[active], x_im[active], dt)
        t[active] = target

        if np.any(is_flash):
            f = np.flatnonzero(is_flash)
            rows = active[f]
            uf = u[rows]
            lab = np.minimum((uf[:, 1] * n_lab).astype(np.int64), n_lab - 1)
            prob = r_re[f] * r_re[f]
            prob += r_im[f] * r_im[f]
            site = _sample_sites(model, prob, lab, uf[:, 2])
            fac = sqrt_kernel[configs[:, lab].T, site[:, None]]
            c_re = r_re[f] * fac
            c_im = r_im[f] * fac
            nrm2 = _row_sq_norm(c_re, c_im)
            if np.any(nrm2 < UNDERFLOW):
                raise CollapseUnderflowError("collapse produced a vanishing state")
            nrm = np.sqrt(nrm2)[:, None]
            r_re[f] = c_re / nrm
            r_im[f] = c_im / nrm
            ev_owner.append(rows)
            ev_t.append(target[f])
            ev_x.append(site)
            ev_i.append(lab)
            if record_flash_states:
                ev_states.append(r_re[f] + 1j * r_im[f])
            rounds[rows] += 1
            u[rows] = _draw(seed, streams[rows], rounds[rows])
            t_next[rows] = target[f] + (-np.log(u[rows, 0])) / rate

        if np.any(is_ck):
            c = np.flatnonzero(is_ck)
            rows = active[c]
            ck_states[rows, ck_ptr[rows]] = r_re[c] + 1j * r_im[c]
            ck_ptr[rows] += 1

        x_re[active] = r_re
        x_im[active] = r_im
        done = ~is_flash & ~is_ck
        active = active[~done]

    if ev_owner:
        owner = np.concatenate(ev_owner)
        times = np.concatenate(ev_t)
        order = np.lexsort((times, owner))
        owner = owner[order]
        times = times[order]
        sites = np.concatenate(ev_x)[order]
        labels = np.concatenate(ev_i)[order]
        fstates = np.concatenate(ev_states)[order] if record_flash_states else None
    else:
        owner = np.zeros(0, np.int64)
        times = np.zeros(0)
        sites = np.zeros(0, np.int64)
        labels = np.zeros(0, np.int64)
        fstates = np.zeros((0, dim), np.complex128) if record_flash_states else None
    offsets = np.zeros(M + 1, dtype=np.int64)
    np.cumsum(np.bincount(owner, minlength=M), out=offsets[1:])
    final = x_re + 1j * x_im
    return Ensemble(t0, t1, offsets, times, sites, labels, final, int(seed), streams,
                    cks, ck_states, fstates)


DEFAULT_CHUNK = 25_000


def _simulate_chunk(job, model, window, seed, checkpoint_times):
    psi, streams = job
    return simulate_batch(model, psi, window, seed, streams, checkpoint_times)


def simulate_ensemble(model: GrwModel, psi0: np.ndarray, window: tuple[float, float], seed: int, M: int,
                      tag: int = 0, first_index: int = 0, checkpoint_times: Sequence[float] = (),
                      jobs: int | None = None, chunk: int = DEFAULT_CHUNK) -> Ensemble:
    """``M`` trajectories on streams ``stream_id(first_index + k, tag)``, split into chunks.

    The result does not depend on ``jobs`` or ``chunk``: every trajectory
    draws only from its own stream.
    """
    from .parallel import parallel_map

    streams = prng.stream_id(np.arange(first_index, first_index + M, dtype=np.uint64), tag)
    psi0 = np.asarray(psi0, dtype=np.complex128)
    if psi0.ndim == 1:
        psi0 = np.broadcast_to(psi0, (M, model.dim))
    cuts = list(range(0, M, max(1, chunk))) or [0]
    work = [(psi0[a:a + chunk], streams[a:a + chunk]) for a in cuts]
    fn = partial(_simulate_chunk, model=model, window=window, seed=seed, checkpoint_times=tuple(checkpoint_times))
    return Ensemble.concat(parallel_map(fn, work, jobs))


def simulate(model: GrwModel, psi0: np.ndarray, window: tuple[float, float], seed: int,
             stream: int = 0, checkpoint_times: Sequence[float] = ()) -> Trajectory:
    """Simulate one trajectory, keeping the state after every flash."""
    ens = simulate_batch(model, psi0, window, seed, [stream], checkpoint_times, record_flash_states=True)
    hist = ens.history(0)
    psi0 = np.asarray(psi0, dtype=np.complex128)
    cps = [(float(window[0]), psi0.copy())]
    pts = [(float(tt), ens.flash_states[k]) for k, tt in enumerate(hist.times)]
    if ens.checkpoint_states is not None:
        pts += [(float(tt), ens.checkpoint_states[0, j]) for j, tt in enumerate(ens.checkpoint_times)]
    cps += sorted(pts, key=lambda p: p[0])
    cps.append((float(window[1]), ens.final_states[0]))
    return Trajectory(hist, cps, int(seed), int(stream))


def l_operator(model: GrwModel, f: FlashHistory, window: tuple[float, float] | None = None) -> np.ndarray:
    """Operator ``L_{[s,t)}(f)`` whose squared norm on ``ψ`` is the flash density.

    Each flash contributes ``sqrt(λ a)·Λ_i(x)^{1/2}``, so ``‖L(f)ψ‖²`` is a
    density with respect to site counting times Lebesgue time measure.
    """
    s, t = (f.start, f.end) if window is None else (float(window[0]), float(window[1]))
    if len(f):
        if np.any(np.diff(f.times) <= 0):
            raise HistoryError("flash times must be strictly increasing")
        if f.times[0] < s or f.times[-1] >= t:
            raise HistoryError("flash outside window")
    fam = model.collapse
    amp = np.sqrt(model.lam * model.spacing)
    out = np.eye(model.dim, dtype=np.complex128)
    prev = s
    for tk, xk, ik in zip(f.times, f.sites, f.labels):
        out = model.propagator(tk - prev) @ out
        out = (amp * fam.sqrt_diagonal(int(ik), int(xk)))[:, None] * out
        prev = tk
    out = model.propagator(t - prev) @ out
    return np.exp(-0.5 * model.total_rate * (t - s)) * out


def history_density(model: GrwModel, psi0: np.ndarray, f: FlashHistory,
                    window: tuple[float, float] | None = None) -> float:
    """Joint flash density ``‖L(f)ψ0‖²`` (counting × Lebesgue measure)."""
    v = l_operator(model, f, window) @ np.asarray(psi0, dtype=np.complex128)
    return float(np.vdot(v, v).real)
