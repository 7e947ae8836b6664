"""GRW law of operators by enumerating flash histories.

For every flash count ``n ≤ n_max`` the ordered flash times are integrated by
a Gauss-Legendre rule on the ordered simplex, and all ``(L·N)**n`` site/label
sequences are propagated at once as a batch of ``L(f)·V`` matrices, where
``V`` dilates the apparatus ready state. Histories with more than ``n_max``
flashes are dropped; their total weight is the Poisson tail, reported as the
remainder bound.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Sequence

import numpy as np
from scipy import stats

from ..linalg import hermitize
from .experiment import Experiment, ExperimentError
from .povm import KrausMap, Povm, kraus_from_choi

DEFAULT_NODES = 8
DEFAULT_BUDGET = 5e7


class CostGuardError(RuntimeError):
    pass


@lru_cache(maxsize=None)
def simplex_rule(n: int, nodes: int = DEFAULT_NODES) -> tuple[np.ndarray, np.ndarray]:
    """Quadrature on ``{0 < u_1 < … < u_n < 1}``.

    Collapsed-coordinate map ``u_n = v_n``, ``u_k = v_k u_{k+1}`` applied to a
    tensor Gauss-Legendre rule; Jacobian ``Π_{k≥2} u_k``.

    Returns:
        ``(points, weights)`` with points of shape ``(nodes**n, n)`` sorted
        along each row; the weights sum to ``1/n!``.
    """
    if n == 0:
        return np.zeros((1, 0)), np.ones(1)
    x, w = np.polynomial.legendre.leggauss(nodes)
    x = 0.5 * (x + 1.0)
    w = 0.5 * w
    grid = np.array(list(itertools.product(range(nodes), repeat=n)))
    v = x[grid]
    wt = np.prod(w[grid], axis=1)
    u = np.empty_like(v)
    u[:, n - 1] = v[:, n - 1]
    for k in range(n - 2, -1, -1):
        u[:, k] = v[:, k] * u[:, k + 1]
    jac = np.prod(u[:, 1:], axis=1)
    return u, wt * jac


def time_rule(window: tuple[float, float], n: int, nodes: int = DEFAULT_NODES,
              breakpoints: Sequence[float] = ()) -> tuple[np.ndarray, np.ndarray]:
    """Quadrature for ``n`` ordered times in ``window``.

    With breakpoints the window is cut into pieces and every distribution of
    the ``n`` times over the pieces gets a product of simplex rules, so
    integrands that jump at the breakpoints are still integrated accurately.
    """
    s, t = window
    edges = [s] + sorted(b for b in breakpoints if s < b < t) + [t]
    pieces = list(zip(edges[:-1], edges[1:]))
    if n == 0:
        return np.zeros((1, 0)), np.ones(1)
    all_t, all_w = [], []
    for counts in itertools.product(range(n + 1), repeat=len(pieces)):
        if sum(counts) != n:
            continue
        parts_t, parts_w = [np.zeros((1, 0))], [np.ones(1)]
        for (a, b), c in zip(pieces, counts):
            if c == 0:
                continue
            u, w = simplex_rule(c, nodes)
            parts_t.append(a + (b - a) * u)
            parts_w.append(w * (b - a) ** c)
        tt, ww = parts_t[0], parts_w[0]
        for pt, pw in zip(parts_t[1:], parts_w[1:]):
            tt = np.concatenate([np.repeat(tt, len(pt), axis=0), np.tile(pt, (len(tt), 1))], axis=1)
            ww = np.repeat(ww, len(pw)) * np.tile(pw, len(ww))
        all_t.append(tt)
        all_w.append(ww)
    return np.concatenate(all_t), np.concatenate(all_w)


def poisson_tail(mean: float, n_max: int) -> float:
    """``P(n > n_max)`` for a Poisson count."""
    if mean <= 0:
        return 0.0
    return float(stats.poisson.sf(n_max, mean))


@dataclass
class HistoryBlock:
    """All site/label sequences for one flash count and one time node."""

    n: int
    times: np.ndarray
    weight: float
    sites: np.ndarray
    labels: np.ndarray
    ops: np.ndarray


def enumerate_histories(model, window, right: np.ndarray, n_max: int, nodes: int = DEFAULT_NODES,
                        breakpoints: Sequence[float] = (), budget: float = DEFAULT_BUDGET):
    """Yield :class:`HistoryBlock` items covering all histories with ``n ≤ n_max`` flashes.

    ``ops[k] = L(f_k) @ right`` for the ``k``-th site/label sequence, with
    sequence index ``Σ_j c_j m^{n-1-j}`` and ``c_j = label_j·L + site_j``.
    """
    s, t = float(window[0]), float(window[1])
    m = model.sites * model.n_particles
    if n_max < 0:
        raise ValueError("n_max must be non-negative")
    cost = float(m * nodes) ** n_max
    if model.lam > 0 and cost > budget:
        raise CostGuardError(f"(L·N·K)^n_max = {cost:.3g} exceeds budget {budget:.3g}")
    if model.lam == 0:
        n_max = 0
    w_h, v_h = model.eig
    prop = lambda dt: (v_h * np.exp(-1j * w_h * dt)) @ v_h.conj().T
    amp = math.sqrt(model.lam * model.spacing)
    sq = model.collapse.sqrt_diagonals().reshape(m, model.dim)  # index label*L + site
    damp = math.exp(-0.5 * model.total_rate * (t - s))
    right = np.asarray(right, dtype=np.complex128)
    for n in range(n_max + 1):
        times, weights = time_rule((s, t), n, nodes, breakpoints)
        combos = np.array(list(itertools.product(range(m), repeat=n)), dtype=np.int64).reshape(m**n, n)
        sites = combos % model.sites
        labels = combos // model.sites
        for tt, w in zip(times, weights):
            a = right[None]
            prev = s
            for k in range(n):
                a = prop(tt[k] - prev) @ a
                a = (amp * sq[None, :, :, None] * a[:, None, :, :]).reshape(-1, *right.shape)
                prev = tt[k]
            a = damp * (prop(t - prev) @ a)
            yield HistoryBlock(n, tt, float(w), sites, labels, a)


@dataclass
class GrwLaw:
    povm: Povm
    superops: dict | None
    remainder: float


def grw_law_exact(exp: Experiment, n_max: int, nodes: int = DEFAULT_NODES, superops: bool = True,
                  breakpoints: Sequence[float] = (), budget: float = DEFAULT_BUDGET) -> GrwLaw:
    """Effects and (optionally) operations of the GRW law for a fixed window."""
    if exp.stopping is not None:
        raise ExperimentError("use random_runtime_povm for experiments with a stopping rule")
    model = exp.model
    cal = exp.calibration
    d_sys, d_app = exp.d_sys, exp.d_app
    v = exp.dilation()
    r = v.shape[1] // d_sys
    nz = len(cal.outcomes)
    readouts = exp.full_pointer() if cal.uses_readout else [None]
    diag_ptr = all(p is None or np.count_nonzero(p - np.diag(np.diag(p))) == 0 for p in readouts)
    effects = np.zeros((nz, d_sys, d_sys), dtype=np.complex128)
    choi = np.zeros((nz, d_sys**2, d_sys**2), dtype=np.complex128) if superops else None
    for blk in enumerate_histories(model, exp.window, v, n_max, nodes, breakpoints, budget):
        tt = np.broadcast_to(blk.times, (blk.sites.shape[0], blk.n))
        for k, q in enumerate(readouts):
            if q is None:
                b = blk.ops
            elif diag_ptr:
                b = np.diag(q).real[None, :, None] * blk.ops
            else:
                b = q[None] @ blk.ops
            z = cal.evaluate(tt, blk.sites, blk.labels, None if q is None else np.full(len(tt), k))
            # E_z: Σ_r A_r† Q A_r (Q is a projector, so Q A = B and A†QA = B†B)
            g = np.einsum("fab,fac->fbc", b.conj(), b)
            g = g.reshape(-1, r, d_sys, r, d_sys)
            e_f = np.einsum("frarb->fab", g)
            np.add.at(effects, z, blk.weight * e_f)
            if superops:
                x = b.reshape(-1, d_sys, d_app, r, d_sys).transpose(0, 2, 3, 1, 4)
                x = x.reshape(x.shape[0], d_app * r, d_sys * d_sys)
                for zi in np.unique(z):
                    xs = x[z == zi].reshape(-1, d_sys * d_sys)
                    choi[zi] += blk.weight * (xs.T @ xs.conj())
    rem = poisson_tail(model.total_rate * (exp.window[1] - exp.window[0]), n_max) if model.lam else 0.0
    meta = {"law": "grw", "n_max": n_max, "nodes": nodes, "remainder_bound": rem}
    povm = Povm(list(cal.outcomes), np.array([hermitize(e) for e in effects]), meta)
    maps = None
    if superops:
        maps = {z: kraus_from_choi(choi[i], d_sys, d_sys) for i, z in enumerate(cal.outcomes)}
    return GrwLaw(povm, maps, rem)


def grw_povm_exact(exp: Experiment, n_max: int, nodes: int = DEFAULT_NODES, **kw) -> tuple[Povm, float]:
    """GRW effects ``E_z = tr_app ∫_{ζ⁻¹(z)} df [I⊗ρ_app] L†L`` and the truncation remainder."""
    law = grw_law_exact(exp, n_max, nodes, superops=False, **kw)
    return law.povm, law.remainder


def grw_superops_exact(exp: Experiment, n_max: int, nodes: int = DEFAULT_NODES, **kw) -> dict:
    """GRW operations ``C_z(T) = tr_app ∫_{ζ⁻¹(z)} df L[T⊗ρ_app]L†`` in Kraus form."""
    return grw_law_exact(exp, n_max, nodes, superops=True, **kw).superops
