"""Monte Carlo estimation of POVMs by state tomography on the object."""
from __future__ import annotations

from dataclasses import dataclass
from functools import partial

import numpy as np

from ..parallel import parallel_map
from .experiment import Experiment, sample_outcomes
from .povm import Povm


class TomographyError(np.linalg.LinAlgError):
    pass


def tomography_states(d: int) -> np.ndarray:
    """``|j⟩``, ``(|j⟩+|k⟩)/√2`` and ``(|j⟩+i|k⟩)/√2`` for ``j < k``: ``d²`` pure states."""
    states = [np.eye(d, dtype=np.complex128)[j] for j in range(d)]
    for j in range(d):
        for k in range(j + 1, d):
            for ph in (1.0, 1j):
                v = np.zeros(d, dtype=np.complex128)
                v[j] = 1 / np.sqrt(2)
                v[k] = ph / np.sqrt(2)
                states.append(v)
    return np.array(states)


def tomography_matrix(states: np.ndarray) -> np.ndarray:
    """Rows ``A[b, i*d+j] = ρ_b[j, i]`` so that ``tr(ρ_b E) = A[b] @ vec(E)``."""
    rhos = np.einsum("bi,bj->bij", states, states.conj())
    return np.transpose(rhos, (0, 2, 1)).reshape(len(states), -1)


@dataclass
class TomographyResult:
    """Estimated POVM with entrywise standard errors of real and imaginary parts."""

    povm: Povm
    se_re: np.ndarray
    se_im: np.ndarray
    counts: np.ndarray
    M: int
    seed: int
    condition_number: float

    def z_scores(self, exact: Povm, extra_tol: float = 0.0) -> np.ndarray:
        """``|estimate − exact| / SE`` after subtracting ``extra_tol`` (Re and Im stacked)."""
        est = np.array([self.povm[z] for z in exact.outcomes])
        sre = np.array([self.se_re[self.povm.outcomes.index(z)] for z in exact.outcomes])
        sim = np.array([self.se_im[self.povm.outcomes.index(z)] for z in exact.outcomes])
        dre = np.maximum(np.abs(est.real - exact.effects.real) - extra_tol, 0.0)
        dim_ = np.maximum(np.abs(est.imag - exact.effects.imag) - extra_tol, 0.0)
        with np.errstate(divide="ignore", invalid="ignore"):
            zr = np.where(sre > 0, dre / sre, np.where(dre > 0, np.inf, 0.0))
            zi = np.where(sim > 0, dim_ / sim, np.where(dim_ > 0, np.inf, 0.0))
        return np.stack([zr, zi])

    def agrees_with(self, exact: Povm, n_se: float = 4.0, extra_tol: float = 0.0) -> bool:
        return bool(np.all(self.z_scores(exact, extra_tol) <= n_se))


def _basis_counts(b: int, exp: Experiment, states: np.ndarray, M: int, seed: int, tag_base: int) -> np.ndarray:
    idx, _ = sample_outcomes(exp, states[b], M, seed, tag=tag_base + b)
    return np.bincount(idx, minlength=len(exp.outcomes))


def grw_povm_mc(exp: Experiment, M: int, seed: int, tag_base: int = 1000, jobs: int | None = 1) -> TomographyResult:
    """Estimate ``E_z`` from outcome frequencies over a tomographically complete set of object states.

    Each basis state gets ``M`` joint trajectories started from ``ψ_b ⊗ φ``
    (``φ`` drawn from the eigen-ensemble of ``rho_app``).
    """
    d = exp.d_sys
    states = tomography_states(d)
    a = tomography_matrix(states)
    cond = float(np.linalg.cond(a))
    if not np.isfinite(cond) or cond > 1e12:
        raise TomographyError("tomography system is singular")
    pinv = np.linalg.pinv(a)
    work = partial(_basis_counts, exp=exp, states=states, M=M, seed=seed, tag_base=tag_base)
    counts = np.array(parallel_map(work, range(len(states)), jobs))  # (B, Z)
    freq = counts / M
    p_tilde = (counts + 1.0) / (M + 2.0)
    var = p_tilde * (1 - p_tilde) / M
    est = (pinv @ freq).T.reshape(-1, d, d)
    est = 0.5 * (est + np.conj(np.swapaxes(est, 1, 2)))
    se_re = np.sqrt(np.einsum("eb,bz->ze", pinv.real**2, var)).reshape(-1, d, d)
    se_im = np.sqrt(np.einsum("eb,bz->ze", pinv.imag**2, var)).reshape(-1, d, d)
    povm = Povm(exp.outcomes, est, {"law": "grw", "route": "mc", "M": M, "seed": seed})
    return TomographyResult(povm, se_re, se_im, counts, M, seed, cond)
