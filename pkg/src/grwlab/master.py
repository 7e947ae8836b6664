"""Density-matrix evolution under the GRW master equation.

Because every collapse operator is diagonal in the configuration basis, the
collapse term reduces to a Hadamard product:
``λ Σ_i Σ_x a·Λ_i(x)^{1/2} ρ Λ_i(x)^{1/2} = λ Σ_i K_i ∘ ρ`` with
``K_i[q, q'] = k(q_i, q'_i)``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .linalg import hermitize
from .model import GrwModel

#: Declared error budget of the fixed-step integrator at default steps.
INTEGRATOR_TOL = 2e-7
LAMBDA_DT = 1e-3
H_DT = 1e-2
PSD_FAIL = 1e-6


class PsdViolationError(ArithmeticError):
    pass


def vec(rho: np.ndarray) -> np.ndarray:
    """Column-stacking vectorization."""
    return np.asarray(rho).reshape(-1, order="F")


def unvec(v: np.ndarray, dim: int) -> np.ndarray:
    return np.asarray(v).reshape(dim, dim, order="F")


def decoherence_kernels(model: GrwModel) -> np.ndarray:
    """``K_i[q, q'] = Σ_x a·sqrt(Λ_i(x)_q Λ_i(x)_q')`` for each label, shape ``(N, d, d)``."""
    k1 = model.collapse.overlap_kernel()
    c = model.configs
    return np.stack([k1[np.ix_(c[:, i], c[:, i])] for i in range(model.n_particles)]) \
        if model.n_particles else np.zeros((0, 1, 1))


def collapse_kernel(model: GrwModel) -> np.ndarray:
    """Summed kernel ``Σ_i K_i``."""
    ks = decoherence_kernels(model)
    return ks.sum(axis=0) if len(ks) else np.zeros((model.dim, model.dim))


def lindblad_rhs(model: GrwModel, rho: np.ndarray, kernel: np.ndarray | None = None) -> np.ndarray:
    """Right-hand side ``dρ/dt``; ``rho`` may carry leading batch axes."""
    h = model.hamiltonian
    kern = collapse_kernel(model) if kernel is None else kernel
    out = -1j * (h @ rho - rho @ h)
    if model.lam:
        out += model.lam * (kern * rho - model.n_particles * rho)
    return out


def step_count(model: GrwModel, duration: float, steps: int | None = None) -> int:
    if steps is not None:
        return max(1, int(steps))
    need = max(model.lam * duration / LAMBDA_DT, model.hamiltonian_norm * duration / H_DT, 1.0)
    return int(math.ceil(need - 1e-9))


def rk4(rhs: Callable[[np.ndarray], np.ndarray], y0: np.ndarray, duration: float, steps: int,
        post: Callable[[np.ndarray], np.ndarray] | None = None) -> np.ndarray:
    """Classical fixed-step Runge-Kutta for an autonomous system."""
    y = np.array(y0, dtype=np.complex128)
    if duration == 0:
        return y
    dt = duration / steps
    for _ in range(steps):
        k1 = rhs(y)
        k2 = rhs(y + 0.5 * dt * k1)
        k3 = rhs(y + 0.5 * dt * k2)
        k4 = rhs(y + dt * k3)
        y = y + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        if post is not None:
            y = post(y)
    return y


def _hermitize_batch(y: np.ndarray) -> np.ndarray:
    return 0.5 * (y + np.conj(np.swapaxes(y, -1, -2)))


def evolve_operators(model: GrwModel, ops: np.ndarray, duration: float, steps: int | None = None,
                     hermitian: bool = False) -> np.ndarray:
    """Apply the master-equation flow to a stack of operators (no validation)."""
    kern = collapse_kernel(model)
    n = step_count(model, duration, steps)
    return rk4(lambda r: lindblad_rhs(model, r, kern), ops, duration, n,
               _hermitize_batch if hermitian else None)


def evolve_density(model: GrwModel, rho0: np.ndarray, window: tuple[float, float],
                   steps: int | None = None) -> np.ndarray:
    """Integrate the master equation from ``window[0]`` to ``window[1]`` with RK4."""
    rho0 = np.asarray(rho0, dtype=np.complex128)
    if rho0.shape != (model.dim, model.dim):
        raise ValueError(f"density matrix has shape {rho0.shape}, expected {(model.dim,) * 2}")
    duration = float(window[1]) - float(window[0])
    rho = hermitize(evolve_operators(model, rho0, duration, steps, hermitian=True))
    w = np.linalg.eigvalsh(rho)
    if w[0] < -PSD_FAIL:
        raise PsdViolationError(f"negative eigenvalue {w[0]:.3e}; increase steps")
    return rho


def heisenberg_operators(model: GrwModel, ops: np.ndarray, duration: float,
                         steps: int | None = None) -> np.ndarray:
    """Dual flow ``A†`` applied to observables: ``dX/dt = i[H, X] + λ(K∘X − N X)``."""
    kern = collapse_kernel(model)
    h = model.hamiltonian
    lam, n_p = model.lam, model.n_particles

    def rhs(x):
        out = 1j * (h @ x - x @ h)
        if lam:
            out += lam * (kern * x - n_p * x)
        return out

    return rk4(rhs, ops, duration, step_count(model, duration, steps))


@dataclass(frozen=True)
class ChannelMatrix:
    """Superoperator acting on column-stacked operators."""

    matrix: np.ndarray
    dim: int

    def apply(self, rho: np.ndarray) -> np.ndarray:
        return unvec(self.matrix @ vec(rho), self.dim)

    def compose(self, first: "ChannelMatrix") -> "ChannelMatrix":
        """``self ∘ first``."""
        return ChannelMatrix(self.matrix @ first.matrix, self.dim)

    def choi(self) -> np.ndarray:
        """Choi matrix ``Σ_{ij} |i⟩⟨j| ⊗ C(|i⟩⟨j|)``."""
        d = self.dim
        cols = self.matrix.T.reshape(d, d, d, d)  # [j_in, i_in, out_col, out_row]
        return np.einsum("jicr->irjc", cols).reshape(d * d, d * d)

    def trace_defect(self) -> float:
        """Max deviation of ``tr ∘ C`` from ``tr`` over matrix units."""
        d = self.dim
        tr_row = vec(np.eye(d))
        return float(np.max(np.abs(tr_row @ self.matrix - tr_row)))

    @classmethod
    def identity(cls, dim: int) -> "ChannelMatrix":
        return cls(np.eye(dim * dim, dtype=np.complex128), dim)

    @classmethod
    def unitary(cls, u: np.ndarray) -> "ChannelMatrix":
        return cls(np.kron(u.conj(), u), u.shape[0])


def build_channel(model: GrwModel, window: tuple[float, float], steps: int | None = None) -> ChannelMatrix:
    """Channel ``A_{[s,t)}`` obtained by evolving every matrix unit."""
    d = model.dim
    units = np.zeros((d * d, d, d), dtype=np.complex128)
    for k in range(d * d):
        i, j = k % d, k // d
        units[k, i, j] = 1.0
    duration = float(window[1]) - float(window[0])
    out = evolve_operators(model, units, duration, steps)
    mat = np.stack([vec(o) for o in out], axis=1)
    return ChannelMatrix(mat, d)
