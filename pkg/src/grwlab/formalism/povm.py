"""POVMs, Kraus maps and the Choi-Kraus correspondence.

Kraus maps here act on row-major operators; their Choi matrices use the
row-major vectorization ``vec(R)[a*d_in + b] = R[a, b]``, so
``J = Σ_i vec(R_i) vec(R_i)†``. Channel matrices from :mod:`grwlab.master`
use column stacking and are converted on the way in.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Hashable, Mapping, Sequence

import numpy as np

from ..linalg import hermitize
from ..master import ChannelMatrix

KRAUS_CUTOFF = 1e-10
PSD_TOL = 1e-8


class PovmError(ValueError):
    pass


class ChoiNotPsdError(PovmError):
    pass


@dataclass(eq=False)
class Povm:
    """Finite-outcome POVM.

    Attributes:
        outcomes: outcome ids (hashable; tuples for joint outcomes).
        effects: array of shape ``(n_outcomes, d, d)``.
        meta: free-form metadata (tolerances, remainder bounds, seeds).
    """

    outcomes: list
    effects: np.ndarray
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.outcomes = list(self.outcomes)
        self.effects = np.asarray(self.effects, dtype=np.complex128)
        if self.effects.ndim != 3 or self.effects.shape[1] != self.effects.shape[2]:
            raise PovmError("effects must have shape (n, d, d)")
        if len(self.outcomes) != self.effects.shape[0]:
            raise PovmError("one effect per outcome required")
        if len(set(self.outcomes)) != len(self.outcomes):
            raise PovmError("duplicate outcome ids")

    @property
    def dim(self) -> int:
        return self.effects.shape[1]

    def __getitem__(self, z) -> np.ndarray:
        return self.effects[self.outcomes.index(z)]

    def __len__(self) -> int:
        return len(self.outcomes)

    def total(self) -> np.ndarray:
        return self.effects.sum(axis=0)

    def completeness_error(self) -> float:
        return float(np.max(np.abs(self.total() - np.eye(self.dim))))

    def min_eigenvalue(self) -> float:
        return float(min(np.linalg.eigvalsh(hermitize(e))[0] for e in self.effects))

    def hermiticity_error(self) -> float:
        return float(np.max(np.abs(self.effects - np.conj(np.swapaxes(self.effects, 1, 2)))))

    def check(self, tol: float = PSD_TOL, completeness_tol: float | None = None) -> None:
        """Raise :class:`PovmError` unless the POVM axioms hold."""
        ctol = tol if completeness_tol is None else completeness_tol
        if self.hermiticity_error() > tol:
            raise PovmError("effects are not Hermitian")
        if self.min_eigenvalue() < -tol:
            raise PovmError(f"effect with eigenvalue {self.min_eigenvalue():.3e}")
        if self.completeness_error() > ctol:
            raise PovmError(f"effects sum to I only within {self.completeness_error():.3e}")

    def probabilities(self, rho: np.ndarray) -> np.ndarray:
        rho = np.asarray(rho)
        if rho.ndim == 1:
            rho = np.outer(rho, rho.conj())
        return np.einsum("zij,ji->z", self.effects, rho).real

    def coarsen(self, fn: Callable[[Hashable], Hashable]) -> "Povm":
        """Image POVM under an outcome map: ``E'(y) = Σ_{z: fn(z)=y} E(z)``."""
        groups: dict = {}
        for z, e in zip(self.outcomes, self.effects):
            y = fn(z)
            groups[y] = groups[y] + e if y in groups else e.copy()
        return Povm(list(groups), np.array(list(groups.values())), dict(self.meta))

    def reduce(self, phi: np.ndarray, dims: tuple[int, int]) -> "Povm":
        """Contract the second factor with ``φ``: ``⟨φ|E(z)|φ⟩`` on the first factor."""
        d1, d2 = dims
        phi = np.asarray(phi, dtype=np.complex128)
        t = self.effects.reshape(len(self), d1, d2, d1, d2)
        red = np.einsum("b,zabcd,d->zac", phi.conj(), t, phi)
        return Povm(self.outcomes, red, dict(self.meta))

    def is_projective(self, tol: float = 1e-9) -> bool:
        return projectivity_error(self) <= tol

    def select(self, outcomes: Sequence) -> np.ndarray:
        return np.array([self[z] for z in outcomes])


def projectivity_error(povm: Povm) -> float:
    return float(max(np.max(np.abs(e @ e - e)) for e in povm.effects))


@dataclass(eq=False)
class KrausMap:
    """Completely positive map ``T ↦ Σ R_i T R_i†``; ``ops`` has shape ``(r, d_out, d_in)``."""

    ops: np.ndarray

    def __post_init__(self):
        ops = np.asarray(self.ops, dtype=np.complex128)
        if ops.ndim == 2:
            ops = ops[None]
        if ops.ndim != 3:
            raise PovmError("Kraus operators must have shape (r, d_out, d_in)")
        self.ops = ops

    @property
    def d_in(self) -> int:
        return self.ops.shape[2]

    @property
    def d_out(self) -> int:
        return self.ops.shape[1]

    @property
    def rank(self) -> int:
        return self.ops.shape[0]

    def apply(self, t: np.ndarray) -> np.ndarray:
        return np.einsum("kab,bc,kdc->ad", self.ops, np.asarray(t), self.ops.conj())

    def dual(self, e: np.ndarray) -> np.ndarray:
        """Heisenberg-picture action ``Σ R† E R``."""
        return np.einsum("kba,bc,kcd->ad", self.ops.conj(), np.asarray(e), self.ops)

    def effect(self) -> np.ndarray:
        return np.einsum("kba,kbd->ad", self.ops.conj(), self.ops)

    def then(self, after: "KrausMap") -> "KrausMap":
        """``after ∘ self`` in Kraus form."""
        if after.d_in != self.d_out:
            raise PovmError("dimension mismatch in composition")
        ops = np.einsum("iab,jbc->ijac", after.ops, self.ops).reshape(-1, after.d_out, self.d_in)
        return KrausMap(ops)

    def choi(self) -> np.ndarray:
        v = self.ops.reshape(self.rank, -1)
        return v.T @ v.conj()

    def to_channel(self) -> ChannelMatrix:
        if self.d_in != self.d_out:
            raise PovmError("channel matrices need square Kraus operators")
        # column stacking: vec(R T R†) = (conj(R) ⊗ R) vec(T)
        return ChannelMatrix(sum(np.kron(r.conj(), r) for r in self.ops), self.d_in)

    def compressed(self, cutoff: float = KRAUS_CUTOFF) -> "KrausMap":
        return kraus_from_choi(self.choi(), self.d_out, self.d_in, cutoff)


def kraus_from_choi(choi: np.ndarray, d_out: int, d_in: int, cutoff: float = KRAUS_CUTOFF,
                    psd_tol: float = PSD_TOL) -> KrausMap:
    """Kraus operators from the eigendecomposition of a row-major Choi matrix."""
    choi = hermitize(np.asarray(choi, dtype=np.complex128))
    w, v = np.linalg.eigh(choi)
    scale = max(1.0, float(np.max(np.abs(w)))) if w.size else 1.0
    if w.size and w[0] < -psd_tol * scale:
        raise ChoiNotPsdError(f"Choi matrix has eigenvalue {w[0]:.3e}")
    keep = w > cutoff
    ops = (v[:, keep] * np.sqrt(w[keep])).T.reshape(-1, d_out, d_in)
    if ops.shape[0] == 0:
        ops = np.zeros((1, d_out, d_in), dtype=np.complex128)
    return KrausMap(ops)


def choi_kraus(channel: ChannelMatrix, cutoff: float = KRAUS_CUTOFF) -> KrausMap:
    """Kraus decomposition of a column-stacked channel matrix."""
    d = channel.dim
    # channel.choi() is Σ|i⟩⟨j|⊗C(|i⟩⟨j|); reorder to Σ C(|i⟩⟨j|)⊗|i⟩⟨j| (row-major Kraus Choi)
    j = channel.choi().reshape(d, d, d, d)  # [i, r, j, c]
    rowmajor = np.einsum("irjc->ricj", j).reshape(d * d, d * d)
    return kraus_from_choi(rowmajor, d, d, cutoff)


def povm_from_kraus(maps: Mapping[Hashable, KrausMap], check: bool = True, tol: float = PSD_TOL) -> Povm:
    """Effects ``E_z = Σ_i R_zi† R_zi``; completeness is checked when ``check``."""
    outcomes = list(maps)
    povm = Povm(outcomes, np.array([maps[z].effect() for z in outcomes]))
    if check:
        povm.check(tol)
    return povm


def matrix_units(d: int) -> np.ndarray:
    units = np.zeros((d * d, d, d), dtype=np.complex128)
    for k in range(d * d):
        units[k, k // d, k % d] = 1.0
    return units


def consistency_error(povm: Povm, maps: Mapping[Hashable, KrausMap]) -> float:
    """``max |tr(T E_z) − tr C_z(T)|`` over matrix units ``T`` and outcomes ``z``."""
    d = povm.dim
    units = matrix_units(d)
    err = 0.0
    for z, e in zip(povm.outcomes, povm.effects):
        lhs = np.einsum("kab,ba->k", units, e)
        c = maps[z]
        rhs = np.array([np.trace(c.apply(t)) for t in units])
        err = max(err, float(np.max(np.abs(lhs - rhs))))
    return err


def sum_channel(maps: Mapping[Hashable, KrausMap]) -> KrausMap:
    return KrausMap(np.concatenate([m.ops for m in maps.values()]))
