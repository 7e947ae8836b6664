"""Lattice GRW models: configuration space, Hamiltonians, collapse operators.

The configuration basis of ``N`` particles on ``L`` sites is indexed with
particle 0 as the most significant digit, so a split of the leading labels
from the trailing ones is a plain Kronecker factorization.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Sequence

import numpy as np

from .linalg import is_hermitian, op_norm


class ModelError(ValueError):
    pass


def configurations(n_particles: int, sites: int) -> np.ndarray:
    """Table of site indices, shape ``(sites**n_particles, n_particles)``."""
    if n_particles == 0:
        return np.zeros((1, 0), dtype=np.int64)
    grids = np.indices((sites,) * n_particles).reshape(n_particles, -1).T
    return np.ascontiguousarray(grids, dtype=np.int64)


@dataclass(frozen=True)
class CollapseOperatorFamily:
    """Diagonal collapse rate operators ``Λ_i(x)``.

    Since ``Λ_i(x)`` depends on the configuration only through ``q_i``, the
    family is stored as a single-particle kernel ``kernel[q, x]`` with
    ``Σ_x a·kernel[q, x] = 1`` for every ``q``.
    """

    kernel: np.ndarray
    spacing: float
    n_particles: int

    @property
    def sites(self) -> int:
        return self.kernel.shape[0]

    @cached_property
    def sqrt_kernel(self) -> np.ndarray:
        return np.sqrt(self.kernel)

    @cached_property
    def _configs(self) -> np.ndarray:
        return configurations(self.n_particles, self.sites)

    def diagonal(self, label: int, site: int) -> np.ndarray:
        """Diagonal of ``Λ_label(site)`` over configurations."""
        return self.kernel[self._configs[:, label], site]

    def sqrt_diagonal(self, label: int, site: int) -> np.ndarray:
        return self.sqrt_kernel[self._configs[:, label], site]

    def diagonals(self) -> np.ndarray:
        """All diagonals, shape ``(N, L, dim)``."""
        return np.transpose(self.kernel[self._configs], (1, 2, 0)).copy()

    def sqrt_diagonals(self) -> np.ndarray:
        return np.sqrt(self.diagonals())

    def operator(self, label: int, site: int) -> np.ndarray:
        return np.diag(self.diagonal(label, site)).astype(np.complex128)

    def overlap_kernel(self) -> np.ndarray:
        """Single-particle decoherence kernel ``k(q, q') = Σ_x a·sqrt(Λ(x)_q Λ(x)_q')``."""
        s = self.sqrt_kernel
        return self.spacing * s @ s.T


@dataclass(frozen=True, eq=False)
class GrwModel:
    """A GRW universe on a 1-D lattice.

    Attributes:
        n_particles: number of labels ``N``.
        sites: sites per particle ``L``.
        spacing: lattice spacing ``a``.
        lam: collapse rate per particle (``λ``), zero for the quantum limit.
        sigma: localization width in length units.
        masses: one mass per particle.
        hamiltonian: Hermitian matrix of size ``L**N``.
    """

    n_particles: int
    sites: int
    spacing: float = 1.0
    lam: float = 0.0
    sigma: float = 1.0
    masses: tuple = ()
    hamiltonian: np.ndarray = field(default=None, repr=False)

    def __post_init__(self):
        if self.n_particles < 0 or int(self.n_particles) != self.n_particles:
            raise ModelError("n_particles must be a non-negative integer")
        if self.sites < 1:
            raise ModelError("sites must be positive")
        if not self.spacing > 0:
            raise ModelError("spacing must be positive")
        if not self.sigma > 0:
            raise ModelError("sigma must be positive")
        if not (self.lam >= 0 and np.isfinite(self.lam)):
            raise ModelError("lam must be finite and non-negative")
        masses = tuple(float(m) for m in self.masses) or (1.0,) * self.n_particles
        if len(masses) != self.n_particles or any(not m > 0 for m in masses):
            raise ModelError("need one positive mass per particle")
        object.__setattr__(self, "masses", masses)
        dim = self.sites ** self.n_particles
        h = self.hamiltonian
        h = np.zeros((dim, dim), dtype=np.complex128) if h is None else np.asarray(h, dtype=np.complex128)
        if h.shape != (dim, dim):
            raise ModelError(f"hamiltonian has shape {h.shape}, expected {(dim, dim)}")
        if not is_hermitian(h):
            raise ModelError("hamiltonian is not Hermitian")
        h = h.copy()
        h.setflags(write=False)
        object.__setattr__(self, "hamiltonian", h)

    @property
    def dim(self) -> int:
        return self.sites ** self.n_particles

    @property
    def total_rate(self) -> float:
        return self.n_particles * self.lam

    @property
    def positions(self) -> np.ndarray:
        return np.arange(self.sites) * self.spacing

    @cached_property
    def configs(self) -> np.ndarray:
        return configurations(self.n_particles, self.sites)

    @cached_property
    def collapse(self) -> CollapseOperatorFamily:
        return build_collapse_operators(self)

    @cached_property
    def eig(self) -> tuple[np.ndarray, np.ndarray]:
        w, v = np.linalg.eigh(self.hamiltonian)
        return w, v

    @cached_property
    def hamiltonian_norm(self) -> float:
        return op_norm(self.hamiltonian)

    def propagator(self, t: float) -> np.ndarray:
        w, v = self.eig
        return (v * np.exp(-1j * w * t)) @ v.conj().T

    def with_lambda(self, lam: float) -> "GrwModel":
        return GrwModel(self.n_particles, self.sites, self.spacing, lam, self.sigma,
                        self.masses, self.hamiltonian)

    def with_hamiltonian(self, h: np.ndarray) -> "GrwModel":
        return GrwModel(self.n_particles, self.sites, self.spacing, self.lam, self.sigma,
                        self.masses, h)

    def localized_state(self, config: Sequence[int]) -> np.ndarray:
        psi = np.zeros(self.dim, dtype=np.complex128)
        psi[config_index(config, self.sites)] = 1.0
        return psi


def config_index(config: Sequence[int], sites: int) -> int:
    idx = 0
    for q in config:
        if not 0 <= q < sites:
            raise ModelError(f"site {q} out of range")
        idx = idx * sites + int(q)
    return idx


def build_collapse_operators(model: GrwModel) -> CollapseOperatorFamily:
    """Gaussian collapse operators renormalized to ``Σ_x a·Λ_i(x) = I``.

    Gaussians are evaluated at lattice sites and truncated at the lattice
    edges; each row is rescaled so the completeness relation is exact.
    """
    pos = model.positions
    g = np.exp(-((pos[:, None] - pos[None, :]) ** 2) / (2.0 * model.sigma**2))
    kernel = g / (model.spacing * g.sum(axis=1, keepdims=True))
    kernel.setflags(write=False)
    return CollapseOperatorFamily(kernel=kernel, spacing=model.spacing,
                                  n_particles=model.n_particles)


def embed_single(op: np.ndarray, label: int, n_particles: int, sites: int) -> np.ndarray:
    """Lift a single-particle operator to act on particle ``label``."""
    op = np.asarray(op, dtype=np.complex128)
    out = np.ones((1, 1), dtype=np.complex128)
    eye = np.eye(sites)
    for i in range(n_particles):
        out = np.kron(out, op if i == label else eye)
    return out


def hopping_matrix(sites: int, mass: float = 1.0, spacing: float = 1.0) -> np.ndarray:
    """Discretized ``-∂²/2m`` with open boundaries (diagonal ``1/(m a²)``)."""
    t = 1.0 / (2.0 * mass * spacing**2)
    h = np.diag(np.full(sites, 2.0 * t)).astype(np.complex128)
    idx = np.arange(sites - 1)
    h[idx, idx + 1] = -t
    h[idx + 1, idx] = -t
    return h


def build_hamiltonian(kind: str, n_particles: int, sites: int, params: dict | None = None) -> np.ndarray:
    """Build a lattice Hamiltonian.

    Args:
        kind: ``"zero"`` or ``"hopping"`` (hopping plus potential).
        n_particles: number of particles.
        sites: sites per particle.
        params: optional keys ``masses``, ``spacing``, ``potential`` (list of
            per-particle on-site potentials, each of length ``sites``),
            ``contact`` (strength of ``δ_{q_i, q_j}`` for every pair) and
            ``hopping_scale`` (multiplies the kinetic term, default 1).
    """
    params = dict(params or {})
    dim = sites**n_particles
    if kind == "zero":
        return np.zeros((dim, dim), dtype=np.complex128)
    if kind not in ("hopping", "hopping+potential"):
        raise ModelError(f"unknown hamiltonian kind {kind!r}")
    masses = params.get("masses") or [1.0] * n_particles
    spacing = float(params.get("spacing", 1.0))
    scale = float(params.get("hopping_scale", 1.0))
    h = np.zeros((dim, dim), dtype=np.complex128)
    for i in range(n_particles):
        h += scale * embed_single(hopping_matrix(sites, masses[i], spacing), i, n_particles, sites)
    configs = configurations(n_particles, sites)
    diag = np.zeros(dim)
    potential = params.get("potential")
    if potential is not None:
        pot = np.asarray(potential, dtype=float)
        if pot.ndim == 1:
            pot = np.tile(pot, (n_particles, 1))
        if pot.shape != (n_particles, sites):
            raise ModelError("potential must have shape (sites,) or (n_particles, sites)")
        for i in range(n_particles):
            diag += pot[i, configs[:, i]]
    contact = float(params.get("contact", 0.0))
    if contact:
        for i in range(n_particles):
            for j in range(i + 1, n_particles):
                diag += contact * (configs[:, i] == configs[:, j])
    if not np.all(np.isfinite(diag)):
        raise ModelError("potential must be finite")
    h[np.diag_indices(dim)] += diag
    return h


@dataclass(frozen=True)
class SystemSplit:
    """Partition of flashes into system and environment.

    Attributes:
        sys_labels: particle labels owned by the system.
        sys_region: sites counted as system sites, ``None`` for all sites.
    """

    sys_labels: tuple
    sys_region: tuple | None = None

    def validate(self, model: GrwModel) -> None:
        labels = tuple(self.sys_labels)
        if len(set(labels)) != len(labels):
            raise ModelError("duplicate system labels")
        for i in labels:
            if not 0 <= i < model.n_particles:
                raise ModelError(f"system label {i} out of range")
        if self.sys_region is not None:
            for x in self.sys_region:
                if not 0 <= x < model.sites:
                    raise ModelError(f"system site {x} out of range")

    def env_labels(self, model: GrwModel) -> tuple:
        return tuple(i for i in range(model.n_particles) if i not in self.sys_labels)

    def dims(self, model: GrwModel) -> tuple[int, int]:
        return model.sites ** len(self.sys_labels), model.sites ** (model.n_particles - len(self.sys_labels))

    def permutation(self, model: GrwModel) -> np.ndarray:
        """Index map taking the model's basis order to (sys labels, env labels) order.

        ``psi_split = psi[perm]`` reorders a state; for the identity ordering
        ``perm`` is ``arange(dim)``.
        """
        order = tuple(self.sys_labels) + self.env_labels(model)
        idx = np.arange(model.dim).reshape((model.sites,) * model.n_particles)
        return np.transpose(idx, order).reshape(-1) if model.n_particles else idx.reshape(-1)

    def is_system_flash(self, label, site):
        label = np.asarray(label)
        site = np.asarray(site)
        mask = np.isin(label, np.asarray(self.sys_labels, dtype=np.int64))
        if self.sys_region is not None:
            mask &= np.isin(site, np.asarray(self.sys_region, dtype=np.int64))
        return mask


def separable_part(h: np.ndarray, dims: tuple[int, int]) -> tuple[np.ndarray, np.ndarray, float]:
    """Best approximation ``h_sys⊗I + I⊗h_env`` in Frobenius norm.

    Returns ``(h_sys, h_env, residual)`` with the residual measured in
    operator norm. The trace of ``h`` is assigned entirely to ``h_sys``.
    """
    d_sys, d_env = dims
    t = h.reshape(d_sys, d_env, d_sys, d_env)
    a = np.einsum("ajbj->ab", t) / d_env
    b = np.einsum("iaib->ab", t) / d_sys
    c = np.trace(h) / (d_sys * d_env)
    h_env = b - c * np.eye(d_env)
    h_sys = a
    approx = np.kron(h_sys, np.eye(d_env)) + np.kron(np.eye(d_sys), h_env)
    return h_sys, h_env, op_norm(h - approx)


def _acts_on(diag: np.ndarray, dims: tuple[int, int], factor: str) -> bool:
    d = diag.reshape(dims)
    if factor == "sys":
        return bool(np.allclose(d, d[:, :1], atol=1e-12, rtol=0))
    return bool(np.allclose(d, d[:1, :], atol=1e-12, rtol=0))


def split(model: GrwModel, sp: SystemSplit, atol: float = 1e-10) -> tuple[GrwModel, GrwModel, bool]:
    """Split ``model`` into system and environment models.

    The split is isolated when the Hamiltonian is a sum of system and
    environment parts (within ``atol``) and every system-flash collapse
    operator acts only on the system factor while every other collapse
    operator acts only on the environment factor.
    """
    sp.validate(model)
    dims = sp.dims(model)
    perm = sp.permutation(model)
    h = model.hamiltonian[np.ix_(perm, perm)]
    h_sys, h_env, resid = separable_part(h, dims)
    sys_labels = tuple(sp.sys_labels)
    env_labels = sp.env_labels(model)
    scale = max(1.0, model.hamiltonian_norm)
    isolated = resid <= atol * scale
    if isolated and model.lam > 0:
        fam = model.collapse
        for i in range(model.n_particles):
            for x in range(model.sites):
                d = fam.diagonal(i, x)[perm]
                is_sys = bool(sp.is_system_flash(i, x))
                if not _acts_on(d, dims, "sys" if is_sys else "env"):
                    isolated = False
                    break
            if not isolated:
                break
    m_sys = GrwModel(len(sys_labels), model.sites, model.spacing, model.lam, model.sigma,
                     tuple(model.masses[i] for i in sys_labels), h_sys)
    m_env = GrwModel(len(env_labels), model.sites, model.spacing, model.lam, model.sigma,
                     tuple(model.masses[i] for i in env_labels), h_env)
    return m_sys, m_env, bool(isolated)
