"""Matter density and flash readouts of macroscopic regions."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .jump import FlashHistory
from .model import GrwModel, SystemSplit

AMBIGUOUS = "ambiguous"
MASS_ATOL = 1e-9


@dataclass(frozen=True)
class MatterDensityField:
    """Mass per lattice length at each site."""

    values: np.ndarray
    spacing: float = 1.0
    time: float | None = None

    @property
    def total_mass(self) -> float:
        return float(self.spacing * np.sum(self.values))

    def to_rows(self) -> list[tuple[int, float]]:
        return [(int(x), float(v)) for x, v in enumerate(self.values)]


@dataclass(frozen=True)
class MacroPartition:
    """Named disjoint site regions with a dominance threshold ``theta``."""

    regions: Mapping[str, Sequence[int]] = field(default_factory=dict)
    theta: float = 0.9

    def __post_init__(self):
        if not 0.5 < self.theta <= 1.0:
            raise ValueError("theta must lie in (0.5, 1]")
        seen: set = set()
        for name, sites in self.regions.items():
            s = set(int(x) for x in sites)
            if s & seen:
                raise ValueError(f"region {name!r} overlaps another region")
            seen |= s
        if AMBIGUOUS in self.regions:
            raise ValueError(f"{AMBIGUOUS!r} is reserved")

    def names(self) -> list[str]:
        return list(self.regions)

    def _dominant(self, weights: np.ndarray) -> str:
        total = weights.sum()
        if total <= 0:
            return AMBIGUOUS
        for name, w in zip(self.regions, weights):
            if w >= self.theta * total:
                return name
        return AMBIGUOUS


def matter_density(model: GrwModel, psi: np.ndarray, split: SystemSplit | None = None,
                   time: float | None = None) -> MatterDensityField:
    """``m(x) = Σ_i m_i Σ_{q: q_i = x} |ψ(q)|² / a``, over the system labels when ``split`` is given."""
    psi = np.asarray(psi)
    prob = np.abs(psi) ** 2
    n, L = model.n_particles, model.sites
    masses = np.asarray(model.masses, dtype=float)
    labels = range(n) if split is None else split.sys_labels
    marg = prob.reshape((L,) * n) if n else prob
    m = np.zeros(L)
    for i in labels:
        axes = tuple(j for j in range(n) if j != i)
        m += masses[i] * marg.sum(axis=axes)
    return MatterDensityField(m / model.spacing, model.spacing, time)


def matter_density_from_rho(model: GrwModel, rho_sys: np.ndarray, sys_labels: Sequence[int]) -> MatterDensityField:
    """System matter density from the diagonal of a reduced density matrix on ``sys_labels``."""
    k, L = len(sys_labels), model.sites
    masses = np.asarray(model.masses, dtype=float)
    diag = np.real(np.diag(rho_sys)).reshape((L,) * k)
    m = np.zeros(L)
    for j, i in enumerate(sys_labels):
        m += masses[i] * diag.sum(axis=tuple(a for a in range(k) if a != j))
    return MatterDensityField(m / model.spacing, model.spacing)


def macro_state_m(fld: MatterDensityField, partition: MacroPartition) -> str:
    """Region holding at least ``theta`` of the mass covered by the partition, else ``"ambiguous"``."""
    w = np.array([fld.values[list(s)].sum() for s in partition.regions.values()])
    return partition._dominant(w)


def default_readout_window(window: tuple[float, float], fraction: float = 0.1) -> tuple[float, float]:
    """Trailing ``fraction`` of an experiment window."""
    s, t = window
    return (t - fraction * (t - s), t)


def macro_state_f(history: FlashHistory, partition: MacroPartition, readout_window: tuple[float, float] | None = None,
                  labels: Sequence[int] | None = None) -> str:
    """Region holding at least ``theta`` of the flashes in the readout window, else ``"ambiguous"``."""
    rw = readout_window or default_readout_window((history.start, history.end))
    keep = (history.times >= rw[0]) & (history.times < rw[1])
    if labels is not None:
        keep &= np.isin(history.labels, list(labels))
    sites = history.sites[keep]
    w = np.array([np.isin(sites, list(s)).sum() for s in partition.regions.values()], dtype=float)
    return partition._dominant(w)
