"""Numerical laboratory for GRW collapse theory on small lattices."""
from .model import GrwModel, SystemSplit, build_hamiltonian
from .jump import FlashHistory, simulate, simulate_batch, simulate_ensemble
from .master import evolve_density

__version__ = "0.1.0"
__all__ = ["GrwModel", "SystemSplit", "build_hamiltonian", "FlashHistory", "simulate", "simulate_batch",
           "simulate_ensemble", "evolve_density", "__version__"]
