"""Experiments, POVMs and quantum operations: quantum and GRW routes."""
from .compose import compose_experiments, gap_kraus
from .conditional import HistoryEvent, RareEventError, conditional_density_matrix
from .experiment import (Calibration, ConstantCalibration, CountThreshold, CustomCalibration, Experiment,
                         ExperimentError, FirstFlashInRegions, LastFlashRegion, MajorityRegion,
                         NotAdaptedError, NthFlash, PointerCalibration, StoppingRule, sample_outcomes)
from .grw_exact import CostGuardError, GrwLaw, grw_law_exact, grw_povm_exact, grw_superops_exact, poisson_tail
from .povm import (ChoiNotPsdError, KrausMap, Povm, PovmError, choi_kraus, consistency_error,
                   kraus_from_choi, matrix_units, povm_from_kraus, projectivity_error)
from .quantum import quantum_povm, quantum_random_runtime_povm, quantum_superops
from .runtime import flow_law, random_runtime_exact, random_runtime_povm
from .tomography import TomographyResult, grw_povm_mc

__all__ = [name for name in dir() if not name.startswith("_")]
