"""Robust classical shadows: estimation and tomography under adversarial corruption."""

from . import adversary, errors, experiments, moments, quantum_core, robust_stats, shadows, tomography
from .quantum_core import DensityMatrix, Observable, haar_pure_state, haar_unitary
from .shadows import EstimatorKind, collect_shadows, estimate_observables
from .tomography import robust_tomography

__version__ = "0.1.0"

__all__ = [
    "adversary",
    "errors",
    "experiments",
    "moments",
    "quantum_core",
    "robust_stats",
    "shadows",
    "tomography",
    "DensityMatrix",
    "Observable",
    "haar_pure_state",
    "haar_unitary",
    "EstimatorKind",
    "collect_shadows",
    "estimate_observables",
    "robust_tomography",
]
