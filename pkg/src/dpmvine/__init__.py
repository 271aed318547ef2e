"""Dirichlet-process mixtures of conditional vine copulas."""

from .calibration import CalibrationSpec, ConditionalVine
from .copulas import PairCopula
from .estimator import ConditionalVineDPM
from .margins import BetaMarginals, to_udata
from .sampler import Dataset, DPConfig, PosteriorTrace, predictive_sample, run_chain
from .vine import VineSpec

__version__ = "0.1.0"

__all__ = [
    "BetaMarginals",
    "CalibrationSpec",
    "ConditionalVine",
    "ConditionalVineDPM",
    "DPConfig",
    "Dataset",
    "PairCopula",
    "PosteriorTrace",
    "VineSpec",
    "predictive_sample",
    "run_chain",
    "to_udata",
]
