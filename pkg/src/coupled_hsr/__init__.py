"""Hyperspectral super-resolution by coupled Tucker and CP tensor models."""

from .degradation import DegradationSet, Sensor, SensorSpec, add_noise, degrade, make_degradation
from .fusion_cp import StereoConfig, cp_als, fit_cp, hybrid, scuba, stereo, tenrec
from .fusion_tucker import BlockGrid, ScottConfig, ScottResult, blind_scott, bscott, scott
from .linalg import SingularOperator, SpectrumReport, SylvesterSystem, hosvd, kron_sum_spectrum, solve_sylvester, tsvd
from .metrics import MetricsReport, cc, ergas, evaluate, r_snr, sam
from .recoverability import RegionLabel, check_cp_partial_uniqueness, check_deterministic, classify_generic
from .tensor_core import CPModel, TuckerModel, fold, multilinear_product, unfold

__version__ = "0.1.0"

__all__ = [
    "add_noise",
    "blind_scott",
    "BlockGrid",
    "bscott",
    "cc",
    "check_cp_partial_uniqueness",
    "check_deterministic",
    "classify_generic",
    "cp_als",
    "CPModel",
    "DegradationSet",
    "degrade",
    "ergas",
    "evaluate",
    "fit_cp",
    "fold",
    "hosvd",
    "hybrid",
    "kron_sum_spectrum",
    "make_degradation",
    "MetricsReport",
    "multilinear_product",
    "r_snr",
    "RegionLabel",
    "sam",
    "scott",
    "ScottConfig",
    "ScottResult",
    "scuba",
    "Sensor",
    "SensorSpec",
    "SingularOperator",
    "solve_sylvester",
    "SpectrumReport",
    "stereo",
    "StereoConfig",
    "SylvesterSystem",
    "tenrec",
    "tsvd",
    "TuckerModel",
    "unfold",
]
