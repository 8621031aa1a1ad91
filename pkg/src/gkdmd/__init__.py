"""Generalized kernel-based dynamic mode decomposition.

Learns the optimal rank-``k`` linear operator on a reproducing kernel
Hilbert space from snapshot pairs using kernel evaluations only, and
predicts future states through kernel eigenfunctions and a preimage solve.
"""

from .errors import GKDMDError, InputError, MetricError, ModelError, ModelIOError, NumericError
from .kernels import GaussianKernel, Kernel, LinearKernel, PolynomialKernel, parse_kernel
from .model import ReducedModel, SnapshotPairs, fit, load, save
from .predict import PreimageConfig, eigenfunctions, predict, predict_path

__version__ = "0.1.0"

__all__ = [
    "GKDMDError",
    "InputError",
    "MetricError",
    "ModelError",
    "ModelIOError",
    "NumericError",
    "Kernel",
    "GaussianKernel",
    "PolynomialKernel",
    "LinearKernel",
    "parse_kernel",
    "SnapshotPairs",
    "ReducedModel",
    "fit",
    "save",
    "load",
    "PreimageConfig",
    "eigenfunctions",
    "predict",
    "predict_path",
]
