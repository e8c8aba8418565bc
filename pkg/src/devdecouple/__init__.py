"""Decoupling partitions for developable surfaces, with numerical checks and experiments."""

from . import geometry, norms, partition, synth, verify
from .exceptions import (
    CertificateError,
    ConfigError,
    DegenerateError,
    DomainError,
    ResolutionError,
    SamplingError,
    ScaleError,
    UnassignedFrequencyError,
)
from .norms import decoupling_ratio, decoupling_sweep, exponent_fit, lp_norm, sharpness_sweep
from .partition import Cap, Partition, full_partition
from .synth import TestFunction

__all__ = [
    "geometry",
    "norms",
    "partition",
    "synth",
    "verify",
    "Cap",
    "Partition",
    "TestFunction",
    "full_partition",
    "lp_norm",
    "decoupling_ratio",
    "decoupling_sweep",
    "sharpness_sweep",
    "exponent_fit",
    "CertificateError",
    "ConfigError",
    "DegenerateError",
    "DomainError",
    "ResolutionError",
    "SamplingError",
    "ScaleError",
    "UnassignedFrequencyError",
]

__version__ = "0.1.0"
