"""Exception types raised across the package."""


class DomainError(ValueError):
    """Input lies outside the domain where an operation is defined."""


class DegenerateError(ValueError):
    """Geometry degenerates (zero curvature, zero speed, ...)."""


class ScaleError(ValueError):
    """Requested annulus index violates ``2**-k >= delta**(1/3)``."""


class SamplingError(RuntimeError):
    """A sampling scan left some cap without samples."""


class CertificateError(RuntimeError):
    """No enlargement factor up to the search limit certifies flatness."""


class ResolutionError(ValueError):
    """Grid resolution is below the aliasing-free threshold."""


class UnassignedFrequencyError(ValueError):
    """A frequency of a test function belongs to no cap of the partition."""


class ConfigError(ValueError):
    """Experiment configuration is malformed or out of range."""
