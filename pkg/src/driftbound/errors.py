"""Exception types shared across the package."""


class DriftboundError(Exception):
    """Base class for all package-specific errors."""


class ConfigError(DriftboundError):
    """Invalid configuration document or component reference."""


class KernelError(DriftboundError):
    """Invalid transition kernel, state, or time index."""


class CertificateError(DriftboundError):
    """Certificate construction or constant computation failed."""


class SimulationError(DriftboundError):
    """Runtime simulation failure (overflow, horizon exceeded)."""
