"""driftbound: simulation and certificate verification for stochastic
hybrid and randomly switched systems.

The toolkit builds and simulates two-regime hybrid Markov processes,
verifies supermartingale certificates exactly (finite state spaces) or
statistically (Monte Carlo), computes the uniform L1 bound from excursion
decomposition, synthesizes the tightest certificate by optimal stopping,
and empirically validates almost-sure stability, L1 stability, and
input-to-state stability of randomly switched systems, plus squared-radius
diffusion certificates for sampled diffusions.
"""

__version__ = "0.1.0"

from ._backend import active_backend, set_backend, use_backend  # noqa: F401
from .errors import (  # noqa: F401
    CertificateError,
    ConfigError,
    DriftboundError,
    KernelError,
    SimulationError,
)
