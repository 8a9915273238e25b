"""Exception taxonomy shared across the package.

Exit-code mapping used by the CLI: ConfigurationError -> 2, numerical
errors (degeneracy, rejection cap, tolerance) -> 3, I/O -> 4.
"""


class HybridScanError(Exception):
    """Base class for all package-specific errors."""


class ParameterDomainError(HybridScanError, ValueError):
    """A distribution parameter is outside its support."""


class NumericalDegeneracyError(HybridScanError, ArithmeticError):
    """A matrix factorization or variance computation degenerated."""


class RejectionCapError(HybridScanError, RuntimeError):
    """A rejection sampler exceeded its trial cap."""

    def __init__(self, message, trials=None):
        super().__init__(message)
        self.trials = trials


class ConfigurationError(HybridScanError, ValueError):
    """Invalid configuration, or a scan/model combination that is not defined."""


class UnsupportedOperationError(HybridScanError, ValueError):
    """Requested operation has no defined result for these inputs."""


class GridError(HybridScanError, RuntimeError):
    """Quadrature grid too small, leaking mass, or failing its stability check."""


class ChainAbortedError(HybridScanError, RuntimeError):
    """A chain run aborted mid-stream; carries the partial chain."""

    def __init__(self, message, iteration, partial_chain=None):
        super().__init__(message)
        self.iteration = iteration
        self.partial_chain = partial_chain
