"""Exception hierarchy.

Errors split into two families so callers (CLI, service) can map them to
distinct exit codes / HTTP statuses: configuration & contract violations
vs. numerical failures of the solvers.
"""


class UwbError(Exception):
    """Base class for all package errors."""


class ConfigError(UwbError):
    """Invalid configuration, bad units, schema violations."""


class ContractError(UwbError):
    """An operation was called with inputs violating its preconditions."""


class SpectrumRangeError(ContractError):
    """Query outside the sampled spectral domain (extrapolation is forbidden)."""


class GainUndefinedError(ContractError):
    """Net gain requested for a channel launched with zero power."""


class NumericalError(UwbError):
    """Failures of the numerical machinery (integration, BVP, quadrature)."""


class StiffnessError(NumericalError):
    """ODE step size underflowed; includes position and state diagnostics."""

    def __init__(self, message, z=None, min_step=None):
        super().__init__(message)
        self.z = z
        self.min_step = min_step


class BvpError(NumericalError):
    """Boundary-value shooting failed to converge."""

    def __init__(self, message, residual=None, iterations=None):
        super().__init__(message)
        self.residual = residual
        self.iterations = iterations


class QuadratureError(NumericalError):
    """Adaptive quadrature did not reach its target accuracy."""

    def __init__(self, message, achieved_error=None):
        super().__init__(message)
        self.achieved_error = achieved_error


class OptimizationError(NumericalError):
    """The optimizer could not produce a usable result (e.g. all-penalty swarm)."""
