"""Exception hierarchy shared by the solver and the command line."""


class PNPError(Exception):
    """Base class for all package errors."""


class DomainError(PNPError, ValueError):
    """A concentration argument is not strictly positive."""


class CompatibilityError(PNPError, ValueError):
    """Pure-Neumann data carrying a nonzero total charge."""


class UnsupportedConfiguration(PNPError, ValueError):
    """Operation only defined for pure-Neumann potentials."""


class ConfigError(PNPError, ValueError):
    """Invalid experiment configuration; ``key`` names the offending entry."""

    def __init__(self, key, message):
        super().__init__(f"{key}: {message}")
        self.key = key


class FitError(PNPError, ValueError):
    """Exponential fit impossible (too few or nonpositive samples)."""


class SolverError(PNPError, RuntimeError):
    """Nonlinear or linear solver failed to converge.

    Carries the last residual norm and the residual history so callers can
    report why a step was rejected.
    """

    def __init__(self, message, residual=None, history=None, iterations=None):
        super().__init__(message)
        self.residual = residual
        self.history = list(history) if history is not None else []
        self.iterations = iterations
        self.last_state = None


class InvariantViolation(PNPError, RuntimeError):
    """An asserted structural property (mass, positivity, entropy) failed."""
