"""Exception hierarchy shared by the library and the CLI."""

from typing import Any, Dict, Optional

CONFIG_EXIT = 2
NUMERICAL_EXIT = 3


class NonrecipError(Exception):
    """Base class for every error raised by nonrecip."""

    exit_code = NUMERICAL_EXIT

    def __init__(self, message: str, **details: Any) -> None:
        super().__init__(message)
        self.message = message
        self.details = details

    def to_dict(self) -> Dict[str, Any]:
        """Machine-readable error envelope."""
        payload: Dict[str, Any] = {
            "status": "error",
            "error": type(self).__name__,
            "message": self.message,
        }
        payload.update(self.details)
        return payload


# ============================================================================
# Configuration and argument errors (exit 2)
# ============================================================================


class ConfigError(NonrecipError):
    """Scenario configuration could not be read or validated."""

    exit_code = CONFIG_EXIT


class InvalidModelError(ConfigError):
    """Lattice or Lindblad model violates its structural invariants."""


class InvalidArgumentError(ConfigError):
    """Argument outside the domain of an operation."""


class InvalidCouplingError(ConfigError):
    """Coupling operator is not local to its subsystem."""


class PreconditionError(ConfigError):
    """Operation precondition (e.g. a resonance condition) does not hold."""


class NoSolutionError(ConfigError):
    """Requested tuning has no real solution."""


# ============================================================================
# Numerical failures (exit 3)
# ============================================================================


class NumericalError(NonrecipError):
    """Base for numerical failures."""

    exit_code = NUMERICAL_EXIT


class NumericalSingularityError(NumericalError):
    """Resolvent is singular to working precision."""

    def __init__(self, message: str, condition_number: float) -> None:
        super().__init__(message, condition_number=condition_number)
        self.condition_number = condition_number


class StepSizeError(NumericalError):
    """Integrator stability guard violated."""

    def __init__(self, message: str, bound: str, value: Optional[float] = None) -> None:
        super().__init__(message, bound=bound, value=value)
        self.bound = bound
        self.value = value


class IntegrationError(NumericalError):
    """Integration drifted outside its accuracy contract."""


class NonUniqueSteadyStateError(NumericalError):
    """Liouvillian null space is not one-dimensional."""


class CutoffTooSmallError(NumericalError):
    """Fock truncation holds too much population on the top level or has not converged."""

    def __init__(self, message: str, top_population: float, **details: Any) -> None:
        super().__init__(message, top_population=top_population, **details)
        self.top_population = top_population


class ReportWriteError(NumericalError):
    """Report files could not be written."""
