"""Exception hierarchy for the solver and harness."""


class VdnsError(Exception):
    """Base class for all package errors."""


class ParameterError(VdnsError, ValueError):
    """An argument is outside its documented domain."""


class GridMismatchError(VdnsError, ValueError):
    """Fields on different grids were combined."""


class SymmetryError(VdnsError, ValueError):
    """Spectral coefficients violate Hermitian symmetry."""


class CflError(VdnsError, RuntimeError):
    """A transport or momentum step was rejected by the CFL check.

    Carries the largest admissible time step for the offending state.
    """

    def __init__(self, message, admissible_dt):
        super().__init__(message)
        self.admissible_dt = admissible_dt


class SolverConvergenceError(VdnsError, RuntimeError):
    """An iterative solve exhausted its iteration budget.

    Carries the relative residual history for post-mortem inspection.
    """

    def __init__(self, message, residuals):
        super().__init__(message)
        self.residuals = list(residuals)


class UndefinedRatioError(VdnsError, ArithmeticError):
    """A ratio monitor was requested for an identically zero field."""


class InitSpecError(VdnsError, ValueError):
    """An initial-data specification is invalid or unreachable."""


class ConfigError(VdnsError, ValueError):
    """A run configuration failed validation."""


class CheckpointFormatError(VdnsError, ValueError):
    """A checkpoint file is structurally inconsistent."""
