"""Variable-density incompressible Navier-Stokes on a periodic torus.

The solver permits vacuum (regions of zero density) and ships a
diagnostics engine for the scale-invariant norms and decay laws that
govern the small-data regime.
"""

__version__ = "0.1.0"

from .errors import (
    CflError,
    CheckpointFormatError,
    ConfigError,
    GridMismatchError,
    InitSpecError,
    ParameterError,
    SolverConvergenceError,
    SymmetryError,
    UndefinedRatioError,
    VdnsError,
)
from .fields import (
    ScalarField,
    SpectralField,
    TorusGrid,
    VectorField,
    dealias,
    div,
    fft_forward,
    fft_inverse,
    grad,
    hs_norm,
    l2_norm,
    laplacian,
    lp_norm,
    weak_lorentz_norm,
)

__all__ = [
    "TorusGrid",
    "ScalarField",
    "VectorField",
    "SpectralField",
    "fft_forward",
    "fft_inverse",
    "grad",
    "div",
    "laplacian",
    "dealias",
    "hs_norm",
    "lp_norm",
    "l2_norm",
    "weak_lorentz_norm",
    "VdnsError",
    "ParameterError",
    "GridMismatchError",
    "SymmetryError",
    "CflError",
    "SolverConvergenceError",
    "UndefinedRatioError",
    "InitSpecError",
    "ConfigError",
    "CheckpointFormatError",
]
