"""
hjb-verify: monotone finite-difference solver and verification suites for
Hamilton-Jacobi-Bellman equations with gradient nonlinearities and unbounded controls.
"""

__version__ = "0.1.0"

from .errors import HJBError
from .grid import Grid, GridFunction
from .problem import AssumptionConstants, ExtendedReal, ProblemSpec, hamiltonian_eval, legendre_power

__all__ = [
    "__version__",
    "AssumptionConstants",
    "ExtendedReal",
    "Grid",
    "GridFunction",
    "HJBError",
    "ProblemSpec",
    "hamiltonian_eval",
    "legendre_power",
]
