"""Dirac-harmonic maps with torsion on the flat periodic 2-torus.

Numerical model of the coupled map/spinor system for a metric connection
with torsion on the target: torsion-tensor algebra and its irreducible
decomposition, curvature of the torsion connection, the twisted Dirac
operator, the energy functional with its Euler-Lagrange residuals, and a
solver for uncoupled solutions (harmonic map + Dirac kernel spinor).
"""

__version__ = "0.1.0"

from .errors import (AmbiguousKernelError, ChartDomainError, ConfigError,
                     DiracmapsError, ModeCompatibilityError,
                     NonConvergenceError, SizeOverflowError,
                     TorsionSkewnessError)
from .scenario import Scenario, load_scenario, parse_scenario
from .solver import SolverConfig, SolverResult, uncoupled_solution

__all__ = [
    "AmbiguousKernelError", "ChartDomainError", "ConfigError",
    "DiracmapsError", "ModeCompatibilityError", "NonConvergenceError",
    "Scenario", "SizeOverflowError", "SolverConfig", "SolverResult",
    "TorsionSkewnessError", "__version__", "load_scenario", "parse_scenario",
    "uncoupled_solution",
]
