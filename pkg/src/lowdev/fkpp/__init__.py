"""PDE side: Cauchy solves for u, u*, v, traveling waves and cross-checks."""

from .grid import GridError, GridSpec, NumericalError, SpaceTimeField, TestFunction, default_grid
from .solver import compute_uv_triple, g_fields, solve_bbm_cdf, solve_cauchy, solve_coupled

__all__ = [
    "GridError",
    "GridSpec",
    "NumericalError",
    "SpaceTimeField",
    "TestFunction",
    "default_grid",
    "compute_uv_triple",
    "g_fields",
    "solve_bbm_cdf",
    "solve_cauchy",
    "solve_coupled",
]
