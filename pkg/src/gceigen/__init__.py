"""Eigenvalue problems for fully nonlinear elliptic equations with convex gradient constraints.

The package computes pairs ``(lam, u)`` solving
``max{lam + F(D^2u) - f(x), H(Du)} = 0`` on ``R^n`` by finite differences,
a penalized Newton solver and a vanishing-discount limit, together with
an ODE oracle for rotational problems and test-function bounds.
"""

__version__ = "0.1.0"

from .geometry import ConstraintH, SupportFunction, inf_convolve
from .grid import Field, Grid, pde_residual
from .problems import CostF, OperatorF, ProblemSpec, builtin, validate
from .penalty import SolverParams, solve_discounted
from .eigen import EigenPair, degenerate_eigen, solve_eigen, vanishing_discount
from .radial import RadialProblem, smooth_fit_solve

__all__ = [
    "ConstraintH", "SupportFunction", "inf_convolve", "Field", "Grid", "pde_residual",
    "CostF", "OperatorF", "ProblemSpec", "builtin", "validate", "SolverParams",
    "solve_discounted", "EigenPair", "degenerate_eigen", "solve_eigen", "vanishing_discount",
    "RadialProblem", "smooth_fit_solve",
]
