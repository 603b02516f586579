"""Numerical laboratory for quasi-norm and resolvent estimates of
second-order elliptic and parabolic operators with rough coefficients.

Module map:

- ``geometry``: balls, space-time cylinders, tensor grids, boundary tags,
  exact clipped-cell quadrature weights;
- ``operators``: coefficient fields (named families, CSV tables), operator
  classes and their validation;
- ``fd``: finite-difference solves of L u = rhs (elliptic/parabolic) and the
  resolvent (mu - L)^{-1}, plus discrete derivative fields;
- ``estimates``: quasi-norms, distribution functions, tail-exponent fits and
  the Hessian/gradient inequality checkers;
- ``closed_forms``: the two exactly solvable model problems;
- ``sde``: Euler-Maruyama exit-time ensembles and occupation functionals;
- ``bellman``: 1-D extremal (Bellman) parabolic solver;
- ``resolvent``: drift splitting, truncation levels, norm estimation and the
  two-regime decay check;
- ``experiments``: named reproducible experiments behind the ``lab`` CLI.
"""

__version__ = "0.1.0"

from .errors import (DegenerateDataError, NumericalError,
                     PolicyIterationError, SingularSystemError,
                     ValidationError)

__all__ = [
    "__version__",
    "ValidationError", "NumericalError", "SingularSystemError",
    "PolicyIterationError", "DegenerateDataError",
]
