"""Numerical laboratory for a nonlocal p-energy in one dimension.

Subpackages by job:

* :mod:`fracp.exponents` — closed-form exponent calculus and windows.
* :mod:`fracp.quadrature` — singularity-aware adaptive quadrature and
  symmetric principal values.
* :mod:`fracp.functionals` — grid functions with exterior models,
  Gagliardo seminorms, tail functionals and their decompositions,
  covering and pointwise inequalities.
* :mod:`fracp.counterexample` — the explicit power-law solution whose
  datum sits exactly on an integrability boundary, with closed-form
  cross-checks at p = 2.
* :mod:`fracp.solver` — variational Dirichlet solver for the nonlocal
  p-energy on an interval, plus coefficient freezing experiments.
* :mod:`fracp.lab` — experiment configs, CSV/JSON reporting, and the
  ``fracp`` command line harness.
"""

from . import counterexample, errors, exponents, functionals, lab, quadrature, solver
from .errors import FracpError

__version__ = "0.1.0"

__all__ = [
    "counterexample",
    "errors",
    "exponents",
    "functionals",
    "lab",
    "quadrature",
    "solver",
    "FracpError",
    "__version__",
]
