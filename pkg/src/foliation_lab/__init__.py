"""Numerical laboratory for foliations defined by the components of a smooth map.

Submodules: ``expr`` (expression language), ``maps``, ``fields`` (cofactor
fields and their identities), ``flow`` (integral curves), ``fibers``,
``solvability``, ``reeb`` (planar half-Reeb components), ``regions``
(parametric exhaustions and the integral obstruction), ``injectivity``,
``gallery``, ``svg`` and ``cli``.
"""

from .expr import Expr, ParseError, parse, to_text
from .fields import cofactor_field, hamiltonian_field, jacobian
from .maps import SmoothMap

__version__ = "0.1.0"

__all__ = ["Expr", "ParseError", "parse", "to_text", "SmoothMap", "jacobian", "cofactor_field",
           "hamiltonian_field", "__version__"]
