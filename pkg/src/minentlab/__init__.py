"""Numerical checks for warped-product surgeries, Poincaré series and CAT(0) barycenters."""

from . import cat0, entropy, jacobian, profiles, surgery, warped
from .errors import (Degenerate, Inconclusive, InvalidParameter, InvalidWord, MinentError,
                     NoSolution, NotConverged, OutOfRange, PreconditionFailure)

__version__ = "0.1.0"
