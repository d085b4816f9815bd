"""fluctlab: a numerical laboratory for weakly asymmetric exclusion dynamics.

Event-driven simulation with exact path integrals, the spin-product operator
algebra with dense configuration-space oracles, resolvent quadratic forms on
the degree-2 sector, mollified fluctuation fields, and inequality suites tying
them together.
"""

__version__ = "0.1.0"

from .kmc import DynamicsParams, TimeProfile
from .lattice import LatticeState, ObservableSpec

__all__ = ["DynamicsParams", "TimeProfile", "LatticeState", "ObservableSpec", "__version__"]
