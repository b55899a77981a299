"""Critical FK-Ising laboratory on the square lattice.

Builds Dobrushin medial domains, enumerates or samples the random-cluster
loop representation, assembles the interface fermion observable exactly in
Q(zeta_16), verifies its discrete identities, and compares refinements
against a numerically computed continuum reference.
"""

from .exact import Cyclo16

__version__ = "0.1.0"

__all__ = ["Cyclo16", "__version__"]
