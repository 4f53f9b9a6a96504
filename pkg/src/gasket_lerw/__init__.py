"""Loop-erased random walks on the pre-Sierpinski gasket.

Exact rational shape laws, conditioned-walk samplers, the
larger-scale-loops-first erasure operator, and the two-type branching
construction of the scaling limit, with a Monte Carlo harness tying them
together.
"""

__version__ = "0.1.0"

from . import eraser, exact, harness, lattice, limit, walker  # noqa: E402,F401
