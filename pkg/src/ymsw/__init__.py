"""Spherically symmetric SU(2) Yang-Mills fields on a Schwarzschild exterior.

The purely magnetic field reduces to one function W(t, r*) obeying
``W_tt - W'' + P W (W^2 - 1) = 0`` with ``P = (1 - 2m/r) / r^2``.
"""

__version__ = "0.1.0"
