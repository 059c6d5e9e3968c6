"""Numerical laboratory for the integrable fifth-order Camassa-Holm-type equation.

The evolution equation is ``m_t = -m_x v - 2 m v_x`` with ``v = (1 - d^2) u`` and
``m = (1 - d^2)^2 u``, embedded in the ``(2n+1)``-order family built from the
operators ``A_2n``, ``B_2n`` and ``C_2n``.
"""

from chtype.operators import Field, GridSpec, OperatorKind, make_grid

__version__ = "0.1.0"

__all__ = ["Field", "GridSpec", "OperatorKind", "make_grid", "__version__"]
