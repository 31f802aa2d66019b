"""Numerical laboratory for the modified Zakharov-Kuznetsov equation
u_t + u_x + u^2 u_x + u_xxx + u_xyy = 0 on a rectangle."""

from .grid import Field, RectGrid

__all__ = ["Field", "RectGrid"]
__version__ = "0.1.0"
