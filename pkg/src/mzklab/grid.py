"""Uniform tensor grid on [0, L] x [-B, B] with finite-difference stencils.

Node (i, j) sits at (i*dx, -B + j*dy).  Fields are stored as arrays of shape
(Nx + 1, Ny + 1), first axis x.  Boundary-conformant fields vanish on all
four edges; the extra condition u_x(L, y) = 0 is carried by the stencils
through a reflected ghost node u[Nx + 1] = u[Nx - 1].

Derivative matrices are built once per (N, h) and cached.  The solver reuses
their interior blocks, so the time stepper and the diagnostics see exactly
the same discrete operators.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable, Literal

import numpy as np
import scipy.sparse as sp

MIN_INTERVALS = 8

Weight = Literal["unit", "one_plus_x"]
Edge = Literal["x=0", "x=L"]
TraceQuantity = Literal["f2", "dx2", "dxy2", "dxx2"]


class GridError(ValueError):
    """Raised for invalid grid configuration or mismatched grids."""


@dataclass(frozen=True)
class RectGrid:
    L: float
    B: float
    Nx: int
    Ny: int

    def __post_init__(self):
        if not (0 < self.L < math.inf and 0 < self.B < math.inf):
            raise GridError(f"L and B must be positive and finite, got L={self.L}, B={self.B}")
        for name in ("Nx", "Ny"):
            n = getattr(self, name)
            if int(n) != n or n < MIN_INTERVALS:
                raise GridError(f"{name} must be an integer >= {MIN_INTERVALS}, got {n}")
        object.__setattr__(self, "L", float(self.L))
        object.__setattr__(self, "B", float(self.B))
        object.__setattr__(self, "Nx", int(self.Nx))
        object.__setattr__(self, "Ny", int(self.Ny))

    @property
    def dx(self) -> float:
        return self.L / self.Nx

    @property
    def dy(self) -> float:
        return 2.0 * self.B / self.Ny

    @property
    def shape(self) -> tuple[int, int]:
        return (self.Nx + 1, self.Ny + 1)

    @property
    def x(self) -> np.ndarray:
        return np.arange(self.Nx + 1) * self.dx

    @property
    def y(self) -> np.ndarray:
        return -self.B + np.arange(self.Ny + 1) * self.dy

    def mesh(self) -> tuple[np.ndarray, np.ndarray]:
        return np.meshgrid(self.x, self.y, indexing="ij")

    def refine(self, factor: int = 2) -> "RectGrid":
        return RectGrid(self.L, self.B, self.Nx * factor, self.Ny * factor)


@dataclass(frozen=True, eq=False)
class Field:
    """Scalar nodal values on a grid.  The value array is made read-only.

    With ``conformant=True`` the four edges must be exactly zero.
    """

    grid: RectGrid
    values: np.ndarray
    conformant: bool = field(default=True)

    def __post_init__(self):
        v = np.array(self.values, dtype=float)
        if v.shape != self.grid.shape:
            raise GridError(f"values have shape {v.shape}, grid expects {self.grid.shape}")
        if not np.all(np.isfinite(v)):
            raise ValueError("field contains non-finite values")
        if self.conformant and (
            np.any(v[0, :] != 0) or np.any(v[-1, :] != 0)
            or np.any(v[:, 0] != 0) or np.any(v[:, -1] != 0)
        ):
            raise ValueError("conformant field must vanish exactly on all four edges")
        v.flags.writeable = False
        object.__setattr__(self, "values", v)

    @classmethod
    def zeros(cls, grid: RectGrid) -> "Field":
        return cls(grid, np.zeros(grid.shape))

    @classmethod
    def from_function(cls, grid: RectGrid, func: Callable, conformant: bool = True) -> "Field":
        """Sample ``func(X, Y)``; with ``conformant`` the edges are set to 0."""
        X, Y = grid.mesh()
        v = np.broadcast_to(np.asarray(func(X, Y), dtype=float), grid.shape).copy()
        if conformant:
            v[0, :] = v[-1, :] = 0.0
            v[:, 0] = v[:, -1] = 0.0
        return cls(grid, v, conformant)

    @classmethod
    def from_interior(cls, grid: RectGrid, interior: np.ndarray) -> "Field":
        v = np.zeros(grid.shape)
        v[1:-1, 1:-1] = np.reshape(interior, (grid.Nx - 1, grid.Ny - 1))
        return cls(grid, v)

    def interior(self) -> np.ndarray:
        """Interior values flattened row-major (x index slow)."""
        return self.values[1:-1, 1:-1].ravel()

    def __add__(self, other: "Field") -> "Field":
        _same_grid(self, other)
        return Field(self.grid, self.values + other.values, self.conformant and other.conformant)

    def __sub__(self, other: "Field") -> "Field":
        _same_grid(self, other)
        return Field(self.grid, self.values - other.values, self.conformant and other.conformant)

    def __mul__(self, alpha: float) -> "Field":
        return Field(self.grid, alpha * self.values, self.conformant)

    __rmul__ = __mul__

    def __neg__(self) -> "Field":
        return Field(self.grid, -self.values, self.conformant)


def _same_grid(f: Field, g: Field) -> None:
    if f.grid != g.grid:
        raise GridError("fields live on different grids")


def fd_weights(offsets, order: int) -> np.ndarray:
    """Finite-difference weights for the ``order``-th derivative at offset 0
    (unit spacing), exact on polynomials of degree < len(offsets)."""
    s = np.asarray(offsets, dtype=float)
    V = np.vander(s, len(s), increasing=True).T
    rhs = np.zeros(len(s))
    rhs[order] = math.factorial(order)
    return np.linalg.solve(V, rhs)


# one-sided second-order edge stencils, forward direction (offsets 0, 1, ...)
_FWD1 = fd_weights([0, 1, 2], 1)
_FWD2 = fd_weights([0, 1, 2, 3], 2)
_FWD3 = fd_weights([0, 1, 2, 3, 4], 3)
# third derivative at node 1 from nodes 0..4
_NEAR3 = fd_weights([-1, 0, 1, 2, 3], 3)


def _put(M, row: int, start: int, w) -> None:
    for k, c in enumerate(w):
        M[row, start + k] += c


@lru_cache(maxsize=64)
def x_operators(N: int, h: float) -> dict[str, sp.csr_matrix]:
    """1-D x-direction operators on the N+1 nodes of [0, L].

    d1: one-sided at 0, central inside, zero row at N (u_x(L) = 0).
    d2: one-sided at both ends, central inside.
    d3: one-sided at 0 and at node 1, central inside, ghost reflection at
        node N-1, one-sided backward at N.
    """
    d1 = sp.lil_matrix((N + 1, N + 1))
    d2 = sp.lil_matrix((N + 1, N + 1))
    d3 = sp.lil_matrix((N + 1, N + 1))
    _put(d1, 0, 0, _FWD1 / h)
    _put(d2, 0, 0, _FWD2 / h**2)
    _put(d2, N, N - 3, _FWD2[::-1] / h**2)
    _put(d3, 0, 0, _FWD3 / h**3)
    _put(d3, 1, 0, _NEAR3 / h**3)
    _put(d3, N, N - 4, -_FWD3[::-1] / h**3)
    for i in range(1, N):
        d1[i, i - 1] -= 0.5 / h
        d1[i, i + 1] += 0.5 / h
        _put(d2, i, i - 1, np.array([1.0, -2.0, 1.0]) / h**2)
    c3 = np.array([-1.0, 2.0, 0.0, -2.0, 1.0]) / (2 * h**3)
    for i in range(2, N):
        for k, c in zip(range(i - 2, i + 3), c3):
            if k == N + 1:
                k = N - 1  # ghost: u[N+1] = u[N-1]
            d3[i, k] += c
    return {"d1": d1.tocsr(), "d2": d2.tocsr(), "d3": d3.tocsr()}


@lru_cache(maxsize=64)
def y_operators(N: int, h: float) -> dict[str, sp.csr_matrix]:
    """1-D y-direction operators: central inside, one-sided at both ends."""
    d1 = sp.lil_matrix((N + 1, N + 1))
    d2 = sp.lil_matrix((N + 1, N + 1))
    _put(d1, 0, 0, _FWD1 / h)
    _put(d1, N, N - 2, -_FWD1[::-1] / h)
    _put(d2, 0, 0, _FWD2 / h**2)
    _put(d2, N, N - 3, _FWD2[::-1] / h**2)
    for i in range(1, N):
        d1[i, i - 1] -= 0.5 / h
        d1[i, i + 1] += 0.5 / h
        _put(d2, i, i - 1, np.array([1.0, -2.0, 1.0]) / h**2)
    return {"d1": d1.tocsr(), "d2": d2.tocsr()}


def _ax(grid: RectGrid, name: str, v: np.ndarray) -> np.ndarray:
    return x_operators(grid.Nx, grid.dx)[name] @ v


def _ay(grid: RectGrid, name: str, v: np.ndarray) -> np.ndarray:
    return (y_operators(grid.Ny, grid.dy)[name] @ v.T).T


def _derived(f: Field, v: np.ndarray) -> Field:
    return Field(f.grid, v, conformant=False)


def d_x(f: Field) -> Field:
    return _derived(f, _ax(f.grid, "d1", f.values))


def d_xx(f: Field) -> Field:
    return _derived(f, _ax(f.grid, "d2", f.values))


def d_xxx(f: Field) -> Field:
    return _derived(f, _ax(f.grid, "d3", f.values))


def d_y(f: Field) -> Field:
    return _derived(f, _ay(f.grid, "d1", f.values))


def d_yy(f: Field) -> Field:
    return _derived(f, _ay(f.grid, "d2", f.values))


def d_xy(f: Field) -> Field:
    return _derived(f, _ay(f.grid, "d1", _ax(f.grid, "d1", f.values)))


def d_xyy(f: Field) -> Field:
    return _derived(f, _ax(f.grid, "d1", _ay(f.grid, "d2", f.values)))


def trapezoid_weights(n: int, h: float) -> np.ndarray:
    w = np.full(n + 1, h)
    w[0] = w[-1] = 0.5 * h
    return w


def quadrature_weights(grid: RectGrid, weight: Weight = "unit") -> np.ndarray:
    wx = trapezoid_weights(grid.Nx, grid.dx)
    if weight == "one_plus_x":
        wx = wx * (1.0 + grid.x)
    elif weight != "unit":
        raise ValueError(f"unknown weight {weight!r}")
    return np.outer(wx, trapezoid_weights(grid.Ny, grid.dy))


def inner(f: Field, g: Field, weight: Weight = "unit") -> float:
    """Trapezoidal approximation of the integral of w(x) f g over the rectangle."""
    _same_grid(f, g)
    return float(np.sum(quadrature_weights(f.grid, weight) * f.values * g.values))


def norm_sq(f: Field, weight: Weight = "unit") -> float:
    return inner(f, f, weight)


def edge_profile(f: Field, edge: Edge, quantity: TraceQuantity) -> np.ndarray:
    """Values along the edge of f, d_x f, d_xy f or d_xx f (unsquared).

    Edge x-derivatives use one-sided second-order stencils pointing into the
    domain; the y-derivative along the edge uses the y-operators.
    """
    g = f.grid
    v = f.values
    if edge == "x=0":
        rows, sign = v[:3], 1.0
        rows4 = v[:4]
    elif edge == "x=L":
        rows, sign = v[-1:-4:-1], -1.0
        rows4 = v[-1:-5:-1]
    else:
        raise ValueError(f"unknown edge {edge!r}")
    if quantity == "f2":
        return rows[0].copy()
    if quantity in ("dx2", "dxy2"):
        ux = sign * (_FWD1 @ rows) / g.dx
        if quantity == "dx2":
            return ux
        return y_operators(g.Ny, g.dy)["d1"] @ ux
    if quantity == "dxx2":
        return (_FWD2 @ rows4) / g.dx**2
    raise ValueError(f"unknown trace quantity {quantity!r}")


def trace_integral(f: Field, edge: Edge, quantity: TraceQuantity) -> float:
    """Integral over y in [-B, B] of a squared edge quantity.

    ``quantity`` is one of ``"f2"`` (f^2), ``"dx2"`` ((f_x)^2),
    ``"dxy2"`` ((f_xy)^2) or ``"dxx2"`` ((f_xx)^2).
    """
    prof = edge_profile(f, edge, quantity)
    return float(trapezoid_weights(f.grid.Ny, f.grid.dy) @ prof**2)
