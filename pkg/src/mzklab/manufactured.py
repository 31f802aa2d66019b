"""Manufactured solutions: exact u*(x, y, t) and the forcing f = P u*
obtained by symbolic differentiation."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np
import sympy as sp

from .grid import Field, RectGrid

_x, _y, _t = sp.symbols("x y t", real=True)


@dataclass(frozen=True)
class Manufactured:
    exact: Callable[[np.ndarray, np.ndarray, float], np.ndarray]
    forcing: Callable[[np.ndarray, np.ndarray, float], np.ndarray]
    expr: sp.Expr

    def field(self, grid: RectGrid, t: float) -> Field:
        return Field.from_function(grid, lambda X, Y: self.exact(X, Y, t))


def manufactured(L: float, B: float, power: int = 2, expr: sp.Expr | None = None) -> Manufactured:
    """Default u* = exp(-t) sin^2(pi x/L) cos(pi y/(2B)), which satisfies all
    boundary conditions for every t."""
    if expr is None:
        expr = sp.exp(-_t) * sp.sin(sp.pi * _x / L) ** 2 * sp.cos(sp.pi * _y / (2 * B))
    ux = sp.diff(expr, _x)
    f = sp.diff(expr, _t) + ux + sp.diff(expr, _x, 3) + sp.diff(ux, _y, 2)
    if power:
        f = f + expr**power * ux
    exact_fn = sp.lambdify((_x, _y, _t), expr, "numpy")
    forcing_fn = sp.lambdify((_x, _y, _t), sp.simplify(f), "numpy")

    def exact(X, Y, t):
        return np.broadcast_to(exact_fn(X, Y, t), np.shape(X)).astype(float)

    def forcing(X, Y, t):
        return np.broadcast_to(forcing_fn(X, Y, t), np.shape(X)).astype(float)

    return Manufactured(exact, forcing, expr)


@dataclass(frozen=True)
class LadderRow:
    N: int
    h: float
    dt: float
    error: float
    order: float  # against the previous level; nan on the first


def mms_error(N: int, power: int = 2, L: float = 1.0, B: float = 1.0, T: float = 0.5,
              dt_factor: float = 16.0, scheme: str = "imex_cn_ab2",
              mms: Manufactured | None = None) -> tuple[float, float]:
    """Interior max-norm error at time T on an N x N grid, dt = dt_factor*dx^2.

    Returns (error, dt actually used).
    """
    from .solver import SimConfig, solve

    mms = mms or manufactured(L, B, power)
    grid = RectGrid(L, B, N, N)
    dt = min(T, dt_factor * grid.dx**2)
    cfg = SimConfig(L=L, B=B, T=T, Nx=N, Ny=N, dt=dt, nonlinearity_power=power,
                    scheme=scheme, forcing=mms.forcing)
    traj = solve(cfg, mms.field(grid, 0.0), sample_every=10**9)
    err = traj.final.values - mms.field(grid, T).values
    return float(np.max(np.abs(err[1:-1, 1:-1]))), traj.dt


def mms_ladder(levels, power: int = 2, L: float = 1.0, B: float = 1.0, T: float = 0.5,
               dt_factor: float = 16.0, scheme: str = "imex_cn_ab2") -> tuple[list[LadderRow], float]:
    """Errors on each resolution plus the least-squares order of log(err) vs log(h)."""
    levels = sorted(int(n) for n in levels)
    if len(levels) < 3:
        raise ValueError(f"need at least 3 resolution levels, got {len(levels)}")
    mms = manufactured(L, B, power)
    rows: list[LadderRow] = []
    for N in levels:
        err, dt = mms_error(N, power, L, B, T, dt_factor, scheme, mms)
        h = L / N
        order = math.log(rows[-1].error / err) / math.log(rows[-1].h / h) if rows else math.nan
        rows.append(LadderRow(N, h, dt, err, order))
    slope = np.polyfit(np.log([r.h for r in rows]), np.log([r.error for r in rows]), 1)[0]
    return rows, float(slope)
