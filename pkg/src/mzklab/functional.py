"""Discrete checks of the Poincare/Steklov, Nirenberg-type and sup-norm
inequalities on the rectangle, and their sharp constants."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from typing import Iterator, Literal, Optional

import numpy as np
from scipy.linalg import solve_banded

from .grid import Field, RectGrid, d_x, d_xy, d_y, norm_sq

NIRENBERG_SLACK = 0.05
SUP_SLACK = 0.02
EIG_TOL = 1e-10
EIG_MAX_ITER = 10_000


class NumericalError(RuntimeError):
    def __init__(self, msg: str, residual: float):
        super().__init__(f"{msg} (residual {residual:.3e})")
        self.residual = residual


class DegenerateFieldError(ValueError):
    """Ratio undefined for the zero field."""


@dataclass(frozen=True)
class SharpConstantResult:
    value: float
    resolution: tuple[int, int]
    iterations: int
    residual: float
    direction: str = "y"


@dataclass(frozen=True)
class InequalityCheck:
    lhs: float
    rhs: float
    ratio: float
    holds: bool
    slack: float
    name: str = ""
    resolution: tuple[int, int] = (0, 0)
    seed: Optional[int] = None

    def record(self) -> dict:
        d = asdict(self)
        d["resolution"] = list(self.resolution)
        return d


def _dirichlet_band(n_intervals: int, h: float) -> np.ndarray:
    """-d^2/ds^2 with zero end values, banded storage for solve_banded."""
    m = n_intervals - 1
    ab = np.empty((3, m))
    ab[0] = -1.0 / h**2
    ab[1] = 2.0 / h**2
    ab[2] = -1.0 / h**2
    return ab


def _tridiag_matvec(ab: np.ndarray, v: np.ndarray) -> np.ndarray:
    out = ab[1] * v
    out[:-1] += ab[0, 1:] * v[1:]
    out[1:] += ab[2, :-1] * v[:-1]
    return out


def smallest_dirichlet_eigenvalue(n_intervals: int, length: float,
                                  tol: float = EIG_TOL, max_iter: int = EIG_MAX_ITER
                                  ) -> tuple[float, np.ndarray, int, float]:
    """Inverse power iteration (shift 0) on the 1-D Dirichlet second difference.

    Returns (eigenvalue, interior eigenvector, iterations, relative residual).
    """
    h = length / n_intervals
    ab = _dirichlet_band(n_intervals, h)
    v = np.ones(n_intervals - 1)
    v /= np.linalg.norm(v)
    lam = 0.0
    res = math.inf
    for it in range(1, max_iter + 1):
        w = solve_banded((1, 1), ab, v)
        v = w / np.linalg.norm(w)
        Kv = _tridiag_matvec(ab, v)
        lam = float(v @ Kv)
        res = float(np.linalg.norm(Kv - lam * v) / lam)
        if res < tol:
            return lam, v, it, res
    raise NumericalError(f"inverse iteration did not converge in {max_iter} iterations", res)


def steklov_constant(grid: RectGrid, direction: Literal["x", "y"] = "y") -> SharpConstantResult:
    """Largest ratio int w^2 / int w_d^2 over discrete w vanishing on the edges.

    Tends to 4B^2/pi^2 (direction y) or L^2/pi^2 (direction x).
    """
    if direction == "y":
        n, length = grid.Ny, 2.0 * grid.B
    elif direction == "x":
        n, length = grid.Nx, grid.L
    else:
        raise ValueError(f"direction must be 'x' or 'y', got {direction!r}")
    lam, _, it, res = smallest_dirichlet_eigenvalue(n, length)
    return SharpConstantResult(1.0 / lam, (grid.Nx, grid.Ny), it, res, direction)


def rayleigh_ratio(values: np.ndarray, h: float) -> float:
    """int w^2 / int w'^2 for 1-D nodal values with zero ends (one-sided differences)."""
    w = np.asarray(values, dtype=float)
    num = h * float(np.sum(w[1:-1] ** 2))
    den = float(np.sum(np.diff(w) ** 2)) / h
    return num / den


def c2p(p: int) -> float:
    """C_{2p} = (p! / sqrt(2)^(p-1))^(1/p)."""
    if int(p) != p or p < 1:
        raise ValueError(f"p must be a positive integer, got {p!r}")
    if p > 20:
        raise ValueError("p > 20 not supported")
    p = int(p)
    return (math.factorial(p) / math.sqrt(2.0) ** (p - 1)) ** (1.0 / p)


def _grad_norm(f: Field) -> float:
    return math.sqrt(norm_sq(d_x(f)) + norm_sq(d_y(f)))


def lp_norm(f: Field, q: float) -> float:
    from .grid import quadrature_weights

    return float(np.sum(quadrature_weights(f.grid) * np.abs(f.values) ** q)) ** (1.0 / q)


def check_nirenberg(f: Field, p: int, slack: float = NIRENBERG_SLACK) -> InequalityCheck:
    """||f||_{2p} <= C_{2p} ||grad f||^((p-1)/p) ||f||^(1/p)."""
    l2 = math.sqrt(norm_sq(f))
    if l2 == 0.0:
        raise DegenerateFieldError("zero field: interpolation ratio undefined")
    lhs = lp_norm(f, 2 * p)
    rhs = c2p(p) * _grad_norm(f) ** ((p - 1) / p) * l2 ** (1.0 / p)
    ratio = lhs / rhs
    return InequalityCheck(lhs, rhs, ratio, ratio <= 1.0 + slack, slack,
                           name=f"nirenberg_p{p}", resolution=(f.grid.Nx, f.grid.Ny))


def check_sup_bound(f: Field, slack: float = SUP_SLACK) -> InequalityCheck:
    """max f^2 <= ||f||_{H^1}^2 + ||f_xy||^2."""
    lhs = float(np.max(f.values**2))
    grad2 = norm_sq(d_x(f)) + norm_sq(d_y(f))
    rhs = norm_sq(f) + grad2 + norm_sq(d_xy(f))
    ratio = lhs / rhs if rhs > 0 else 0.0
    return InequalityCheck(lhs, rhs, ratio, ratio <= 1.0 + slack, slack,
                           name="sup_bound", resolution=(f.grid.Nx, f.grid.Ny))


def band_limited_field(grid: RectGrid, rng: np.random.Generator, max_modes: int = 8) -> Field:
    """Random sum of Dirichlet sine modes, at most ``max_modes`` per direction."""
    kx = int(rng.integers(1, max_modes + 1))
    ky = int(rng.integers(1, max_modes + 1))
    coef = rng.standard_normal((kx, ky))
    sx = np.sin(np.outer(np.arange(1, kx + 1), np.pi * grid.x / grid.L))
    sy = np.sin(np.outer(np.arange(1, ky + 1), np.pi * (grid.y + grid.B) / (2 * grid.B)))
    v = sx.T @ coef @ sy
    v[0] = v[-1] = 0.0
    v[:, 0] = v[:, -1] = 0.0
    return Field(grid, v)


def random_fields(grid: RectGrid, count: int, seed: int, max_modes: int = 8
                  ) -> Iterator[tuple[int, Field]]:
    """Yield (sub_seed, field); sub-seeds derive deterministically from ``seed``."""
    for child in np.random.SeedSequence(seed).spawn(count):
        sub = int(child.generate_state(1)[0])
        yield sub, band_limited_field(grid, np.random.default_rng(sub), max_modes)


def randomized_suite(grid: RectGrid, count: int = 1000, seed: int = 0,
                     powers: tuple[int, ...] = (2, 3),
                     nirenberg_slack: float = NIRENBERG_SLACK,
                     sup_slack: float = SUP_SLACK, max_modes: int = 8) -> list[InequalityCheck]:
    """Nirenberg (each p in ``powers``) and sup-bound checks on random fields."""
    out = []
    for sub, f in random_fields(grid, count, seed, max_modes):
        for p in powers:
            c = check_nirenberg(f, p, nirenberg_slack)
            out.append(InequalityCheck(**{**asdict(c), "seed": sub}))
        c = check_sup_bound(f, sup_slack)
        out.append(InequalityCheck(**{**asdict(c), "seed": sub}))
    return out
