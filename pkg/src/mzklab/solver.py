"""Time integration of u_t + u_x + u^p u_x + u_xxx + u_xyy = f on the rectangle.

The linear part A = d_x + d_xxx + d_xyy is advanced by Crank-Nicolson with a
sparse LU factorization computed once per (grid, dt).  The nonlinear flux is
explicit: second-order Adams-Bashforth after a Heun startup step
(``imex_cn_ab2``), or a two-stage predictor-corrector every step
(``imex_cn_rk2``).

Crank-Nicolson barely damps the stiff boundary modes of d_xxx (|R| -> 1),
so the first ``damped_startup_steps`` steps are each replaced by two
backward-Euler half steps (Rannacher startup).  They share the CN left-hand
matrix, and second order is kept.

Unknowns are the interior nodes only; the Dirichlet edges stay exactly zero
and u_x(L) = 0 lives inside the x-stencils.
"""

from __future__ import annotations

import logging
import math
import struct
from dataclasses import dataclass, field
from functools import lru_cache
from pathlib import Path
from typing import Callable, Literal, Optional

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .grid import Field, RectGrid, d_x, d_xxx, d_xyy, x_operators, y_operators

log = logging.getLogger(__name__)

Scheme = Literal["imex_cn_ab2", "imex_cn_rk2"]
Forcing = Callable[[np.ndarray, np.ndarray, float], np.ndarray]

BLOWUP_THRESHOLD = 1e6


class ConfigError(ValueError):
    """Invalid simulation configuration."""


class NumericalError(RuntimeError):
    """Linear solve failed to reach its tolerance."""


class DivergenceError(RuntimeError):
    """Solution exceeded the blow-up guard."""

    def __init__(self, t: float, max_abs: float):
        super().__init__(f"solution diverged at t={t:.6g} (max|u|={max_abs:.3g})")
        self.t = t
        self.max_abs = max_abs


@dataclass
class SimConfig:
    L: float = 1.0
    B: float = 1.0
    T: float = 1.0
    Nx: int = 64
    Ny: int = 64
    dt: Optional[float] = None  # None: pick from the explicit CFL rule at run time
    nonlinearity_power: int = 2
    scheme: Scheme = "imex_cn_ab2"
    linear_solve_tol: float = 1e-10
    picard_tol: float = 1e-10
    picard_max_iter: int = 50
    damped_startup_steps: int = 2
    forcing: Optional[Forcing] = field(default=None, repr=False)

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        for name in ("L", "B", "T"):
            v = getattr(self, name)
            if not (isinstance(v, (int, float)) and math.isfinite(v) and v > 0):
                raise ConfigError(f"{name} must be a positive number, got {v!r}")
        for name in ("Nx", "Ny"):
            v = getattr(self, name)
            if not isinstance(v, (int, np.integer)) or v < 8:
                raise ConfigError(f"{name} must be an integer >= 8, got {v!r}")
        if self.dt is not None:
            if not (isinstance(self.dt, (int, float)) and self.dt > 0):
                raise ConfigError(f"dt must be positive, got {self.dt!r}")
            if self.dt > self.T:
                raise ConfigError(f"dt={self.dt} exceeds T={self.T}")
        if self.nonlinearity_power not in (0, 1, 2):
            raise ConfigError(f"nonlinearity_power must be 0, 1 or 2, got {self.nonlinearity_power!r}")
        if self.scheme not in ("imex_cn_ab2", "imex_cn_rk2"):
            raise ConfigError(f"unknown scheme {self.scheme!r}")
        for name in ("linear_solve_tol", "picard_tol"):
            if not getattr(self, name) > 0:
                raise ConfigError(f"{name} must be positive")
        if int(self.picard_max_iter) < 1:
            raise ConfigError("picard_max_iter must be >= 1")
        if int(self.damped_startup_steps) < 0:
            raise ConfigError("damped_startup_steps must be >= 0")

    @property
    def grid(self) -> RectGrid:
        return RectGrid(self.L, self.B, self.Nx, self.Ny)

    def resolve_dt(self, u0: Field) -> float:
        """Configured dt, or min(0.25 dx, 0.5 dx / max(1, max|u0|^2))."""
        if self.dt is not None:
            return float(self.dt)
        dx = self.L / self.Nx
        amp2 = float(np.max(np.abs(u0.values))) ** 2
        return min(0.25 * dx, 0.5 * dx / max(1.0, amp2))


# -- operators ---------------------------------------------------------------

@lru_cache(maxsize=16)
def assemble_A(grid: RectGrid) -> sp.csr_matrix:
    """A = d_x + d_xxx + d_xyy restricted to interior unknowns."""
    xo = x_operators(grid.Nx, grid.dx)
    yo = y_operators(grid.Ny, grid.dy)
    d1 = xo["d1"][1:-1, 1:-1]
    d3 = xo["d3"][1:-1, 1:-1]
    dyy = yo["d2"][1:-1, 1:-1]
    iy = sp.identity(grid.Ny - 1, format="csr")
    return (sp.kron(d1 + d3, iy) + sp.kron(d1, dyy)).tocsr()


def apply_A(f: Field) -> Field:
    return d_x(f) + d_xxx(f) + d_xyy(f)


def _central_x(v: np.ndarray, dx: float) -> np.ndarray:
    out = np.zeros_like(v)
    out[1:-1] = (v[2:] - v[:-2]) / (2 * dx)
    return out


def nonlinear_term(v: np.ndarray, power: int, dx: float) -> np.ndarray:
    """u^p u_x in the split form (u^p D u + D u^{p+1}) / (p + 2).

    With the antisymmetric central D this form satisfies sum(u * N(u)) = 0
    exactly, so the explicit flux does not feed the discrete L2 norm.
    Values on the edges are zero.  ``power == 0`` switches the term off.
    """
    if power == 0:
        return np.zeros_like(v)
    out = (v**power * _central_x(v, dx) + _central_x(v ** (power + 1), dx)) / (power + 2)
    out[0] = out[-1] = 0.0
    out[:, 0] = out[:, -1] = 0.0
    return out


def equation_rhs(u: Field, power: int, t: float = 0.0, forcing: Optional[Forcing] = None) -> Field:
    """u_t read off the equation: f - A u - u^p u_x, zero on the edges."""
    v = -(apply_A(u).values + nonlinear_term(u.values, power, u.grid.dx))
    if forcing is not None:
        X, Y = u.grid.mesh()
        v = v + forcing(X, Y, t)
    v[0] = v[-1] = 0.0
    v[:, 0] = v[:, -1] = 0.0
    return Field(u.grid, v)


class CrankNicolson:
    """Factorized (I + dt/2 A) with the explicit half (I - dt/2 A)."""

    def __init__(self, grid: RectGrid, dt: float, tol: float = 1e-10):
        self.grid = grid
        self.dt = float(dt)
        self.tol = tol
        A = assemble_A(grid)
        eye = sp.identity(A.shape[0], format="csr")
        self.lhs = (eye + 0.5 * dt * A).tocsc()
        self.rhs_op = (eye - 0.5 * dt * A).tocsr()
        self._lu = spla.splu(self.lhs)

    def solve(self, b: np.ndarray) -> np.ndarray:
        x = self._lu.solve(b)
        res = np.linalg.norm(self.lhs @ x - b)
        scale = np.linalg.norm(b)
        if not np.isfinite(res) or res > self.tol * max(scale, 1e-300) and res > 1e-300:
            raise NumericalError(f"linear solve residual {res:.3e} exceeds tol {self.tol:g} (|b|={scale:.3e})")
        return x

    def advance(self, u: np.ndarray, extra: Optional[np.ndarray] = None) -> np.ndarray:
        """One CN step for u_t + A u = extra (extra held fixed over the step)."""
        b = self.rhs_op @ u
        if extra is not None:
            b = b + self.dt * extra
        return self.solve(b)


@lru_cache(maxsize=8)
def propagator(grid: RectGrid, dt: float, tol: float = 1e-10) -> CrankNicolson:
    return CrankNicolson(grid, dt, tol)


def _steps_for(t: float, dt: float) -> int:
    n = int(round(t / dt))
    if abs(n * dt - t) > 1e-9 * max(1.0, t):
        raise ConfigError(f"t={t} is not a multiple of dt={dt}")
    return n


def semigroup_apply(u0: Field, t: float, dt: float, tol: float = 1e-10) -> Field:
    """Discrete S(t) u0: t/dt Crank-Nicolson steps of u_t + A u = 0."""
    if t < 0:
        raise ValueError("t must be nonnegative")
    n = _steps_for(t, dt)
    if n == 0:
        return u0
    cn = propagator(u0.grid, float(dt), tol)
    u = u0.interior()
    for _ in range(n):
        u = cn.advance(u)
    return Field.from_interior(u0.grid, u)


# -- IMEX stepping -----------------------------------------------------------

def _interior(v: np.ndarray) -> np.ndarray:
    return v[1:-1, 1:-1].ravel()


class Stepper:
    """Stateful IMEX integrator; keeps the previous explicit flux for AB2."""

    def __init__(self, cfg: SimConfig, grid: RectGrid, dt: float):
        self.cfg = cfg
        self.grid = grid
        self.dt = float(dt)
        self.cn = propagator(grid, self.dt, cfg.linear_solve_tol)
        self._prev_flux: Optional[np.ndarray] = None
        self.steps_taken = 0
        if cfg.forcing is not None:
            self._X, self._Y = grid.mesh()

    def _flux(self, v: np.ndarray, t: float) -> np.ndarray:
        """Explicit right-hand side -N(u) on interior nodes."""
        return -_interior(nonlinear_term(v, self.cfg.nonlinearity_power, self.grid.dx))

    def _forcing(self, t: float) -> np.ndarray:
        f0 = self.cfg.forcing(self._X, self._Y, t)
        f1 = self.cfg.forcing(self._X, self._Y, t + self.dt)
        return 0.5 * (_interior(np.broadcast_to(f0, self.grid.shape))
                      + _interior(np.broadcast_to(f1, self.grid.shape)))

    def _full(self, u: np.ndarray) -> np.ndarray:
        v = np.zeros(self.grid.shape)
        v[1:-1, 1:-1] = u.reshape(self.grid.Nx - 1, self.grid.Ny - 1)
        return v

    def _half_euler(self, v: np.ndarray, t: float) -> np.ndarray:
        h = 0.5 * self.dt
        src = self._flux(v, t)
        if self.cfg.forcing is not None:
            src = src + _interior(np.broadcast_to(self.cfg.forcing(self._X, self._Y, t + h), self.grid.shape))
        return self._full(self.cn.solve(_interior(v) + h * src))

    def advance(self, v: np.ndarray, t: float) -> np.ndarray:
        """Return the full nodal array at t + dt from the one at t."""
        u = _interior(v)
        flux = self._flux(v, t)
        if self.steps_taken < self.cfg.damped_startup_steps:
            out = self._half_euler(self._half_euler(v, t), t + 0.5 * self.dt)
            self._prev_flux = flux
            return self._finish(out, t)
        forcing = self._forcing(t) if self.cfg.forcing is not None else 0.0
        if self.cfg.nonlinearity_power == 0:
            new = self.cn.advance(u, flux + forcing)
        elif self.cfg.scheme == "imex_cn_ab2" and self._prev_flux is not None:
            new = self.cn.advance(u, 1.5 * flux - 0.5 * self._prev_flux + forcing)
        else:
            pred = self.cn.advance(u, flux + forcing)
            flux_pred = self._flux(self._full(pred), t + self.dt)
            new = self.cn.advance(u, 0.5 * (flux + flux_pred) + forcing)
        self._prev_flux = flux
        return self._finish(self._full(new), t)

    def _finish(self, out: np.ndarray, t: float) -> np.ndarray:
        self.steps_taken += 1
        peak = float(np.max(np.abs(out))) if np.all(np.isfinite(out)) else math.inf
        if peak > BLOWUP_THRESHOLD:
            raise DivergenceError(t + self.dt, peak)
        return out


def step(state: Field, t: float, cfg: SimConfig, dt: Optional[float] = None) -> Field:
    """One self-starting IMEX step (predictor-corrector for the flux)."""
    dt = cfg.resolve_dt(state) if dt is None else dt
    stepper = Stepper(cfg, state.grid, dt)
    return Field(state.grid, stepper.advance(state.values, t))


@dataclass
class Trajectory:
    times: list[float] = field(default_factory=list)
    snapshots: list = field(default_factory=list)
    fields: dict[float, Field] = field(default_factory=dict)
    dt: float = 0.0
    report: object = None

    def series(self, name: str) -> np.ndarray:
        return np.array([getattr(s, name) for s in self.snapshots])

    @property
    def final(self) -> Field:
        return self.fields[self.times[-1]]


def solve(cfg: SimConfig, u0: Field, sample_every: int = 1, store_every: Optional[int] = None,
          report=None) -> Trajectory:
    """Integrate to cfg.T, recording an EnergySnapshot every ``sample_every`` steps.

    Fields are kept every ``store_every`` steps (default: at every sample);
    the final field is always kept.  ``report`` is the ConstantsReport used for
    omega(t); it is computed from u0 when omitted.
    """
    from . import constants, diagnostics

    if u0.grid != cfg.grid:
        raise ConfigError("initial field grid does not match the configuration")
    if sample_every < 1:
        raise ConfigError("sample_every must be >= 1")
    store_every = sample_every if store_every is None else store_every
    dt = cfg.resolve_dt(u0)
    if dt > cfg.T:
        raise ConfigError(f"dt={dt} exceeds T={cfg.T}")
    n_steps = int(math.ceil(cfg.T / dt - 1e-9))
    dt = cfg.T / n_steps
    if report is None:
        report = constants.report_for(u0, power=cfg.nonlinearity_power)
    p = cfg.nonlinearity_power

    traj = Trajectory(dt=dt, report=report)
    ut0 = equation_rhs(u0, p, 0.0, cfg.forcing)
    traj.times.append(0.0)
    traj.snapshots.append(diagnostics.snapshot(u0, None, dt, report, t=0.0, ut=ut0, power=p))
    traj.fields[0.0] = u0

    stepper = Stepper(cfg, u0.grid, dt)
    v = u0.values
    for n in range(1, n_steps + 1):
        t_prev = (n - 1) * dt
        v_new = stepper.advance(v, t_prev)
        t = n * dt
        if n % sample_every == 0 or n == n_steps:
            u = Field(u0.grid, v_new)
            traj.times.append(t)
            traj.snapshots.append(
                diagnostics.snapshot(u, Field(u0.grid, v), dt, report, t=t, power=p))
            if n % store_every == 0 or n == n_steps:
                traj.fields[t] = u
        v = v_new
    log.debug("solve: %d steps of dt=%.3g on %s", n_steps, dt, u0.grid)
    return traj


# -- Duhamel / Picard --------------------------------------------------------

@dataclass
class PicardReport:
    iterations: int
    successive_diffs: list[float]
    contraction_factors: list[float]
    converged: bool
    final_radius: float
    dt: float = 0.0


def xt_norm(history: list[np.ndarray], grid: RectGrid, dt: float) -> float:
    """Discrete surrogate of the X_T norm of a time series of nodal arrays.

    sup_t (||w||_{H^1} + ||grad w_y||) + sup_t ||w_t|| + ||grad w_t||_{L^2_t}
    + ||w_xx||_{L^2_t}, with w_t by forward differencing.
    """
    from .grid import quadrature_weights

    q = quadrature_weights(grid)
    xo = x_operators(grid.Nx, grid.dx)
    yo = y_operators(grid.Ny, grid.dy)
    dx1, dx2, dy1 = xo["d1"], xo["d2"], yo["d1"]

    def nsq(a):
        return float(np.sum(q * a * a))

    def gx(a):
        return dx1 @ a

    def gy(a):
        return (dy1 @ a.T).T

    sup_space = 0.0
    sup_t = 0.0
    int_grad_t = 0.0
    int_xx = 0.0
    for k, w in enumerate(history):
        wy = gy(w)
        h1 = math.sqrt(nsq(w) + nsq(gx(w)) + nsq(wy))
        gyy = math.sqrt(nsq(gx(wy)) + nsq(gy(wy)))
        sup_space = max(sup_space, h1 + gyy)
        int_xx += dt * nsq(dx2 @ w)
        if k + 1 < len(history):
            wt = (history[k + 1] - w) / dt
            sup_t = max(sup_t, math.sqrt(nsq(wt)))
            int_grad_t += dt * (nsq(gx(wt)) + nsq(gy(wt)))
    return sup_space + sup_t + math.sqrt(int_grad_t) + math.sqrt(int_xx)


def picard_local(u0: Field, T_loc: float, cfg: SimConfig, dt: Optional[float] = None
                 ) -> tuple[Field, PicardReport]:
    """Fixed point of v -> S(t)u0 - int_0^t S(t-s) N(v(s)) ds on [0, T_loc].

    The Duhamel integral uses the left-endpoint rectangle rule on the step
    grid; S is the discrete Crank-Nicolson semigroup, applied recursively
    (I_k = S(dt)(I_{k-1} + dt N_{k-1})), which equals summing
    semigroup_apply over every past step.
    """
    grid = u0.grid
    dt = cfg.resolve_dt(u0) if dt is None else dt
    n = max(1, int(math.ceil(T_loc / dt - 1e-9)))
    dt = T_loc / n
    cn = propagator(grid, dt, cfg.linear_solve_tol)
    p = cfg.nonlinearity_power
    shape = (grid.Nx - 1, grid.Ny - 1)

    def full(u):
        v = np.zeros(grid.shape)
        v[1:-1, 1:-1] = u.reshape(shape)
        return v

    X = Y = None
    if cfg.forcing is not None:
        X, Y = grid.mesh()

    free = [u0.values]
    u = u0.interior()
    for _ in range(n):
        u = cn.advance(u)
        free.append(full(u))

    def phi(v_hist):
        out = [free[0]]
        acc = np.zeros(shape).ravel()
        for k in range(1, n + 1):
            src = -_interior(nonlinear_term(v_hist[k - 1], p, grid.dx))
            if X is not None:
                src = src + _interior(np.broadcast_to(cfg.forcing(X, Y, (k - 1) * dt), grid.shape))
            acc = cn.advance(acc + dt * src)
            out.append(free[k] + full(acc))
        return out

    current = free
    diffs: list[float] = []
    converged = False
    for _ in range(int(cfg.picard_max_iter)):
        nxt = phi(current)
        d = xt_norm([a - b for a, b in zip(nxt, current)], grid, dt)
        diffs.append(d)
        current = nxt
        if not math.isfinite(d):
            break
        if d <= cfg.picard_tol:
            converged = True
            break
    factors = [diffs[k + 1] / diffs[k] if diffs[k] > 0 else 0.0 for k in range(len(diffs) - 1)]
    report = PicardReport(
        iterations=len(diffs),
        successive_diffs=diffs,
        contraction_factors=factors,
        converged=converged,
        final_radius=xt_norm(current, grid, dt),
        dt=dt,
    )
    return Field(grid, current[-1]), report


# -- initial data ------------------------------------------------------------

def make_initial(kind: str, amplitude: float, grid: RectGrid,
                 func: Optional[Callable[[np.ndarray, np.ndarray], np.ndarray]] = None) -> Field:
    """Smooth data in D(A): zero on all edges with u_x(L, y) = 0.

    product_sine: a sin^2(pi x/L) sin(pi (y+B)/(2B))
    bump:         a (x/L)^2 (1 - x/L)^2 * 16 * cos^2(pi y/(2B)), peak a
    custom:       a * func(X, Y); edges are zeroed
    """
    if not math.isfinite(amplitude):
        raise ValueError("amplitude must be finite")
    L, B = grid.L, grid.B
    if kind == "product_sine":
        def shape(X, Y):
            return np.sin(np.pi * X / L) ** 2 * np.sin(np.pi * (Y + B) / (2 * B))
    elif kind == "bump":
        def shape(X, Y):
            s = X / L
            return 16.0 * s**2 * (1 - s) ** 2 * np.cos(np.pi * Y / (2 * B)) ** 2
    elif kind == "custom":
        if func is None:
            raise ValueError("custom initial data needs func")
        shape = func
    else:
        raise ValueError(f"unknown initial data kind {kind!r}")
    return Field.from_function(grid, lambda X, Y: amplitude * shape(X, Y))


# -- checkpoints -------------------------------------------------------------
#
# Binary layout, little-endian:
#   magic  b"MZKCKPT1"
#   L, B   float64
#   Nx, Ny int64
#   t      float64
#   values float64[(Nx+1)*(Ny+1)], row-major with x the slow index

_MAGIC = b"MZKCKPT1"
_HEADER = struct.Struct("<8sddqqd")


def save_checkpoint(path: str | Path, u: Field, t: float) -> None:
    g = u.grid
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(_MAGIC, g.L, g.B, g.Nx, g.Ny, float(t)))
        fh.write(np.ascontiguousarray(u.values, dtype="<f8").tobytes())


def load_checkpoint(path: str | Path) -> tuple[Field, float]:
    raw = Path(path).read_bytes()
    magic, L, B, Nx, Ny, t = _HEADER.unpack_from(raw)
    if magic != _MAGIC:
        raise ValueError(f"{path}: not a checkpoint file")
    grid = RectGrid(L, B, Nx, Ny)
    vals = np.frombuffer(raw, dtype="<f8", offset=_HEADER.size)
    if vals.size != (Nx + 1) * (Ny + 1):
        raise ValueError(f"{path}: truncated checkpoint")
    v = vals.reshape(grid.shape).copy()
    conformant = not (np.any(v[0]) or np.any(v[-1]) or np.any(v[:, 0]) or np.any(v[:, -1]))
    return Field(grid, v, conformant), t
