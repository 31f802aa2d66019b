"""Energy functionals, multiplier-identity residuals, decay fits and the
pointwise decay bounds of the global theorem."""

from __future__ import annotations

import csv
import math
from dataclasses import astuple, dataclass, fields
from typing import Iterable, Optional, Sequence

import numpy as np

from .constants import ConstantsReport, omega
from .grid import Field, d_x, d_xx, d_xy, d_y, d_yy, norm_sq, quadrature_weights, trace_integral


class FitError(ValueError):
    pass


class SegmentError(ValueError):
    pass


@dataclass(frozen=True)
class EnergySnapshot:
    t: float
    l2_sq: float
    w_l2_sq: float
    grad_sq: float
    ux_sq: float
    uy_sq: float
    grad_uy_sq: float
    ut_sq: float
    w_ut_sq: float
    trace_ux0: float
    trace_uxy0: float
    trace_uxxL: float
    l4_4: float
    omega_t: float
    # extras needed by the bounds and the weighted identity
    uxy_sq: float = 0.0
    uxx_sq: float = 0.0
    nl_work: float = 0.0

    @classmethod
    def columns(cls) -> list[str]:
        return [f.name for f in fields(cls)]


def snapshot(u: Field, u_prev: Optional[Field], dt: float, report: Optional[ConstantsReport],
             t: float = 0.0, ut: Optional[Field] = None, power: int = 2) -> EnergySnapshot:
    """All energy quantities of u at time t.

    u_t is (u - u_prev)/dt unless ``ut`` is given (e.g. read off the
    equation at t = 0).  ``nl_work`` is the nonlinear source of the weighted
    identity, 2/(p+2) int u^(p+2), zero for the linear problem.
    """
    if ut is None:
        if u_prev is None:
            raise ValueError("need u_prev or ut")
        if dt <= 0:
            raise ValueError("dt must be positive")
        ut_vals = (u.values - u_prev.values) / dt
    else:
        ut_vals = ut.values
    g = u.grid
    q = quadrature_weights(g)
    qw = quadrature_weights(g, "one_plus_x")
    v = u.values
    ux, uy = d_x(u), d_y(u)
    uxy = d_xy(u)
    uyy = d_yy(u)
    l2 = float(np.sum(q * v * v))
    ux2 = norm_sq(ux)
    uy2 = norm_sq(uy)
    uxy2 = norm_sq(uxy)
    ut2 = float(np.sum(q * ut_vals**2))
    nl = 2.0 / (power + 2) * float(np.sum(q * v ** (power + 2))) if power else 0.0
    om = omega(l2, ut2, report) if report is not None else math.nan
    return EnergySnapshot(
        t=float(t),
        l2_sq=l2,
        w_l2_sq=float(np.sum(qw * v * v)),
        grad_sq=ux2 + uy2,
        ux_sq=ux2,
        uy_sq=uy2,
        grad_uy_sq=uxy2 + norm_sq(uyy),
        ut_sq=ut2,
        w_ut_sq=float(np.sum(qw * ut_vals**2)),
        trace_ux0=trace_integral(u, "x=0", "dx2"),
        trace_uxy0=trace_integral(u, "x=0", "dxy2"),
        trace_uxxL=trace_integral(u, "x=L", "dxx2"),
        l4_4=float(np.sum(q * v**4)),
        omega_t=om,
        uxy_sq=uxy2,
        uxx_sq=norm_sq(d_xx(u)),
        nl_work=nl,
    )


def _snapshots(segment) -> list[EnergySnapshot]:
    snaps = getattr(segment, "snapshots", segment)
    return list(snaps)


def _ddt(snaps: Sequence[EnergySnapshot], name: str) -> tuple[np.ndarray, np.ndarray]:
    t = np.array([s.t for s in snaps])
    if np.any(np.diff(t) <= 0):
        raise SegmentError("snapshot times must be strictly increasing")
    vals = np.array([getattr(s, name) for s in snaps])
    return t, np.gradient(vals, t, edge_order=2)


def _max_relative(residual: np.ndarray, scales: np.ndarray) -> float:
    # scales already >= |each term|; zero scale means a zero state
    rel = np.divide(np.abs(residual), scales, out=np.zeros_like(residual), where=scales > 0)
    return float(np.max(rel)) if rel.size else 0.0


ENERGY_FLOOR = 1e-10


def _mask(snaps: Sequence[EnergySnapshot], window, floor: float) -> np.ndarray:
    """Interior samples inside ``window`` whose energy is above ``floor``
    times the segment peak.  Below the floor the state is dominated by
    round-off and residual stiff modes, so relative residuals lose meaning."""
    t = np.array([s.t for s in snaps])
    E = np.array([s.l2_sq for s in snaps])
    keep = np.zeros(len(snaps), dtype=bool)
    keep[1:-1] = True
    if window is not None:
        keep &= (t >= window[0]) & (t <= window[1])
    if E.max() > 0:
        keep &= E > floor * E.max()
    return keep


def identity_residual_l2(segment, window: Optional[tuple[float, float]] = None,
                         floor: float = ENERGY_FLOOR) -> float:
    """Max of |d/dt ||u||^2 + int u_x^2(0, y) dy| relative to the larger of the
    two terms, over interior samples (centered differences in time).

    ``window`` restricts the samples considered; the differences still use
    the neighbours outside it.
    """
    snaps = _snapshots(segment)
    if len(snaps) < 3:
        raise SegmentError("need at least 3 consecutive snapshots")
    _, dE = _ddt(snaps, "l2_sq")
    tr = np.array([s.trace_ux0 for s in snaps])
    keep = _mask(snaps, window, floor)
    res = (dE + tr)[keep]
    scale = np.maximum(np.abs(dE), np.abs(tr))[keep]
    return _max_relative(res, scale)


def identity_residual_weighted(segment, window: Optional[tuple[float, float]] = None,
                               floor: float = ENERGY_FLOOR) -> float:
    """Residual of the (1+x)-weighted energy identity

        d/dt (1+x, u^2) + int u_x^2(0) + ||grad u||^2 + 2||u_x||^2 - ||u||^2
            = 2/(p+2) int u^(p+2)

    relative to the largest term; samples selected as in identity_residual_l2.
    """
    snaps = _snapshots(segment)
    if len(snaps) < 3:
        raise SegmentError("need at least 3 consecutive snapshots")
    _, dW = _ddt(snaps, "w_l2_sq")
    terms = np.array([[s.trace_ux0, s.grad_sq + 2 * s.ux_sq, -s.l2_sq, -s.nl_work] for s in snaps])
    keep = _mask(snaps, window, floor)
    res = (dW + terms.sum(axis=1))[keep]
    scale = np.max(np.abs(np.column_stack([dW, terms])), axis=1)[keep]
    return _max_relative(res, scale)


@dataclass(frozen=True)
class DecayFit:
    gamma_fit: float
    window: tuple[float, float]
    r_squared: float
    intercept: float = 0.0


def fit_decay(times: Iterable[float], values: Iterable[float],
              window: Optional[tuple[float, float]] = None) -> DecayFit:
    """Least-squares fit of log(value) = c - gamma t on samples inside ``window``.

    The default window is (0.1 T, 0.9 T) with T the last sample time.
    """
    t = np.asarray(list(times), dtype=float)
    v = np.asarray(list(values), dtype=float)
    if window is None:
        window = (0.1 * t[-1], 0.9 * t[-1])
    t1, t2 = window
    if not t1 < t2:
        raise FitError(f"empty window {window}")
    mask = (t >= t1) & (t <= t2)
    if mask.sum() < 2:
        raise FitError("fewer than two samples in the fit window")
    if np.any(v[mask] <= 0):
        raise FitError("nonpositive values inside the fit window")
    tt, lv = t[mask], np.log(v[mask])
    slope, intercept = np.polyfit(tt, lv, 1)
    fitted = intercept + slope * tt
    ss_res = float(np.sum((lv - fitted) ** 2))
    ss_tot = float(np.sum((lv - lv.mean()) ** 2))
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else 1.0
    return DecayFit(float(-slope), (float(t1), float(t2)), float(min(1.0, max(0.0, r2))), float(intercept))


@dataclass(frozen=True)
class BoundCheck:
    name: str
    holds: bool
    margin: float
    hypotheses_met: bool = True

    def record(self) -> dict:
        m = self.margin
        return {"name": self.name, "holds": self.holds,
                "margin": m if math.isfinite(m) else None,
                "hypotheses_met": self.hypotheses_met}


def _margin(lhs: np.ndarray, rhs: np.ndarray) -> float:
    with np.errstate(divide="ignore", invalid="ignore"):
        m = np.where(rhs > 0, (rhs - lhs) / rhs, np.where(lhs <= 0, 1.0, -np.inf))
    m = np.where(np.isnan(rhs) | np.isnan(lhs), np.nan, m)
    if np.any(np.isnan(m)):
        return math.nan
    return float(np.min(m))


def bound_series(trajectory, report: ConstantsReport) -> dict[str, tuple[np.ndarray, np.ndarray]]:
    """(lhs(t), rhs(t)) for each decay bound, at every snapshot."""
    snaps = _snapshots(trajectory)
    t = np.array([s.t for s in snaps])
    col = {name: np.array([getattr(s, name) for s in snaps]) for name in EnergySnapshot.columns()}
    l = 1.0 + report.L
    e0 = np.exp(-report.gamma0 * t)
    e1 = np.exp(-report.gamma1 * t)
    e2 = np.exp(-report.gamma2 * t)
    K1, K2, K4, Cu = report.K1, report.K2, report.K4, report.C_u0
    return {
        "l2_nonincreasing": (col["l2_sq"], np.full_like(t, col["l2_sq"][0])),
        "weighted_l2_decay": (col["w_l2_sq"], e0 * col["w_l2_sq"][0]),
        "ut_decay": (col["ut_sq"], l * report.ut0_l2_sq * e1),
        "grad_decay": (col["grad_sq"], Cu * l * K1 * e2),
        "grad_uy_decay": (0.5 * col["grad_uy_sq"] + 2 * col["uxy_sq"] + col["trace_uxy0"], K2 * e2),
        "trace_ux0_decay": (col["trace_ux0"], 2 * l**3 * K1 * e2),
        "trace_uxy0_decay": (col["trace_uxy0"], K2 * e2),
        "trace_uxxL_decay": (col["trace_uxxL"], K4 * e2),
    }


def check_decay_bounds(trajectory, report: ConstantsReport) -> list[BoundCheck]:
    """Evaluate every bound at every sampled time.

    margin = min over t of (rhs - lhs)/rhs; a bound holds when margin >= 0.
    Bounds are still evaluated for inadmissible data but carry
    ``hypotheses_met=False``.
    """
    out = []
    for name, (lhs, rhs) in bound_series(trajectory, report).items():
        m = _margin(lhs, rhs)
        out.append(BoundCheck(name, bool(m >= 0), m, report.admissible))
    return out


def write_snapshots_csv(path, snapshots: Iterable[EnergySnapshot]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(EnergySnapshot.columns())
        for s in snapshots:
            w.writerow([repr(float(x)) for x in astuple(s)])


def read_snapshots_csv(path) -> list[EnergySnapshot]:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    header, body = rows[0], rows[1:]
    if header != EnergySnapshot.columns():
        raise ValueError(f"{path}: unexpected header {header}")
    return [EnergySnapshot(*map(float, r)) for r in body]
