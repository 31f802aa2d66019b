"""Explicit constants, smallness conditions and decay rates of the global
decay theorem, evaluated for a domain (L, B) and initial datum u0.

Notation follows the estimates: ``n`` is ||u0||^2, ``Cu`` is C_{||u0||},
``l`` is 1 + L.  Interpolation constants come from ``functional.c2p``:
C_Omega = c2p(2) for the L^4 bounds, C_Omega8 = C_N8 = c2p(4) and
C_N10 = c2p(5).
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass
from typing import Literal


from .functional import c2p
from .grid import Field, d_x, d_xxx, d_xyy, norm_sq

PI2 = math.pi**2

A2Variant = Literal["theorem", "estimate"]


class InadmissibleDomainError(ValueError):
    """A^2 <= 0: the domain is too large for the decay theorem."""


class PreconditionError(ValueError):
    """||u0||^2 >= 1/2, where C_{||u0||} changes sign."""


def compute_A2(L: float, B: float, variant: A2Variant = "theorem") -> float:
    """A^2 = (pi^2/2)(3/L^2 + 1/(4B^2)) - 1.

    ``variant="estimate"`` gives the value used inside the weighted L2
    estimate, 2A^2 = pi^2 (3/L^2 + 1/(4B^2)) - 1.
    """
    bracket = 3.0 / L**2 + 1.0 / (4.0 * B**2)
    if variant == "theorem":
        return 0.5 * PI2 * bracket - 1.0
    if variant == "estimate":
        return 0.5 * (PI2 * bracket - 1.0)
    raise ValueError(f"unknown A^2 variant {variant!r}")


def _steklov_sum(L: float, B: float) -> float:
    return 1.0 / L**2 + 1.0 / (4.0 * B**2)


def smallness_threshold(L: float, B: float, variant: A2Variant = "theorem") -> float:
    A2 = compute_A2(L, B, variant)
    if A2 <= 0:
        raise InadmissibleDomainError(f"A^2 = {A2:.6g} <= 0 for L={L}, B={B}")
    return A2 / (2.0 * PI2 * _steklov_sum(L, B))


def compute_I0(u0: Field, power: int = 2) -> float:
    """I0^2 = ||u0_x + lap u0_x + u0^p u0_x||^2 on the grid."""
    ux = d_x(u0)
    v = ux.values + d_xxx(u0).values + d_xyy(u0).values
    if power:
        v = v + u0.values**power * ux.values
    return norm_sq(Field(u0.grid, v, conformant=False))


def _c_u0(L: float, n: float) -> float:
    return 2.0 * (1.0 + L) ** 2 / (1.0 - 2.0 * n)


def condition_51(L: float, n: float, I0_sq: float) -> tuple[float, float]:
    """Left and right sides of the main smallness condition."""
    if n >= 0.5:
        raise PreconditionError(f"||u0||^2 = {n:.6g} >= 1/2")
    l = 1.0 + L
    q = I0_sq + n
    first = 2.0 * l**2 / (1.0 - 2.0 * n) * n * q
    second = 16.0 + 6**3 * math.factorial(4) ** 2 * l**8 / (1.0 - 2.0 * n) ** 2 * q**2
    return first * second, 2.0 * PI2 / L**2 - 1.0


def check_condition_51(u0: Field, power: int = 2) -> tuple[float, float, bool]:
    n = norm_sq(u0)
    lhs, rhs = condition_51(u0.grid.L, n, compute_I0(u0, power))
    return lhs, rhs, lhs < rhs


def condition_530(L: float, B: float, n: float) -> tuple[float, float]:
    """Alternative smallness condition making dz/dt(0) negative."""
    Cu = _c_u0(L, n)
    C1 = c1_constant(L)
    lhs = Cu * n**2 * (16.0 + C1 * Cu**2 * n**2)
    rhs = (0.5 * PI2 * (5.0 / L**2 + 1.0 / (4.0 * B**2)) - 1.0) / (1.0 + L)
    return lhs, rhs


def decay_rates(L: float, B: float, variant: A2Variant = "theorem") -> tuple[float, float, float]:
    A2 = compute_A2(L, B, variant)
    if A2 <= 0:
        raise InadmissibleDomainError(f"A^2 = {A2:.6g} <= 0 for L={L}, B={B}")
    g0 = A2 / (1.0 + L)
    g1 = PI2 / (2.0 * (1.0 + L)) * _steklov_sum(L, B)
    return g0, g1, min(g0, g1)


def c1_constant(L: float) -> float:
    return 2.0 * 3**3 * math.factorial(4) ** 2 * (1.0 + L) ** 4


def c2_constant(L: float) -> float:
    return 2.0 * 3**6 * c2p(4) ** 8 * (1.0 + L) ** 4


@dataclass
class ConstantsReport:
    L: float
    B: float
    A2: float
    smallness_threshold: float
    u0_l2_sq: float
    I0_sq: float
    ut0_l2_sq: float
    condition_51_lhs: float
    condition_51_rhs: float
    condition_530_lhs: float
    condition_530_rhs: float
    C_u0: float
    C1: float
    C2: float
    gamma0: float
    gamma1: float
    gamma2: float
    K1: float
    K2: float
    K3: float
    K4: float
    K5: float
    p1: float
    p2: float
    p3: float
    p4: float
    admissible: bool
    a2_variant: str = "theorem"
    hypotheses_failed: tuple = ()

    def to_dict(self) -> dict:
        d = asdict(self)
        d["hypotheses_failed"] = list(self.hypotheses_failed)
        # NaN is not valid JSON; undefined constants become null
        return {k: (None if isinstance(v, float) and not math.isfinite(v) else v) for k, v in d.items()}

    def to_json(self, **kw) -> str:
        return json.dumps(self.to_dict(), **kw)


def _k_values(L: float, n: float, ut0: float, Cu: float) -> dict:
    l = 1.0 + L
    C1 = c1_constant(L)
    C2 = c2_constant(L)
    C_Om4 = c2p(2) ** 4
    C_N10 = c2p(5) ** 10
    K1 = max(ut0, n)
    K2 = (3 * l**2 + 1) * l * K1 + Cu**2 * l**2 * K1**2 * n * (4 * C_Om4 + C2 * Cu**2 * l**2 * K1**2)
    K3 = (6 * C_N10 * n * Cu**4 * l**4 * K1**4 + 2 * Cu * l * K1 + K2) * 2 * l**3 * K1
    # (1+L)K1(8/L + L + 4(1+L)^2/L^2 + K2/((1+L)K1)) + K3, with the quotient
    # multiplied out so that K1 = 0 is harmless
    K4 = l * K1 * (8.0 / L + L + 4 * l**2 / L**2) + K2 + K3
    K5 = (6 * l**3 * K1 + K2 + l * K4 + 2 * l**2 * K1 + l**2 * K3
          + 4 * l**2 * K1 * (l * n + Cu * l * K1 + K2))
    return dict(C1=C1, C2=C2, K1=K1, K2=K2, K3=K3, K4=K4, K5=K5)


def _p_values(L: float, B: float, n: float, Cu: float, C1: float) -> dict:
    l = 1.0 + L
    domain = (1.0 - 0.5 * PI2 * (5.0 / L**2 + 1.0 / (4.0 * B**2))) / l
    return dict(
        p1=domain + Cu * n**2 * (16.0 + C1 * Cu**2 * n**2),
        p2=Cu * n**2 * (16.0 + 3.0 * C1 * Cu**2 * n),
        p3=C1 * Cu**3 * n**2 * (1.0 + 2.0 * n),
        p4=C1 * Cu**3 * n,
    )


def k_constants(u0: Field, ut0_l2_sq: float, power: int = 2,
                variant: A2Variant = "theorem") -> ConstantsReport:
    """Every constant of the decay theorem for this datum.

    ``ut0_l2_sq`` is ||u_t(0)||^2, normally ||A u0 + u0^p u0_x||^2.  Requires
    ||u0||^2 < 1/2.
    """
    n = norm_sq(u0)
    if n >= 0.5:
        raise PreconditionError(f"||u0||^2 = {n:.6g} >= 1/2")
    if ut0_l2_sq < 0:
        raise ValueError("ut0_l2_sq must be nonnegative")
    return _build_report(u0, n, ut0_l2_sq, power, variant)


def _build_report(u0: Field, n: float, ut0: float, power: int, variant: A2Variant) -> ConstantsReport:
    L, B = u0.grid.L, u0.grid.B
    nan = math.nan
    A2 = compute_A2(L, B, variant)
    failed = []
    if not 2.0 * PI2 / L**2 - 1.0 > 0:
        failed.append("2pi^2/L^2 - 1 > 0")
    if A2 > 0:
        threshold = A2 / (2.0 * PI2 * _steklov_sum(L, B))
        g0, g1, g2 = decay_rates(L, B, variant)
    else:
        failed.append("A^2 > 0")
        threshold = nan
        g0 = A2 / (1.0 + L)
        g1 = PI2 / (2.0 * (1.0 + L)) * _steklov_sum(L, B)
        g2 = min(g0, g1)
    if not n < threshold:
        failed.append("||u0||^2 < smallness threshold")
    I0 = compute_I0(u0, power)
    if n < 0.5:
        Cu = _c_u0(L, n)
        c51 = condition_51(L, n, I0)
        c530 = condition_530(L, B, n)
        kv = _k_values(L, n, ut0, Cu)
        pv = _p_values(L, B, n, Cu, kv["C1"])
    else:
        failed.append("||u0||^2 < 1/2")
        Cu = nan
        c51 = (nan, 2.0 * PI2 / L**2 - 1.0)
        c530 = (nan, nan)
        kv = dict(C1=c1_constant(L), C2=c2_constant(L), K1=max(ut0, n),
                  K2=nan, K3=nan, K4=nan, K5=nan)
        pv = dict(p1=nan, p2=nan, p3=nan, p4=nan)
    if not c51[0] < c51[1]:
        failed.append("smallness condition on (||u0||, I0)")
    return ConstantsReport(
        L=L, B=B, A2=A2, smallness_threshold=threshold, u0_l2_sq=n, I0_sq=I0,
        ut0_l2_sq=ut0, condition_51_lhs=c51[0], condition_51_rhs=c51[1],
        condition_530_lhs=c530[0], condition_530_rhs=c530[1], C_u0=Cu,
        gamma0=g0, gamma1=g1, gamma2=g2, **kv, **pv,
        admissible=not failed, a2_variant=variant, hypotheses_failed=tuple(failed),
    )


def report_for(u0: Field, power: int = 2, variant: A2Variant = "theorem") -> ConstantsReport:
    """Full report for u0 with ||u_t(0)||^2 read off the equation.

    Unlike ``k_constants`` this never raises on large data: undefined
    constants are NaN and the failed hypotheses are listed.
    """
    from .solver import equation_rhs

    ut0 = norm_sq(equation_rhs(u0, power))
    return _build_report(u0, norm_sq(u0), ut0, power, variant)


def omega(u_l2_sq: float, ut_l2_sq: float, report: ConstantsReport) -> float:
    """omega(t) from the current ||u||^2 and ||u_t||^2."""
    s = ut_l2_sq + u_l2_sq
    Cu = report.C_u0
    return Cu * u_l2_sq * s * (16.0 + report.C1 * Cu**2 * s**2)
