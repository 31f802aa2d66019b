"""Acceptance suite: one pass/fail line per criterion.

Run with ``pytest tests/test_acceptance.py -v``; the lines are repeated in
the "acceptance criteria" section of the terminal summary.
"""

import math
import time

import numpy as np
import pytest
import sympy as sp

from mzklab import constants, diagnostics
from mzklab.functional import randomized_suite, steklov_constant
from mzklab.grid import Field, RectGrid
from mzklab.manufactured import mms_ladder
from mzklab.solver import SimConfig, make_initial, picard_local, solve

from conftest import record_criterion

ADMISSIBLE = 0.004


def _timed(fn, *args, **kw):
    t0 = time.perf_counter()
    out = fn(*args, **kw)
    return out, time.perf_counter() - t0


def test_criterion_1_steklov_constants():
    parts, ok = [], True
    for L, B, direction, target in ((1.0, 1.0, "y", 4 / math.pi**2), (1.0, 1.0, "x", 1 / math.pi**2),
                                    (2.0, 0.5, "x", 4 / math.pi**2)):
        r, secs = _timed(steklov_constant, RectGrid(L, B, 256, 256), direction)
        rel = abs(r.value - target) / target
        ok &= rel < 0.01 and secs < 5.0
        parts.append(f"{direction}(L={L:g},B={B:g}) {r.value:.6f} vs {target:.6f} rel {rel:.1e} in {secs:.2f}s")
    record_criterion(1, ok, "; ".join(parts))
    assert ok


def _sympy_constants(L, B):
    L, B = sp.Rational(L), sp.Rational(B)
    s = 1 / L**2 + 1 / (4 * B**2)
    A2 = sp.pi**2 / 2 * (3 / L**2 + 1 / (4 * B**2)) - 1
    g0 = A2 / (1 + L)
    g1 = sp.pi**2 / (2 * (1 + L)) * s
    vals = {"A2": A2, "smallness_threshold": A2 / (2 * sp.pi**2 * s), "gamma0": g0, "gamma1": g1,
            "gamma2": sp.Min(g0, g1)}
    return {k: float(sp.N(v, 30)) for k, v in vals.items()}


def test_criterion_2_constants_ledger():
    report = constants.report_for(make_initial("product_sine", ADMISSIBLE, RectGrid(1, 1, 64, 64)))
    ref = _sympy_constants(1, 1)
    ok = report.gamma2 == report.gamma1
    parts = []
    for name, exact in ref.items():
        got = getattr(report, name)
        match = f"{got:.6g}" == f"{exact:.6g}"
        ok &= match
        parts.append(f"{name} {got:.6g}{'' if match else f' (sympy {exact:.6g})'}")
    record_criterion(2, ok, ", ".join(parts) + ", gamma2 == gamma1")
    assert ok


def _residuals(power, amp, N, dt, T=0.1):
    cfg = SimConfig(T=T, Nx=N, Ny=N, dt=dt, nonlinearity_power=power)
    traj = solve(cfg, make_initial("product_sine", amp, cfg.grid))
    window = (0.1 * T, T)
    return (diagnostics.identity_residual_l2(traj, window),
            diagnostics.identity_residual_weighted(traj, window))


def test_criterion_3_dissipation_identity():
    ladder = [(32, 2e-3), (64, 1e-3), (128, 5e-4)]
    lin = np.array([_residuals(0, 1.0, N, dt) for N, dt in ladder])
    orders = np.log2(lin[:-1, 0] / lin[1:, 0])
    at64 = lin[1, 0]
    ok = at64 < 1e-2 and orders.min() >= 1.5
    nl = {a: _residuals(2, a, 64, 1e-3) for a in (ADMISSIBLE, 0.5)}
    for a, (r, rw) in nl.items():
        ok &= r < 1e-2 and rw < 1e-2 and r <= 10 * at64
    ok &= lin[1, 1] < 1e-2
    detail = (f"linear N=64 dt=1e-3 residual {at64:.2e} (weighted {lin[1, 1]:.2e}), "
              f"orders {', '.join(f'{o:.2f}' for o in orders)}; mZK "
              + ", ".join(f"a={a:g}: {r:.2e} (weighted {rw:.2e})" for a, (r, rw) in nl.items()))
    record_criterion(3, ok, detail)
    assert ok


@pytest.fixture(scope="module")
def admissible_runs():
    runs = {}
    for a in (ADMISSIBLE, ADMISSIBLE / 2, ADMISSIBLE / 4):
        cfg = SimConfig(T=2.0, Nx=64, Ny=64)
        u0 = make_initial("product_sine", a, cfg.grid)
        report = constants.report_for(u0)
        traj, secs = _timed(solve, cfg, u0, report=report)
        runs[a] = (traj, report, secs)
    return runs


def test_criterion_4_monotone_l2(admissible_runs):
    ok, parts = True, []
    for a, (traj, report, _) in admissible_runs.items():
        e = traj.series("l2_sq")
        excess = float(np.max(e - e[0]))
        ok &= report.admissible and excess <= 1e-8
        parts.append(f"a={a:g}: max(E - E0) = {excess:.1e} over {len(e)} samples")
    record_criterion(4, ok, "; ".join(parts))
    assert ok


def test_criterion_5_weighted_decay_bound(admissible_runs):
    traj, report, secs = admissible_runs[ADMISSIBLE]
    check = next(c for c in diagnostics.check_decay_bounds(traj, report) if c.name == "weighted_l2_decay")
    lhs, rhs = diagnostics.bound_series(traj, report)["weighted_l2_decay"]
    worst = float(np.max(lhs[1:] / rhs[1:]))
    ok = report.admissible and check.holds and bool(np.all(lhs <= rhs)) and secs < 60.0
    record_criterion(5, ok, f"a={ADMISSIBLE:g}, T=2, N=64: {len(lhs)} samples, max lhs/rhs for t>0 = {worst:.3e}, "
                            f"gamma0 = {report.gamma0:.4f}, run {secs:.1f}s")
    assert ok


def test_criterion_6_picard_contraction():
    N, T, dt = 32, 0.02, 0.02 / 32
    cfg = SimConfig(T=1.0, Nx=N, Ny=N)
    u0 = make_initial("product_sine", ADMISSIBLE, cfg.grid)
    assert constants.report_for(u0).admissible
    (u_full, rep_full), (_, rep_half) = (picard_local(u0, T, cfg, dt=dt), picard_local(u0, T / 2, cfg, dt=dt))
    f_full, f_half = rep_full.contraction_factors[0], rep_half.contraction_factors[0]
    ok = (rep_full.converged and rep_half.converged and f_full < 0.5
          and rep_full.iterations <= 10 and rep_half.iterations <= 10 and f_half < f_full)

    # truncation estimates by halving dt in each scheme
    u_fine, _ = picard_local(u0, T, cfg, dt=dt / 2)

    def imex(step):
        return solve(SimConfig(T=T, Nx=N, Ny=N, dt=step), u0, sample_every=10**6).final.values

    v, v_fine = imex(dt), imex(dt / 2)
    est = np.abs(u_full.values - u_fine.values).max() + np.abs(v - v_fine).max()
    gap = np.abs(u_full.values - v).max()
    ok &= gap <= 10 * est
    record_criterion(6, ok, f"T_loc={T:g}: {rep_full.iterations} iterations, first factor {f_full:.3e}; "
                            f"T_loc={T / 2:g}: {rep_half.iterations} iterations, first factor {f_half:.3e}; "
                            f"|Picard - IMEX| {gap:.2e} <= 10 x {est:.2e}")
    assert ok


def test_criterion_7_mms_order():
    ok, parts = True, []
    for power in (0, 2):
        rows, order = mms_ladder([32, 64, 128], power=power, T=0.5)
        ok &= order >= 1.9
        parts.append(f"power {power}: order {order:.3f} (errors "
                     + ", ".join(f"{r.error:.2e}" for r in rows) + ")")
    record_criterion(7, ok, "; ".join(parts))
    assert ok


def test_criterion_8_inequality_suite():
    checks, secs = _timed(randomized_suite, RectGrid(1, 1, 128, 128), 1000, 0, (2, 3), 0.05, 0.02)
    failed = [c for c in checks if not c.holds]
    worst = {n: max(c.ratio for c in checks if c.name == n) for n in ("nirenberg_p2", "nirenberg_p3", "sup_bound")}
    ok = len(checks) == 3000 and not failed and secs < 30.0
    record_criterion(8, ok, f"1000 fields at N=128, seed 0: {len(failed)} failures, max ratios "
                            + ", ".join(f"{k} {v:.3f}" for k, v in worst.items()) + f", {secs:.1f}s")
    assert ok


def test_criterion_9_zero_data():
    cfg = SimConfig(T=0.2, Nx=32, Ny=32)
    z = Field.zeros(cfg.grid)
    report = constants.k_constants(z, 0.0)
    traj = solve(cfg, z, store_every=1)
    fields_zero = all(not np.any(f.values) for f in traj.fields.values())
    snaps_zero = all(all(v == 0.0 for k, v in vars(s).items() if k != "t") for s in traj.snapshots)
    ks_zero = all(getattr(report, k) == 0.0 for k in ("K1", "K2", "K3", "K4", "K5", "p2", "p3", "p4"))
    p1_domain = report.p1 == (1 - 0.5 * math.pi**2 * (5 + 0.25)) / 2
    checks = diagnostics.check_decay_bounds(traj, report)
    bounds_hold = all(c.holds and c.margin == 1.0 for c in checks)
    u_fp, rep = picard_local(z, 0.05, cfg, dt=0.01)
    picard_zero = rep.converged and rep.iterations == 1 and not np.any(u_fp.values)
    ok = fields_zero and snaps_zero and ks_zero and p1_domain and bounds_hold and picard_zero
    record_criterion(9, ok, f"trajectory zero {fields_zero and snaps_zero}, K1..K5/p2..p4 zero {ks_zero}, "
                            f"p1 = domain bracket {p1_domain}, {len(checks)} bounds hold with margin 1 {bounds_hold}, "
                            f"Picard fixed point zero {picard_zero}")
    assert ok
