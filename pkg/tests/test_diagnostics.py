import math
from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, strategies as st

from mzklab.constants import report_for
from mzklab.diagnostics import (EnergySnapshot, FitError, SegmentError, check_decay_bounds,
                                fit_decay, identity_residual_l2, identity_residual_weighted,
                                read_snapshots_csv, snapshot, write_snapshots_csv)
from mzklab.functional import band_limited_field
from mzklab.grid import Field, RectGrid
from mzklab.solver import SimConfig, make_initial, solve

ZERO = EnergySnapshot(*([0.0] * len(EnergySnapshot.columns())))


def _synthetic(times, **series):
    """Snapshots whose named columns follow the given callables of t."""
    return [replace(ZERO, t=float(t), **{k: float(f(t)) for k, f in series.items()}) for t in times]


def test_zero_snapshot():
    g = RectGrid(1, 1, 16, 16)
    z = Field.zeros(g)
    s = snapshot(z, z, 0.01, report_for(z))
    assert all(v == 0.0 for v in (s.l2_sq, s.w_l2_sq, s.grad_sq, s.ut_sq, s.trace_ux0,
                                  s.trace_uxy0, s.trace_uxxL, s.l4_4, s.omega_t, s.nl_work))


def test_snapshot_sine_integrals():
    g = RectGrid(1, 1, 128, 128)
    u = Field.from_function(g, lambda X, Y: np.sin(np.pi * X) * np.sin(np.pi * (Y + 1) / 2))
    s = snapshot(u, u, 0.01, None)
    assert s.l2_sq == pytest.approx(0.5, abs=1e-4)
    assert s.w_l2_sq == pytest.approx(0.75, abs=1e-4)
    assert s.ut_sq == 0.0 and math.isnan(s.omega_t)


@given(seed=st.integers(0, 2**31))
def test_weighted_norm_sandwich(seed):
    g = RectGrid(1, 1, 16, 16)
    u = band_limited_field(g, np.random.default_rng(seed))
    s = snapshot(u, u, 1.0, None)
    assert s.l2_sq <= s.w_l2_sq <= 2 * s.l2_sq


def test_snapshot_squared_quantities_nonnegative():
    g = RectGrid(1, 1, 16, 16)
    u = band_limited_field(g, np.random.default_rng(1)) * 0.01
    v = band_limited_field(g, np.random.default_rng(2)) * 0.01
    s = snapshot(u, v, 0.1, report_for(u))
    for name in ("l2_sq", "w_l2_sq", "grad_sq", "ux_sq", "uy_sq", "grad_uy_sq", "ut_sq", "w_ut_sq",
                 "trace_ux0", "trace_uxy0", "trace_uxxL", "l4_4", "omega_t", "uxy_sq", "uxx_sq"):
        assert getattr(s, name) >= 0.0, name


def test_snapshot_is_pure():
    g = RectGrid(1, 1, 16, 16)
    u = band_limited_field(g, np.random.default_rng(4)) * 0.01
    r = report_for(u)
    assert math.isfinite(r.C_u0)
    assert snapshot(u, u * 0.5, 0.1, r, t=1.0) == snapshot(u, u * 0.5, 0.1, r, t=1.0)


def test_snapshot_argument_errors():
    g = RectGrid(1, 1, 16, 16)
    z = Field.zeros(g)
    with pytest.raises(ValueError):
        snapshot(z, None, 0.1, None)
    with pytest.raises(ValueError):
        snapshot(z, z, 0.0, None)


def test_residual_zero_trajectory():
    snaps = _synthetic(np.linspace(0, 1, 5))
    assert identity_residual_l2(snaps) == 0.0
    assert identity_residual_weighted(snaps) == 0.0


def test_residual_too_few_samples():
    with pytest.raises(SegmentError):
        identity_residual_l2(_synthetic([0.0, 0.1]))
    with pytest.raises(SegmentError):
        identity_residual_weighted(_synthetic([0.0, 0.1]))


def test_residual_rejects_unordered_times():
    with pytest.raises(SegmentError):
        identity_residual_l2(_synthetic([0.0, 0.2, 0.1], l2_sq=lambda t: 1 + t))


def test_residual_on_exact_l2_identity():
    # E = e^{-2t}, boundary loss 2 e^{-2t}: only the centered-difference error remains
    res = []
    for n in (41, 81, 161):
        snaps = _synthetic(np.linspace(0, 1, n), l2_sq=lambda t: np.exp(-2 * t),
                           trace_ux0=lambda t: 2 * np.exp(-2 * t))
        res.append(identity_residual_l2(snaps))
    assert res[0] < 1e-3
    assert np.log2(res[0] / res[1]) == pytest.approx(2.0, abs=0.1)


def test_residual_on_exact_weighted_identity():
    # W' = -trace - (grad + 2 ux) + l2 + nl = -(0.5 + 0.75 - 0.5 - 0.25) e^{-t}
    snaps = _synthetic(np.linspace(0, 1, 201), w_l2_sq=lambda t: 0.5 * np.exp(-t),
                       trace_ux0=lambda t: 0.5 * np.exp(-t), grad_sq=lambda t: 0.25 * np.exp(-t),
                       ux_sq=lambda t: 0.25 * np.exp(-t), l2_sq=lambda t: 0.5 * np.exp(-t),
                       nl_work=lambda t: 0.25 * np.exp(-t))
    assert identity_residual_weighted(snaps) < 1e-4


def test_residual_window_and_floor():
    t = np.linspace(0, 1, 101)
    bad = lambda s: np.where(s < 0.05, 0.0, 2 * np.exp(-2 * s))
    snaps = _synthetic(t, l2_sq=lambda s: np.exp(-2 * s), trace_ux0=bad)
    assert identity_residual_l2(snaps) == pytest.approx(1.0)
    assert identity_residual_l2(snaps, window=(0.1, 1.0)) < 1e-3
    # below 1e-10 of the peak (t > 0.384) the trace is dropped: round-off regime
    tiny = _synthetic(t, l2_sq=lambda s: np.exp(-60 * s), trace_ux0=lambda s: 60 * np.exp(-60 * s) * (s < 0.4))
    assert identity_residual_l2(tiny, floor=0.0) == pytest.approx(1.0)
    assert identity_residual_l2(tiny) < 0.1


def test_linear_run_residual_small():
    cfg = SimConfig(T=0.1, Nx=32, Ny=32, dt=2e-3, nonlinearity_power=0)
    traj = solve(cfg, make_initial("product_sine", 1.0, cfg.grid))
    assert identity_residual_l2(traj, (0.01, 0.1)) < 2e-2
    assert identity_residual_weighted(traj, (0.01, 0.1)) < 2e-2


def test_fit_exact_exponential():
    t = np.linspace(0, 2, 100)
    f = fit_decay(t, np.exp(-3 * t), window=(0, 2))
    assert f.gamma_fit == pytest.approx(3.0, rel=1e-10)
    assert f.r_squared == pytest.approx(1.0) and f.window == (0.0, 2.0)


def test_fit_with_prefactor():
    t = np.linspace(0, 1, 50)
    f = fit_decay(t, 5 * np.exp(-2 * t))
    assert f.gamma_fit == pytest.approx(2.0, rel=1e-10)
    assert f.intercept == pytest.approx(math.log(5), rel=1e-10)
    assert f.window == pytest.approx((0.1, 0.9))


def test_fit_errors():
    t = np.linspace(0, 1, 50)
    with pytest.raises(FitError):
        fit_decay(t, np.exp(-t), window=(0.5, 0.5))
    with pytest.raises(FitError):
        fit_decay(t, np.exp(-t), window=(0.3, 0.31))
    v = np.exp(-t)
    v[25] = 0.0
    with pytest.raises(FitError):
        fit_decay(t, v)


def test_fit_noisy_r_squared_in_range():
    rng = np.random.default_rng(0)
    t = np.linspace(0, 1, 200)
    f = fit_decay(t, np.exp(-t + 0.5 * rng.standard_normal(200)))
    assert 0.0 <= f.r_squared <= 1.0


def test_bounds_zero_data():
    cfg = SimConfig(T=0.05, Nx=16, Ny=16)
    z = Field.zeros(cfg.grid)
    checks = check_decay_bounds(solve(cfg, z), report_for(z))
    assert len(checks) == 8
    assert all(c.holds and c.margin == 1.0 and c.hypotheses_met for c in checks)


def _admissible_run(a=0.004, T=0.3, n=32):
    cfg = SimConfig(T=T, Nx=n, Ny=n)
    u0 = make_initial("product_sine", a, cfg.grid)
    r = report_for(u0)
    return solve(cfg, u0, report=r), r


def test_bounds_at_start_are_consistent():
    traj, r = _admissible_run(T=0.05)
    first = traj.snapshots[:1]
    assert all(c.holds for c in check_decay_bounds(first, r))


def test_weighted_bound_holds_admissible():
    traj, r = _admissible_run()
    assert r.admissible
    checks = {c.name: c for c in check_decay_bounds(traj, r)}
    assert checks["weighted_l2_decay"].holds
    assert checks["l2_nonincreasing"].holds
    assert all(c.hypotheses_met for c in checks.values())


def test_bounds_flagged_when_inadmissible():
    traj, r = _admissible_run(a=0.05, T=0.05)
    assert not r.admissible
    checks = check_decay_bounds(traj, r)
    assert all(not c.hypotheses_met for c in checks)
    assert all(math.isfinite(c.margin) for c in checks)


def test_weighted_bound_stable_under_shrinking_data():
    for alpha in (1.0, 0.5, 0.25):
        traj, r = _admissible_run(a=0.004 * alpha, T=0.2)
        assert next(c for c in check_decay_bounds(traj, r) if c.name == "weighted_l2_decay").holds


def test_bound_record_json_safe():
    from mzklab.diagnostics import BoundCheck

    assert BoundCheck("x", False, -math.inf).record()["margin"] is None


def test_csv_round_trip(tmp_path):
    traj, _ = _admissible_run(T=0.05)
    p = tmp_path / "s.csv"
    write_snapshots_csv(p, traj.snapshots)
    header = p.read_text().splitlines()[0].split(",")
    assert header == EnergySnapshot.columns()
    assert read_snapshots_csv(p) == traj.snapshots


def test_csv_rejects_foreign_header(tmp_path):
    p = tmp_path / "s.csv"
    p.write_text("a,b\n1,2\n")
    with pytest.raises(ValueError):
        read_snapshots_csv(p)
