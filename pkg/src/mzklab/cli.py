"""Command-line driver: simulate, check-constants, verify-inequalities,
convergence and decay-study.

Configuration is an INI file with one section per concern:

    [run]          seed
    [solver]       L, B, T, Nx, Ny, dt, nonlinearity_power, scheme,
                   linear_solve_tol, picard_tol, picard_max_iter,
                   damped_startup_steps
    [initial]      kind (product_sine | bump | zero), amplitude
    [diagnostics]  sample_every, fit_start, fit_end (fractions of T)
    [functional]   Nx, Ny, count, powers, nirenberg_slack, sup_slack, max_modes
    [convergence]  levels, T, dt_factor
    [decay]        amplitudes (default: a, a/2, a/4 from [initial])

Every key is optional.  Exit codes: 0 ok, 1 configuration or usage error,
2 divergence or numerical failure, 3 a hypothesis or checked claim is not met.
"""

from __future__ import annotations

import argparse
import configparser
import csv
import hashlib
import json
import math
import sys
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable, Optional

from . import constants, diagnostics, functional, manufactured, solver
from .grid import GridError, RectGrid

EXIT_OK, EXIT_CONFIG, EXIT_DIVERGED, EXIT_UNMET = 0, 1, 2, 3

_SOLVER_KEYS = {
    "l": ("L", float), "b": ("B", float), "t": ("T", float),
    "nx": ("Nx", int), "ny": ("Ny", int), "dt": ("dt", "opt_float"),
    "nonlinearity_power": ("nonlinearity_power", int), "scheme": ("scheme", str),
    "linear_solve_tol": ("linear_solve_tol", float), "picard_tol": ("picard_tol", float),
    "picard_max_iter": ("picard_max_iter", int),
    "damped_startup_steps": ("damped_startup_steps", int),
}

DEFAULTS = {
    "run": {"seed": "0"},
    "solver": {},
    "initial": {"kind": "product_sine", "amplitude": "0.004"},
    "diagnostics": {"sample_every": "1", "fit_start": "0.1", "fit_end": "0.9"},
    "functional": {"nx": "256", "ny": "256", "count": "1000", "powers": "2, 3",
                   "nirenberg_slack": str(functional.NIRENBERG_SLACK),
                   "sup_slack": str(functional.SUP_SLACK), "max_modes": "8"},
    "convergence": {"levels": "32, 64, 128", "t": "0.5", "dt_factor": "16"},
    "decay": {},
}
_ALLOWED = {
    "run": {"seed"},
    "solver": set(_SOLVER_KEYS),
    "initial": {"kind", "amplitude"},
    "diagnostics": {"sample_every", "fit_start", "fit_end"},
    "functional": set(DEFAULTS["functional"]),
    "convergence": set(DEFAULTS["convergence"]),
    "decay": {"amplitudes"},
}


class Config:
    """Parsed configuration; values stay strings until a command asks for them."""

    def __init__(self, parser: configparser.ConfigParser, seed_override: Optional[int] = None):
        self.raw = {s: dict(DEFAULTS.get(s, {})) for s in _ALLOWED}
        for section in parser.sections():
            if section not in _ALLOWED:
                raise solver.ConfigError(f"unknown section [{section}]")
            for key, value in parser.items(section):
                if key not in _ALLOWED[section]:
                    raise solver.ConfigError(f"unknown key {section}.{key}")
                self.raw[section][key] = value.strip()
        if seed_override is not None:
            self.raw["run"]["seed"] = str(seed_override)

    @classmethod
    def load(cls, path: Optional[str], seed_override: Optional[int] = None) -> "Config":
        parser = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
        if path is not None:
            try:
                with open(path) as fh:
                    parser.read_file(fh)
            except OSError as exc:
                raise solver.ConfigError(f"cannot read config {path}: {exc.strerror}") from exc
            except configparser.Error as exc:
                raise solver.ConfigError(f"malformed config {path}: {exc}") from exc
        return cls(parser, seed_override)

    def get(self, section: str, key: str, kind: Callable = float, default=None):
        s = self.raw[section].get(key)
        if s is None:
            return default
        try:
            return kind(s)
        except ValueError as exc:
            raise solver.ConfigError(f"{section}.{key}: cannot parse {s!r}") from exc

    def get_list(self, section: str, key: str, kind: Callable = float) -> Optional[list]:
        s = self.raw[section].get(key)
        if s is None:
            return None
        try:
            return [kind(tok) for tok in s.replace(",", " ").split()]
        except ValueError as exc:
            raise solver.ConfigError(f"{section}.{key}: cannot parse {s!r}") from exc

    @property
    def seed(self) -> int:
        return self.get("run", "seed", int)

    def sim_config(self, **overrides) -> solver.SimConfig:
        kw = {}
        for key, (name, kind) in _SOLVER_KEYS.items():
            s = self.raw["solver"].get(key)
            if s is None:
                continue
            if kind == "opt_float":
                kw[name] = None if s.lower() in ("", "auto", "none") else self.get("solver", key, float)
            else:
                kw[name] = self.get("solver", key, kind)
        kw.update(overrides)
        return solver.SimConfig(**kw)

    def initial(self, grid: RectGrid, amplitude: Optional[float] = None):
        kind = self.raw["initial"]["kind"]
        a = self.get("initial", "amplitude") if amplitude is None else amplitude
        if kind == "zero":
            return solver.make_initial("product_sine", 0.0, grid)
        try:
            return solver.make_initial(kind, a, grid)
        except ValueError as exc:
            raise solver.ConfigError(f"initial: {exc}") from exc

    def canonical(self) -> dict:
        return {s: dict(sorted(v.items())) for s, v in sorted(self.raw.items())}


@dataclass
class RunManifest:
    command: str
    config: dict
    seed: int
    outputs: dict = field(default_factory=dict)
    run_id: str = ""

    def __post_init__(self):
        if not self.run_id:
            blob = json.dumps({"command": self.command, "config": self.config, "seed": self.seed},
                              sort_keys=True).encode()
            self.run_id = hashlib.sha1(blob).hexdigest()[:12]

    def write(self, out_dir: Path) -> Path:
        paths = list(self.outputs.values()) + ["manifest.json"]
        if len(set(paths)) != len(paths):
            raise ValueError(f"output paths are not distinct: {paths}")
        path = out_dir / "manifest.json"
        _write_json(path, asdict(self))
        return path


def _sim_config_record(cfg: solver.SimConfig) -> dict:
    d = asdict(cfg)
    d.pop("forcing", None)
    return d


def _write_json(path: Path, doc) -> None:
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=2, allow_nan=False)
        fh.write("\n")


def _clean(x):
    """NaN/inf are not JSON; store them as null."""
    if isinstance(x, float) and not math.isfinite(x):
        return None
    if isinstance(x, dict):
        return {k: _clean(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_clean(v) for v in x]
    return x


# -- commands ----------------------------------------------------------------

def cmd_simulate(conf: Config, out: Path, say) -> int:
    cfg = conf.sim_config()
    u0 = conf.initial(cfg.grid)
    report = constants.report_for(u0, cfg.nonlinearity_power)
    every = conf.get("diagnostics", "sample_every", int)
    traj = solver.solve(cfg, u0, sample_every=every, store_every=10**9, report=report)
    checks = diagnostics.check_decay_bounds(traj, report)

    manifest = RunManifest("simulate", _sim_config_record(cfg) | {"sections": conf.canonical()}, conf.seed,
                           {"snapshots": "snapshots.csv", "constants": "constants.json",
                            "bounds": "bounds.json", "checkpoint": "final.ckpt"})
    diagnostics.write_snapshots_csv(out / "snapshots.csv", traj.snapshots)
    _write_json(out / "constants.json", report.to_dict())
    _write_json(out / "bounds.json", {
        "admissible": report.admissible,
        "hypotheses_failed": list(report.hypotheses_failed),
        "bounds": [c.record() for c in checks],
    })
    solver.save_checkpoint(out / "final.ckpt", traj.final, traj.times[-1])
    manifest.write(out)

    say(f"run {manifest.run_id}: {len(traj.times)} snapshots, dt={traj.dt:.4g}, T={cfg.T}")
    say(f"admissible: {report.admissible}" +
        ("" if report.admissible else f" (failed: {', '.join(report.hypotheses_failed)})"))
    for c in checks:
        say(f"  {c.name:20s} {'holds' if c.holds else 'FAILS':6s} margin {c.margin:.3g}")
    return EXIT_OK


def cmd_check_constants(conf: Config, out: Path, say) -> int:
    cfg = conf.sim_config()
    u0 = conf.initial(cfg.grid)
    report = constants.report_for(u0, cfg.nonlinearity_power)
    _write_json(out / "constants.json", report.to_dict())
    RunManifest("check-constants", {"sections": conf.canonical()}, conf.seed,
                {"constants": "constants.json"}).write(out)
    say(report.to_json(indent=2))
    if not report.admissible:
        say("hypotheses failed: " + "; ".join(report.hypotheses_failed))
        return EXIT_UNMET
    return EXIT_OK


def cmd_verify_inequalities(conf: Config, out: Path, say) -> int:
    g = RectGrid(conf.get("solver", "l", float, 1.0), conf.get("solver", "b", float, 1.0),
                 conf.get("functional", "nx", int), conf.get("functional", "ny", int))
    count = conf.get("functional", "count", int)
    if count < 0:
        raise solver.ConfigError("functional.count must be >= 0")
    powers = tuple(conf.get_list("functional", "powers", int))
    ok = True
    sharp = []
    for direction, target in (("y", 4 * g.B**2 / math.pi**2), ("x", g.L**2 / math.pi**2)):
        r = functional.steklov_constant(g, direction)
        rel = abs(r.value - target) / target
        ok &= rel < 0.01
        sharp.append({"direction": direction, "value": r.value, "target": target,
                      "relative_error": rel, "iterations": r.iterations, "residual": r.residual,
                      "resolution": list(r.resolution)})
        say(f"steklov constant ({direction}): {r.value:.6f}  target {target:.6f}  rel err {rel:.2e}")

    checks = functional.randomized_suite(g, count, conf.seed, powers,
                                         conf.get("functional", "nirenberg_slack"),
                                         conf.get("functional", "sup_slack"),
                                         conf.get("functional", "max_modes", int))
    summary = {}
    for c in checks:
        s = summary.setdefault(c.name, {"checked": 0, "failed": 0, "max_ratio": 0.0})
        s["checked"] += 1
        s["failed"] += not c.holds
        s["max_ratio"] = max(s["max_ratio"], c.ratio)
    for name, s in summary.items():
        ok &= s["failed"] == 0
        say(f"{name}: {s['checked']} fields, {s['failed']} failed, max ratio {s['max_ratio']:.4f}")

    _write_json(out / "inequalities.json", {"seed": conf.seed, "sharp_constants": sharp,
                                            "summary": summary,
                                            "records": [c.record() for c in checks]})
    RunManifest("verify-inequalities", {"sections": conf.canonical()}, conf.seed,
                {"inequalities": "inequalities.json"}).write(out)
    return EXIT_OK if ok else EXIT_UNMET


def cmd_convergence(conf: Config, out: Path, say) -> int:
    levels = conf.get_list("convergence", "levels", int)
    if len(levels) < 3:
        raise solver.ConfigError(f"convergence.levels: need at least 3 levels, got {len(levels)}")
    base = conf.sim_config()
    T = conf.get("convergence", "t")
    rows, order = manufactured.mms_ladder(levels, base.nonlinearity_power, base.L, base.B, T,
                                          conf.get("convergence", "dt_factor"), base.scheme)
    with open(out / "convergence.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["N", "h", "dt", "error", "order"])
        for r in rows:
            w.writerow([r.N, repr(r.h), repr(r.dt), repr(r.error), "" if math.isnan(r.order) else repr(r.order)])
    RunManifest("convergence", {"sections": conf.canonical()}, conf.seed,
                {"orders": "convergence.csv"}).write(out)
    for r in rows:
        say(f"N={r.N:4d}  error {r.error:.3e}  order {r.order:.3f}")
    say(f"fitted order {order:.3f} (power {base.nonlinearity_power})")
    return EXIT_OK if order >= 1.9 else EXIT_UNMET


def cmd_decay_study(conf: Config, out: Path, say) -> int:
    amps = conf.get_list("decay", "amplitudes")
    if amps is None:
        a = conf.get("initial", "amplitude")
        amps = [a, a / 2, a / 4]
    if not amps:
        raise solver.ConfigError("decay.amplitudes: empty sweep")
    cfg = conf.sim_config()
    every = conf.get("diagnostics", "sample_every", int)
    window = (conf.get("diagnostics", "fit_start") * cfg.T, conf.get("diagnostics", "fit_end") * cfg.T)
    runs = []
    code = EXIT_OK
    for a in amps:
        u0 = conf.initial(cfg.grid, amplitude=a)
        report = constants.report_for(u0, cfg.nonlinearity_power)
        rec = {"amplitude": a, "admissible": report.admissible,
               "hypotheses_failed": list(report.hypotheses_failed),
               "gamma0": report.gamma0, "gamma1": report.gamma1, "gamma2": report.gamma2}
        try:
            traj = solver.solve(cfg, u0, sample_every=every, store_every=10**9, report=report)
        except solver.DivergenceError as exc:
            rec["status"] = "diverged" if report.admissible else "hypotheses unmet"
            rec["error"] = str(exc)
            if report.admissible:
                code = EXIT_DIVERGED
            runs.append(rec)
            say(f"a={a:.4g}: {rec['status']} ({exc})")
            continue
        checks = diagnostics.check_decay_bounds(traj, report)
        fits = {}
        for name in ("l2_sq", "w_l2_sq"):
            try:
                fits[name] = asdict(diagnostics.fit_decay(traj.times, traj.series(name), window))
            except diagnostics.FitError as exc:
                fits[name] = {"error": str(exc)}
        main_bound = next(c for c in checks if c.name == "weighted_l2_decay")
        if not report.admissible:
            status = "hypotheses unmet"
        elif main_bound.holds:
            status = "ok"
        else:
            status = "bound violated"
            if code == EXIT_OK:
                code = EXIT_UNMET
        rec.update(status=status, fits=fits, bounds=[c.record() for c in checks])
        runs.append(rec)
        g = fits["w_l2_sq"].get("gamma_fit")
        say(f"a={a:.4g}: {status}, weighted decay margin {main_bound.margin:.3g}, "
            f"fitted rate {g:.3g} vs gamma0 {report.gamma0:.3g}" if g is not None else
            f"a={a:.4g}: {status}, weighted decay margin {main_bound.margin:.3g}")
    _write_json(out / "decay_study.json", _clean({"T": cfg.T, "window": list(window), "runs": runs}))
    RunManifest("decay-study", _sim_config_record(cfg) | {"sections": conf.canonical()}, conf.seed,
                {"study": "decay_study.json"}).write(out)
    if not any(r["admissible"] for r in runs):
        say("no admissible amplitude in the sweep")
        return EXIT_UNMET if code == EXIT_OK else code
    return code


COMMANDS = {
    "simulate": cmd_simulate,
    "check-constants": cmd_check_constants,
    "verify-inequalities": cmd_verify_inequalities,
    "convergence": cmd_convergence,
    "decay-study": cmd_decay_study,
}


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="mzklab", description="Numerical lab for the modified ZK equation on a strip")
    sub = ap.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", metavar="PATH", help="INI configuration file")
        p.add_argument("--out", metavar="DIR", default=".", help="output directory (default: .)")
        p.add_argument("--seed", type=int, help="master seed, overrides [run] seed")
        p.add_argument("--quiet", action="store_true", help="print nothing on success")
    return ap


def main(argv: Optional[list[str]] = None) -> int:
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_CONFIG

    def say(msg: str) -> None:
        if not args.quiet:
            print(msg)

    try:
        conf = Config.load(args.config, args.seed)
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        return COMMANDS[args.command](conf, out, say)
    except (solver.ConfigError, GridError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except solver.DivergenceError as exc:
        print(f"diverged: {exc}", file=sys.stderr)
        return EXIT_DIVERGED
    except (solver.NumericalError, functional.NumericalError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_DIVERGED


if __name__ == "__main__":
    sys.exit(main())
