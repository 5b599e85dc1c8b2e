"""Configuration, experiment commands and CSV/report output."""

import argparse
import configparser
import io
import math
import sys
import time
from dataclasses import dataclass, field, fields, replace
from enum import Enum
from pathlib import Path

import numpy as np

from .asymptotics import (Behaviour, FitError, LambdaSchedule, NumericsConfig, ScheduleKind,
                          default_tau_grid, estimate_distance, fit_rate,
                          geometric_grid, ratio_bounds_check, run_sweep, sign_onset,
                          threshold_classify)
from .geometry import Ball, ProbeGeometry
from .indicator import decomposition_terms, laplace_route_fields
from .oracles import spherical_mean_wave, volume_potential_v0
from .wavefield import WaveField, v0_closed, wave_eval

CSV_COLUMNS = ("tau", "lambda", "indicator", "bulk_term", "j_h", "e_h", "r_cal",
               "decomp_residual", "w0_l2_omega", "w0_l2_d", "log_abs_indicator", "sign",
               "floor_flag")

IDENTITY_TOL = 1e-6


class ConfigError(ValueError):
    """Malformed or invalid experiment configuration."""


class Command(Enum):
    SWEEP = "sweep"
    VERIFY = "verify"
    FIT = "fit"
    THRESHOLDS = "thresholds"


@dataclass(frozen=True)
class GeometryBlock:
    r_omega: float = 1.0
    r_cavity: float = 0.4
    source_center_z: float = 1.5
    source_radius: float = 0.2


@dataclass(frozen=True)
class PhysicsBlock:
    T_final: float = 1.0
    schedule: str = "fixed"
    lam: float = 1.0
    c: float = 1.0
    threshold_T: tuple = (0.5, 1.0)


@dataclass(frozen=True)
class NumericsBlock:
    radial_points: int = 801
    dt_max: float = 2.5e-4
    max_degree: int = 120
    quad_tol: float = 1e-12
    tau_min: float = None
    tau_max: float = None
    tau_points: int = 16
    fit_window_fraction: float = 0.6
    route: str = "auto"


@dataclass(frozen=True)
class OutputBlock:
    csv_path: str = "sweep.csv"
    report_path: str = "report.txt"


@dataclass(frozen=True)
class ExperimentConfig:
    geometry: GeometryBlock = field(default_factory=GeometryBlock)
    physics: PhysicsBlock = field(default_factory=PhysicsBlock)
    numerics: NumericsBlock = field(default_factory=NumericsBlock)
    output: OutputBlock = field(default_factory=OutputBlock)

    def __post_init__(self):
        self.probe_geometry()  # raises on invalid geometry
        try:
            self.schedule()
            self.numerics_config()
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
        n = self.numerics
        if n.tau_points < 8:
            raise ConfigError(f"tau_points must be at least 8, got {n.tau_points}")
        if not 1e-14 <= n.quad_tol <= 1e-6:
            raise ConfigError(f"quad_tol must lie in [1e-14, 1e-6], got {n.quad_tol}")
        lo, hi = self.tau_range()
        if not 0 < lo < hi:
            raise ConfigError(f"need 0 < tau_min < tau_max, got {lo}, {hi}")
        if not 0 < n.fit_window_fraction <= 1:
            raise ConfigError("fit_window_fraction must lie in (0, 1]")
        if self.physics.T_final <= 0:
            raise ConfigError("T_final must be positive")

    def probe_geometry(self):
        g = self.geometry
        try:
            return ProbeGeometry(g.r_omega, g.r_cavity,
                                 Ball(g.source_center_z, g.source_radius))
        except ValueError as exc:
            raise ConfigError(str(exc)) from None

    def schedule(self):
        p = self.physics
        kind = ScheduleKind(p.schedule)
        if kind is ScheduleKind.FIXED:
            return LambdaSchedule.fixed(p.lam)
        if kind is ScheduleKind.INV_SQRT_TAU:
            return LambdaSchedule.inv_sqrt_tau()
        return LambdaSchedule.scaled(p.c)

    def numerics_config(self):
        n = self.numerics
        return NumericsConfig(radial_points=n.radial_points, dt_max=n.dt_max,
                              max_degree=n.max_degree, quad_tol=n.quad_tol, route=n.route)

    def tau_range(self):
        n = self.numerics
        if n.tau_min is not None and n.tau_max is not None:
            return n.tau_min, n.tau_max
        grid = default_tau_grid(self.schedule(), self.probe_geometry(), n.tau_points)
        return (n.tau_min if n.tau_min is not None else grid[0],
                n.tau_max if n.tau_max is not None else grid[-1])

    def tau_grid(self):
        lo, hi = self.tau_range()
        return geometric_grid(lo, hi, self.numerics.tau_points)


_SECTIONS = {"geometry": GeometryBlock, "physics": PhysicsBlock,
             "numerics": NumericsBlock, "output": OutputBlock}
_ALIASES = {"lambda": "lam"}


def _convert(cls, key, raw):
    default = {f.name: f.default for f in fields(cls)}[key]
    if key == "threshold_T":
        return tuple(float(x) for x in raw.replace(",", " ").split())
    if key in ("schedule", "route", "csv_path", "report_path"):
        return raw.strip()
    if isinstance(default, int) and not isinstance(default, bool):
        return int(raw)
    return float(raw)


def parse_config(text):
    """Sectioned key-value document to a validated :class:`ExperimentConfig`."""
    cp = configparser.ConfigParser(inline_comment_prefixes=("#",), comment_prefixes=("#",),
                                   interpolation=None)
    cp.optionxform = str
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"cannot parse config: {exc}") from None
    blocks = {}
    for section in cp.sections():
        if section not in _SECTIONS:
            raise ConfigError(f"unknown section [{section}]")
        cls = _SECTIONS[section]
        names = {f.name for f in fields(cls)}
        values = {}
        for key, raw in cp.items(section):
            name = _ALIASES.get(key, key)
            if name not in names:
                raise ConfigError(f"unknown key {key!r} in [{section}]")
            try:
                values[name] = _convert(cls, name, raw)
            except ValueError:
                raise ConfigError(f"bad value {raw!r} for {key!r} in [{section}]") from None
        blocks[section] = cls(**values)
    return ExperimentConfig(**blocks)


def load_config(path):
    return parse_config(Path(path).read_text(encoding="utf-8"))


def with_overrides(cfg, tau_min=None, tau_max=None):
    n = cfg.numerics
    n = replace(n, tau_min=n.tau_min if tau_min is None else tau_min,
                tau_max=n.tau_max if tau_max is None else tau_max)
    return replace(cfg, numerics=n)


# --- output ------------------------------------------------------------------

def _fmt(x):
    return "%.16e" % x


def sweep_csv(series):
    """CSV text, one row per sample in tau order."""
    buf = io.StringIO()
    buf.write(",".join(CSV_COLUMNS) + "\n")
    for s in series.samples:
        log_abs = math.log(abs(s.indicator)) if s.indicator != 0 else -math.inf
        row = [_fmt(s.tau), _fmt(s.lam), _fmt(s.indicator), _fmt(s.bulk_term), _fmt(s.j_h),
               _fmt(s.e_h), _fmt(s.r_cal), _fmt(s.decomp_residual), _fmt(s.w0_l2_omega),
               _fmt(s.w0_l2_d), _fmt(log_abs), str(s.sign), str(int(s.floor_flag))]
        buf.write(",".join(row) + "\n")
    return buf.getvalue()


def _write(path, text):
    Path(path).write_text(text, encoding="utf-8")


# --- commands ----------------------------------------------------------------

def target_distance(schedule, geometry):
    """Distance the schedule's rate should recover."""
    if schedule.kind is ScheduleKind.INV_SQRT_TAU:
        return geometry.dist_cavity
    return geometry.dist_omega


def predicted_behaviour(schedule, geometry, T):
    if schedule.kind is ScheduleKind.FIXED:
        threshold = 2 * schedule.value * geometry.dist_omega
    elif schedule.kind is ScheduleKind.INV_SQRT_TAU:
        threshold = 2 * geometry.dist_cavity
    else:
        threshold = 2 * math.sqrt(schedule.c) * geometry.dist_omega
    if math.isclose(T, threshold, rel_tol=1e-12):
        return Behaviour.BORDERLINE
    return Behaviour.DIVERGES if T > threshold else Behaviour.VANISHES


def _sweep(cfg, jobs, T=None):
    return run_sweep(cfg.probe_geometry(), cfg.physics.T_final if T is None else T,
                     cfg.schedule(), cfg.tau_grid(), cfg.numerics_config(), jobs)


def cmd_sweep(cfg, jobs=1, out=sys.stdout):
    series = _sweep(cfg, jobs)
    _write(cfg.output.csv_path, sweep_csv(series))
    bad = [s.tau for s in series.samples
           if not s.floor_flag and s.relative_residual > IDENTITY_TOL]
    print(f"wrote {len(series.samples)} rows to {cfg.output.csv_path}", file=out)
    for tau, err in series.failures:
        print(f"failed sample tau={tau:.6g}: {err}", file=out)
    if bad:
        print(f"decomposition identity above {IDENTITY_TOL:g} at tau={bad}", file=out)
    return 1 if bad or series.failures else 0


def cmd_fit(cfg, jobs=1, out=sys.stdout):
    g, sch = cfg.probe_geometry(), cfg.schedule()
    series = _sweep(cfg, jobs)
    fit = fit_rate(series, sch.natural_axis(), cfg.numerics.fit_window_fraction)
    est = estimate_distance(fit, sch)
    target = target_distance(sch, g)
    lines = [f"schedule: {sch.kind.value} (parameter {sch.value:g})",
             f"T_final: {series.T_final:g}",
             f"tau window: [{fit.window[0]:.6g}, {fit.window[1]:.6g}], {fit.n_samples} samples",
             f"slope: {fit.slope:.10g} per {fit.x_axis.value}",
             f"log tau coefficient: {fit.log_correction_coeff:.6g}",
             f"residual rms: {fit.residual_rms:.3e}",
             f"estimated distance: {est:.6f}",
             f"target distance: {target:.6f}",
             f"relative error: {abs(est - target) / target:.4f}"]
    ok = abs(est - target) <= 0.1 * target
    win = [s for s in series.usable() if fit.window[0] <= s.tau <= fit.window[1]]
    onset = sign_onset(series)
    lines.append(f"indicator sign on window: {sorted({s.sign for s in win})}, "
                 f"stable from tau={onset:.6g}")
    if sch.tau_dependent:
        rc = ratio_bounds_check(series)
        lines.append(f"ratio I/(tau |w0|^2): {rc.ratio:.6g}, bounds [{rc.lower:g}, {rc.upper:g}]"
                     f" +- {rc.margin:g}: {'pass' if rc.passed else 'FAIL'}")
        ok = ok and rc.passed
    lines.append(f"verdict: {'pass' if ok else 'FAIL'}")
    text = "\n".join(lines) + "\n"
    _write(cfg.output.report_path, text)
    out.write(text)
    return 0 if ok else 1


def cmd_thresholds(cfg, jobs=1, out=sys.stdout):
    g, sch = cfg.probe_geometry(), cfg.schedule()
    ok, lines = True, []
    for T in cfg.physics.threshold_T:
        series = _sweep(cfg, jobs, T)
        got = threshold_classify(series, sch.natural_axis(), T)
        want = predicted_behaviour(sch, g, T)
        hit = got is want or want is Behaviour.BORDERLINE
        ok = ok and hit
        lines.append(f"T={T:g}: {got.value} (predicted {want.value}) "
                     f"{'pass' if hit else 'FAIL'}")
    text = "\n".join(lines) + "\n"
    _write(cfg.output.report_path, text)
    out.write(text)
    return 0 if ok else 1


def verification_checks(cfg):
    """``(name, value, tolerance)`` rows for the identity and oracle checks.

    The decomposition identities run at twice the configured resolution in
    both space and time, for ``tau`` in {8, 12, 16, 20} at the configured
    fixed lambda.
    """
    g = cfg.probe_geometry()
    lam = cfg.physics.lam
    rows = []
    rng = np.random.default_rng(12345)
    worst = 0.0
    for _ in range(50):
        lv = rng.uniform(0.3, 3.0)
        s = rng.uniform(g.source.radius, 3.0)
        t = lv * rng.uniform(max(0.0, s - g.source.radius), s + g.source.radius)
        w = WaveField(g.source, lv, 1.0)
        ref = spherical_mean_wave(g.source.radius, lv, s, t)
        val = float(wave_eval(w, s, t).v)
        if ref != 0:
            worst = max(worst, abs(val - ref) / abs(ref))
    rows.append(("wave closed form vs spherical mean", worst, 1e-10))
    worst = 0.0
    for s, tau in [(1.3, 2.0), (1.5, 10.0), (2.0, 5.0)]:
        w = WaveField(g.source, lam, 1.0)
        ref = volume_potential_v0(g.source.radius, lam, s, tau)
        worst = max(worst, abs(float(v0_closed(w, s, tau)) - ref) / abs(ref))
    rows.append(("v0 closed form vs volume potential", worst, 1e-9))
    n = cfg.numerics_config()
    fine = replace(n, radial_points=2 * n.radial_points - 1, dt_max=n.dt_max / 2, route="time")
    series = run_sweep(g, cfg.physics.T_final, LambdaSchedule.fixed(lam),
                       np.array([8.0, 12.0, 16.0, 20.0]), fine)
    for s in series.samples:
        rows.append((f"decomposition identity tau={s.tau:g}", s.relative_residual, IDENTITY_TOL))
        rows.append((f"first representation tau={s.tau:g}", abs(s.first_rep_residual),
                     IDENTITY_TOL))
    tau = 400.0
    w = WaveField(g.source, 1 / math.sqrt(tau), cfg.physics.T_final)
    f = laplace_route_fields(w, g, tau, n.max_degree, n.quad_tol)
    s = decomposition_terms(f, w, g, n.quad_tol)
    rows.append((f"decomposition identity, lambda=tau^-1/2, tau={tau:g}",
                 s.relative_residual, IDENTITY_TOL))
    return rows


def cmd_verify(cfg, jobs=1, out=sys.stdout):
    rows = verification_checks(cfg)
    width = max(len(r[0]) for r in rows)
    lines = [f"{'check'.ljust(width)}  {'value':>12}  {'tol':>8}  result"]
    ok = True
    for name, val, tol in rows:
        hit = bool(val <= tol)
        ok = ok and hit
        lines.append(f"{name.ljust(width)}  {val:12.3e}  {tol:8.1e}  {'pass' if hit else 'FAIL'}")
    text = "\n".join(lines) + "\n"
    _write(cfg.output.report_path, text)
    out.write(text)
    return 0 if ok else 1


_COMMANDS = {Command.SWEEP: cmd_sweep, Command.VERIFY: cmd_verify, Command.FIT: cmd_fit,
             Command.THRESHOLDS: cmd_thresholds}


def _check_output_dir(path):
    parent = Path(path).resolve().parent
    if not parent.is_dir():
        raise FileNotFoundError(f"output directory {parent} does not exist")


def run_experiment(cfg, command, jobs=1, out=sys.stdout):
    """Run one command; returns the process exit status."""
    command = Command(command)
    # fail before the sweep rather than after it
    _check_output_dir(cfg.output.csv_path if command is Command.SWEEP
                      else cfg.output.report_path)
    return _COMMANDS[command](cfg, jobs, out)


def build_parser():
    p = argparse.ArgumentParser(prog="enclosure",
                                description="Heat-probe enclosure experiments.")
    p.add_argument("command", choices=[c.value for c in Command])
    p.add_argument("--config", help="sectioned key-value config file")
    p.add_argument("--jobs", type=int, default=1, help="parallel sweep jobs")
    p.add_argument("--tau-min", type=float, default=None)
    p.add_argument("--tau-max", type=float, default=None)
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config) if args.config else ExperimentConfig()
        cfg = with_overrides(cfg, args.tau_min, args.tau_max)
        ExperimentConfig(cfg.geometry, cfg.physics, cfg.numerics, cfg.output)
        start = time.perf_counter()
        status = run_experiment(cfg, args.command, max(1, args.jobs))
        print(f"{args.command} finished in {time.perf_counter() - start:.1f} s "
              f"with status {status}", file=sys.stderr)
        return status
    except (ConfigError, FitError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
