"""Command line, configuration and data files for the beam toolkit.

The CLI drives parameter estimation, time simulation, frequency-response
and fold-curve continuation, isola scans, canned scenarios, experimental
overlays and SVG plotting.  Configuration files are plain ``key = value``
lines with ``#`` comments; unknown keys are rejected so typos in parameter
studies fail loudly.  All numeric output uses 17 significant digits with a
``.`` decimal separator, which round-trips doubles exactly.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import dataclass, field

import numpy as np

from . import model
from .bvp import Mesh
from .continuation import (StepControls, continue_fold_curve, detect_isola,
                           frequency_response)
from .ivp import IvpSettings, integrate
from .model import BeamGeometry, ModelParams, Rescaling

__all__ = ["RunConfig", "ConfigError", "parse_config", "cli", "main",
           "write_branch_csv", "read_branch_csv", "write_fold_curve_csv",
           "write_trajectory_csv", "read_experiment_csv", "write_svg_plot",
           "BRANCH_HEADER", "FOLD_HEADER"]


class ConfigError(ValueError):
    """Configuration file is missing, malformed or violates an invariant."""


_MODEL_KEYS = ("xi", "beta", "alpha", "nu", "forcing", "omega", "p", "k_sign")
_GEOMETRY_KEYS = ("modulus", "area_moment", "cross_section", "density",
                  "lumped_mass", "length", "stop_position", "mass_position",
                  "gap")
_RESCALING_KEYS = ("mass_force_ratio", "grazing_displacement",
                   "base_amplitude", "grazing_model")
_SOLVER_KEYS = ("mesh_intervals", "collocation_degree", "newton_tol",
                "rel_tol", "abs_tol", "ds", "ds_min", "ds_max")
_OTHER_KEYS = ("output_dir",)


@dataclass
class RunConfig:
    """Validated configuration shared by the CLI subcommands."""

    params: ModelParams = field(default_factory=ModelParams)
    geometry: BeamGeometry = None
    rescaling: Rescaling = None
    mesh_intervals: int = 100
    collocation_degree: int = 4
    newton_tol: float = 1e-10
    rel_tol: float = 1e-8
    abs_tol: float = 1e-10
    ds: float = 0.01
    ds_min: float = 1e-5
    ds_max: float = 0.05
    output_dir: str = "runs"

    def mesh(self):
        return Mesh.uniform(self.mesh_intervals, self.collocation_degree)

    def step_controls(self):
        return StepControls(ds=self.ds, ds_min=self.ds_min,
                            ds_max=self.ds_max,
                            corrector_tol=self.newton_tol)

    def ivp_settings(self):
        return IvpSettings(rel_tol=self.rel_tol, abs_tol=self.abs_tol)

    def resolved_output_dir(self):
        return os.environ.get("IMPACT_OUT_DIR", self.output_dir)


def parse_config(path):
    """Read a ``key = value`` file into a validated :class:`RunConfig`.

    Unknown keys, unreadable values and invariant violations raise
    :class:`ConfigError` naming the offending key and line.
    """
    try:
        with open(path, "r", encoding="utf-8") as fh:
            lines = fh.readlines()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path!r}: {exc}") from exc

    raw = {}
    for lineno, line in enumerate(lines, start=1):
        text = line.split("#", 1)[0].strip()
        if not text:
            continue
        if "=" not in text:
            raise ConfigError(f"{path}:{lineno}: expected 'key = value', "
                              f"got {line.strip()!r}")
        key, value = (part.strip() for part in text.split("=", 1))
        if key in raw:
            raise ConfigError(f"{path}:{lineno}: duplicate key {key!r}")
        raw[key] = (value, lineno)

    known = set(_MODEL_KEYS) | set(_GEOMETRY_KEYS) | set(_RESCALING_KEYS) \
        | set(_SOLVER_KEYS) | set(_OTHER_KEYS)
    for key, (_, lineno) in raw.items():
        if key not in known:
            raise ConfigError(f"{path}:{lineno}: unknown key {key!r}")

    def number(key, cast=float):
        value, lineno = raw.pop(key)
        try:
            return cast(value)
        except ValueError as exc:
            raise ConfigError(
                f"{path}:{lineno}: cannot parse {key} = {value!r}") from exc

    config = RunConfig()
    model_kwargs = {k: number(k) for k in _MODEL_KEYS if k in raw}
    try:
        config.params = ModelParams(**model_kwargs)
    except ValueError as exc:
        raise ConfigError(f"{path}: {exc}") from exc

    geo_kwargs = {k: number(k) for k in _GEOMETRY_KEYS if k in raw}
    if geo_kwargs:
        missing = sorted(set(_GEOMETRY_KEYS) - set(geo_kwargs))
        if missing:
            raise ConfigError(f"{path}: geometry needs all of "
                              f"{_GEOMETRY_KEYS}; missing {missing}")
        try:
            config.geometry = BeamGeometry(**geo_kwargs)
        except ValueError as exc:
            raise ConfigError(f"{path}: {exc}") from exc

    res_kwargs = {k: number(k) for k in _RESCALING_KEYS if k in raw}
    if res_kwargs:
        try:
            config.rescaling = Rescaling(**res_kwargs)
        except ValueError as exc:
            raise ConfigError(f"{path}: {exc}") from exc

    for key in _SOLVER_KEYS:
        if key in raw:
            cast = int if key in ("mesh_intervals", "collocation_degree") \
                else float
            setattr(config, key, number(key, cast))
    if "output_dir" in raw:
        config.output_dir = raw.pop("output_dir")[0]
    return config


# ---------------------------------------------------------------------------
# CSV emission and ingestion
# ---------------------------------------------------------------------------

BRANCH_HEADER = ("index,omega,forcing,i_l,p,max_abs_x1,max_abs_a_l,"
                 "stability,is_fold")
FOLD_HEADER = "index,param1_name,param1,param2_name,param2,max_abs_x1"
TRAJECTORY_HEADER = "t,x1,x2"
EXPERIMENT_HEADER = "omega,i_l,amplitude"


def _fmt(value):
    return format(float(value), ".17g")


def write_branch_csv(path, branch, rescaling=None):
    """Emit one branch in the fixed branch schema."""
    rescaling = rescaling or branch.rescaling
    ratio = rescaling.displacement_ratio if rescaling is not None else 1.0
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(BRANCH_HEADER + "\n")
        for i, pt in enumerate(branch.points):
            pr = pt.orbit.params if pt.orbit is not None else None
            omega = pr.omega if pr else float("nan")
            forcing = pr.forcing if pr else float("nan")
            p = pr.p if pr else float("nan")
            a_l = pt.amplitude_scaled if pt.amplitude_scaled is not None \
                else pt.amplitude * ratio
            fh.write(",".join([
                str(i), _fmt(omega), _fmt(forcing), _fmt(forcing * ratio),
                _fmt(p), _fmt(pt.amplitude), _fmt(a_l),
                "+1" if pt.stable else "-1",
                "1" if pt.is_fold else "0"]) + "\n")


def read_branch_csv(path):
    """Read a branch CSV back into a dict of numpy columns."""
    with open(path, "r", encoding="utf-8") as fh:
        header = fh.readline().strip()
        if header != BRANCH_HEADER:
            raise ConfigError(f"{path}: unexpected branch header {header!r}")
        names = header.split(",")
        rows = [line.strip().split(",") for line in fh if line.strip()]
    return {name: np.array([float(row[k]) for row in rows])
            for k, name in enumerate(names)}


def write_fold_curve_csv(path, curve):
    """Emit a two-parameter fold locus in the fixed schema."""
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(FOLD_HEADER + "\n")
        for i in range(curve.param1.size):
            fh.write(",".join([
                str(i), curve.parameter1, _fmt(curve.param1[i]),
                curve.parameter2, _fmt(curve.param2[i]),
                _fmt(curve.amplitudes[i])]) + "\n")


def write_trajectory_csv(path, trajectory):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(TRAJECTORY_HEADER + "\n")
        for t, x1, x2 in zip(trajectory.times, trajectory.states[0],
                             trajectory.states[1]):
            fh.write(f"{_fmt(t)},{_fmt(x1)},{_fmt(x2)}\n")


def read_experiment_csv(path):
    """Ingest an experimental sweep (omega, i_l, amplitude) with validation.

    Malformed rows are reported together with their line numbers; valid
    rows must be finite with omega > 0, i_l >= 0 and amplitude >= 0.
    """
    try:
        with open(path, "r", encoding="utf-8") as fh:
            lines = fh.readlines()
    except OSError as exc:
        raise ConfigError(f"cannot read data file {path!r}: {exc}") from exc
    rows = []
    bad = []
    start = 0
    if lines and lines[0].strip().replace(" ", "") == EXPERIMENT_HEADER:
        start = 1
    for lineno, line in enumerate(lines[start:], start=start + 1):
        text = line.strip()
        if not text:
            continue
        parts = text.split(",")
        try:
            if len(parts) != 3:
                raise ValueError("expected 3 columns")
            omega, i_l, amplitude = (float(p) for p in parts)
            if not (np.isfinite(omega) and np.isfinite(i_l)
                    and np.isfinite(amplitude)):
                raise ValueError("non-finite value")
            if omega <= 0.0 or i_l < 0.0 or amplitude < 0.0:
                raise ValueError("violates omega>0, i_l>=0, amplitude>=0")
        except ValueError as exc:
            bad.append(f"line {lineno}: {exc}")
            continue
        rows.append((omega, i_l, amplitude))
    if bad:
        raise ConfigError(f"{path}: malformed rows: " + "; ".join(bad))
    out = np.array(rows, dtype=float).reshape(-1, 3)
    return {"omega": out[:, 0], "i_l": out[:, 1], "amplitude": out[:, 2]}


# ---------------------------------------------------------------------------
# SVG plotting
# ---------------------------------------------------------------------------

def _nice_ticks(lo, hi, target=6):
    if not np.isfinite(lo) or not np.isfinite(hi) or hi <= lo:
        return [lo]
    span = hi - lo
    raw = span / target
    mag = 10.0 ** np.floor(np.log10(raw))
    step = 10.0 * mag
    for mult in (1.0, 2.0, 2.5, 5.0, 10.0):
        if raw <= mult * mag:
            step = mult * mag
            break
    first = np.ceil(lo / step) * step
    ticks = []
    t = first
    while t <= hi + 1e-12 * span:
        ticks.append(round(t, 12))
        t += step
    return ticks


def write_svg_plot(path, x, y, stability=None, fold_mask=None, x_label="x",
                   y_label="y", width=640, height=480, title=None):
    """Render one curve to a standalone SVG.

    Segments with negative stability are dashed, folds get filled circle
    markers; data order is preserved and the output is deterministic for
    identical input.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.size == 0:
        raise ValueError("no data to plot")
    margin_l, margin_r, margin_t, margin_b = 62, 18, 30, 46
    plot_w = width - margin_l - margin_r
    plot_h = height - margin_t - margin_b
    x_lo, x_hi = float(np.min(x)), float(np.max(x))
    y_lo, y_hi = float(np.min(y)), float(np.max(y))
    if x_hi == x_lo:
        x_lo, x_hi = x_lo - 0.5, x_hi + 0.5
    if y_hi == y_lo:
        y_lo, y_hi = y_lo - 0.5, y_hi + 0.5
    x_lo, x_hi = (x_lo - 0.03 * (x_hi - x_lo), x_hi + 0.03 * (x_hi - x_lo))
    y_lo, y_hi = (y_lo - 0.05 * (y_hi - y_lo), y_hi + 0.05 * (y_hi - y_lo))

    def sx(v):
        return margin_l + (v - x_lo) / (x_hi - x_lo) * plot_w

    def sy(v):
        return margin_t + (y_hi - v) / (y_hi - y_lo) * plot_h

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" '
        f'height="{height}" viewBox="0 0 {width} {height}">',
        f'<rect x="0" y="0" width="{width}" height="{height}" fill="white"/>',
        f'<rect x="{margin_l}" y="{margin_t}" width="{plot_w}" '
        f'height="{plot_h}" fill="none" stroke="black" stroke-width="1"/>',
    ]
    for t in _nice_ticks(x_lo, x_hi):
        px = sx(t)
        parts.append(f'<line x1="{px:.2f}" y1="{margin_t + plot_h}" '
                     f'x2="{px:.2f}" y2="{margin_t + plot_h + 5}" '
                     f'stroke="black"/>')
        parts.append(f'<text x="{px:.2f}" y="{margin_t + plot_h + 18}" '
                     f'font-size="11" text-anchor="middle">{t:g}</text>')
    for t in _nice_ticks(y_lo, y_hi):
        py = sy(t)
        parts.append(f'<line x1="{margin_l - 5}" y1="{py:.2f}" '
                     f'x2="{margin_l}" y2="{py:.2f}" stroke="black"/>')
        parts.append(f'<text x="{margin_l - 8}" y="{py + 4:.2f}" '
                     f'font-size="11" text-anchor="end">{t:g}</text>')
    parts.append(f'<text x="{margin_l + plot_w / 2:.2f}" y="{height - 10}" '
                 f'font-size="13" text-anchor="middle">{x_label}</text>')
    parts.append(f'<text x="16" y="{margin_t + plot_h / 2:.2f}" '
                 f'font-size="13" text-anchor="middle" '
                 f'transform="rotate(-90 16 {margin_t + plot_h / 2:.2f})">'
                 f'{y_label}</text>')
    if title:
        parts.append(f'<text x="{margin_l + plot_w / 2:.2f}" y="20" '
                     f'font-size="14" text-anchor="middle">{title}</text>')

    if stability is None:
        stability = np.ones_like(x)
    stability = np.asarray(stability)
    k = 0
    while k < x.size:
        j = k
        while j + 1 < x.size and stability[j + 1] == stability[k]:
            j += 1
        seg = slice(k, min(j + 2, x.size))  # share a point for continuity
        pts = " ".join(f"{sx(a):.3f},{sy(b):.3f}"
                       for a, b in zip(x[seg], y[seg]))
        dash = ' stroke-dasharray="6,4"' if stability[k] < 0 else ""
        parts.append(f'<polyline points="{pts}" fill="none" stroke="black" '
                     f'stroke-width="1.4"{dash}/>')
        k = j + 1
    if fold_mask is not None:
        mask = np.asarray(fold_mask, dtype=bool)
        for xi, yi in zip(x[mask], y[mask]):
            parts.append(f'<circle cx="{sx(xi):.3f}" cy="{sy(yi):.3f}" '
                         f'r="4" fill="dimgray"/>')
    parts.append("</svg>")
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(parts) + "\n")


# ---------------------------------------------------------------------------
# CLI
# ---------------------------------------------------------------------------

def _cmd_estimate(args):
    config = parse_config(args.config)
    if config.geometry is None:
        raise ConfigError("estimate needs the beam geometry keys in the "
                          "config file")
    geo = config.geometry
    print(f"natural frequency f = "
          f"{model.estimate_natural_frequency(geo):.4g} Hz")
    print(f"free tip stiffness k1 = "
          f"{model.estimate_tip_stiffness(geo):.6g} N/m")
    print(f"contact tip stiffness k2 = "
          f"{model.estimate_tip_stiffness(geo, contact=True):.6g} N/m")
    print(f"stiffness ratio alpha = {model.estimate_alpha(geo):.4g}")
    return 0


def _cmd_simulate(args):
    config = parse_config(args.config)
    traj = integrate(np.array([args.x1, args.x2]), (0.0, args.t_end),
                     config.params, config.ivp_settings())
    write_trajectory_csv(args.out, traj)
    print(f"wrote {traj.times.size} samples to {args.out}")
    return 0


def _cmd_freq_response(args):
    config = parse_config(args.config)
    if args.param != "omega":
        raise ConfigError("frequency responses sweep the 'omega' parameter")
    out_dir = os.path.dirname(args.out)
    if out_dir:
        os.makedirs(out_dir, exist_ok=True)
    branch = frequency_response(config.params, (args.minimum, args.maximum),
                                mesh=config.mesh(),
                                step=config.step_controls(),
                                rescaling=config.rescaling)
    write_branch_csv(args.out, branch, config.rescaling)
    print(f"branch: {len(branch.points)} points, {len(branch.folds)} folds "
          f"-> {args.out}")
    for fold in branch.folds:
        print(f"fold at omega = {fold.parameter:.8g}, "
              f"amplitude = {fold.amplitude:.8g}")
    return 0


def _cmd_fold_curve(args):
    config = parse_config(args.config)
    branch = frequency_response(config.params,
                                (args.omega_min, args.omega_max),
                                mesh=config.mesh(),
                                step=config.step_controls(),
                                rescaling=config.rescaling)
    if not branch.folds:
        print("no folds found on the frequency response", file=sys.stderr)
        return 1
    if not 0 <= args.fold_index < len(branch.folds):
        raise ConfigError(f"fold index {args.fold_index} out of range "
                          f"(found {len(branch.folds)} folds)")
    curve = continue_fold_curve(branch.folds[args.fold_index], args.param2,
                                (args.minimum, args.maximum),
                                rescaling=config.rescaling,
                                step=config.step_controls())
    out_dir = os.path.dirname(args.out)
    if out_dir:
        os.makedirs(out_dir, exist_ok=True)
    write_fold_curve_csv(args.out, curve)
    print(f"fold curve: {curve.param1.size} records, "
          f"{len(curve.cusps)} cusps -> {args.out}")
    for c1, c2 in curve.cusps:
        print(f"cusp at {curve.parameter1} = {c1:.6g}, "
              f"{curve.parameter2} = {c2:.6g}")
    return 0


def _cmd_isola_scan(args):
    config = parse_config(args.config)
    values = [float(v) for v in args.il.split(",") if v.strip()]
    reports = detect_isola(config.params, config.rescaling, values,
                           mesh=config.mesh())
    for rep in reports:
        print(f"i_l = {rep.forcing_reported:.6g}: {rep.classification} "
              f"({rep.detail})")
    return 0


def _cmd_scenario(args):
    from .scenarios import run_scenario
    result = run_scenario(args.name, output_dir=args.out)
    status = "PASS" if result["passed"] else "FAIL"
    print(f"scenario {args.name}: {status} -> {result['output_dir']}")
    for check in result["checks"]:
        mark = "ok  " if check["passed"] else "FAIL"
        print(f"  [{mark}] {check['name']}: expected {check['expected']}, "
              f"observed {check['observed']}")
    return 0 if result["passed"] else 1


def _cmd_overlay(args):
    from .scenarios import overlay_experiment
    data = read_experiment_csv(args.data)
    report = overlay_experiment(args.result, data)
    print(json.dumps(report, indent=2, sort_keys=True))
    return 0


def _cmd_plot(args):
    with open(args.infile, "r", encoding="utf-8") as fh:
        names = fh.readline().strip().split(",")
        rows = [line.strip().split(",") for line in fh if line.strip()]

    def column(name):
        k = names.index(name)
        return np.array([float(r[k]) for r in rows])

    if args.x not in names or args.y not in names:
        raise ConfigError(f"columns {args.x!r}/{args.y!r} not found in "
                          f"{args.infile} (have {names})")
    stability = None
    folds = None
    if args.style == "solid-dashed-by:stability" and "stability" in names:
        stability = column("stability")
    if "is_fold" in names:
        folds = column("is_fold") > 0.5
    write_svg_plot(args.out, column(args.x), column(args.y),
                   stability=stability, fold_mask=folds,
                   x_label=args.x, y_label=args.y)
    print(f"wrote {args.out}")
    return 0


def _build_parser():
    parser = argparse.ArgumentParser(
        prog="impactbeam",
        description="Continuation analysis of the smoothed impacting "
                    "cantilever oscillator")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("estimate", help="physical estimates from geometry")
    p.add_argument("--config", required=True)
    p.set_defaults(func=_cmd_estimate)

    p = sub.add_parser("simulate", help="adaptive time integration")
    p.add_argument("--config", required=True)
    p.add_argument("--t-end", type=float, default=100.0, dest="t_end")
    p.add_argument("--x1", type=float, default=0.0)
    p.add_argument("--x2", type=float, default=0.0)
    p.add_argument("--out", default="trajectory.csv")
    p.set_defaults(func=_cmd_simulate)

    p = sub.add_parser("freq-response", help="one-parameter branch")
    p.add_argument("--config", required=True)
    p.add_argument("--param", default="omega")
    p.add_argument("--min", type=float, required=True, dest="minimum")
    p.add_argument("--max", type=float, required=True, dest="maximum")
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_freq_response)

    p = sub.add_parser("fold-curve", help="two-parameter fold locus")
    p.add_argument("--config", required=True)
    p.add_argument("--param2", required=True, choices=["p", "forcing", "i_l"])
    p.add_argument("--min", type=float, required=True, dest="minimum")
    p.add_argument("--max", type=float, required=True, dest="maximum")
    p.add_argument("--omega-min", type=float, default=0.2)
    p.add_argument("--omega-max", type=float, default=3.5)
    p.add_argument("--fold-index", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_fold_curve)

    p = sub.add_parser("isola-scan", help="classify isola topology")
    p.add_argument("--config", required=True)
    p.add_argument("--il", required=True,
                   help="comma-separated reported forcing values")
    p.set_defaults(func=_cmd_isola_scan)

    p = sub.add_parser("scenario", help="run a canned scenario")
    p.add_argument("--name", required=True)
    p.add_argument("--out", default=None)
    p.set_defaults(func=_cmd_scenario)

    p = sub.add_parser("overlay", help="compare a result with experiment")
    p.add_argument("--result", required=True)
    p.add_argument("--data", required=True)
    p.set_defaults(func=_cmd_overlay)

    p = sub.add_parser("plot", help="render a CSV to SVG")
    p.add_argument("--in", required=True, dest="infile")
    p.add_argument("--out", required=True)
    p.add_argument("--x", required=True)
    p.add_argument("--y", required=True)
    p.add_argument("--style", default=None)
    p.set_defaults(func=_cmd_plot)
    return parser


def cli(argv=None):
    """Run the CLI; returns the process exit status."""
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return exc.code if exc.code is not None else 2
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:   # solver and I/O failures: one-line diagnostic
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


def main():
    sys.exit(cli())


if __name__ == "__main__":
    main()
