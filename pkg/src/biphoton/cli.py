"""Command-line entry point: ``biphoton <command> [options]``.

Every command writes columnar CSV or a JSON object to ``--output`` (stdout by
default).  Exit codes: 0 success, 2 invalid input, 3 numerical failure.
Options may also come from ``--config FILE`` holding ``key = value`` lines
named like the long flags (``c = 35e-6``, ``lambda = 710e-9``); flags given
on the command line win.
"""
from __future__ import annotations

import argparse
import io
import json
import math
import sys
from dataclasses import dataclass

import numpy as np

from .analysis import (
    REFERENCE_MEASUREMENTS,
    TABLE_II_PEAK_COUNTS,
    TABLE_II_POSITIONS,
    ScanModel,
    fit_scan,
    propagate_witness_error,
    read_scan,
    simulate_scan,
    write_scan,
)
from .exceptions import NoSignChangeError, NumericalError
from .optics import (
    DetectionGeometry,
    aperture_convolve,
    default_x_grid,
    displaced_near_field,
    far_field_coincidence,
    near_field_coincidence,
)
from .specfun import DEFAULT_QUADRATURE, QuadratureSpec
from .states import SpdcBiphoton, gaussian_from_p, spdc_from_experiment
from .witness import (
    DEFAULT_CRYSTAL_LENGTH,
    DEFAULT_WAVELENGTH,
    EXPERIMENT_PUMP_WAISTS,
    GAUSSIAN_BOUND,
    Family,
    evaluate_witness,
    sweep,
    violation_interval,
)

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_NUMERICAL = 3

_DEFAULT_FORMAT = {
    "witness": "json",
    "sweep": "csv",
    "interval": "json",
    "distribution": "csv",
    "displace": "csv",
    "simulate": "csv",
    "fit": "json",
    "reproduce-table2": "csv",
}


class UsageError(ValueError):
    pass


@dataclass
class RunConfig:
    crystal_length: float = DEFAULT_CRYSTAL_LENGTH
    wavelength: float = DEFAULT_WAVELENGTH
    pump_waist: float | None = None
    p: float | None = None
    gaussian: bool = False
    sigma_minus: float = 1.0
    quadrature: QuadratureSpec = DEFAULT_QUADRATURE
    output: str | None = None
    fmt: str = "csv"

    def __post_init__(self):
        for name in ("crystal_length", "wavelength", "sigma_minus"):
            v = getattr(self, name)
            if not (math.isfinite(v) and v > 0):
                raise UsageError(f"{name} must be positive, got {v!r}")
        for name in ("pump_waist", "p"):
            v = getattr(self, name)
            if v is not None and not (math.isfinite(v) and v > 0):
                raise UsageError(f"{name} must be positive, got {v!r}")
        if self.fmt not in ("csv", "json"):
            raise UsageError(f"unknown format {self.fmt!r}")

    def state(self):
        if self.gaussian:
            if self.pump_waist is not None:
                raise UsageError("--c does not apply to a Gaussian state")
            if self.p is None:
                raise UsageError("a Gaussian state needs --p")
            return gaussian_from_p(self.p, self.sigma_minus)
        if (self.pump_waist is None) == (self.p is None):
            raise UsageError("give exactly one of --c or --p")
        if self.pump_waist is not None:
            return spdc_from_experiment(self.pump_waist, self.crystal_length, self.wavelength)
        return spdc_from_experiment(1.0, self.crystal_length, self.wavelength).with_p(self.p)

    def spdc_state(self) -> SpdcBiphoton:
        st = self.state()
        if not isinstance(st, SpdcBiphoton):
            raise UsageError("this command needs a down-conversion state (--c or --p)")
        return st


# ---------------------------------------------------------------- rendering

def _num(v):
    if v is None:
        return ""
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def _csv(header, rows) -> str:
    buf = io.StringIO()
    buf.write(",".join(header) + "\n")
    for row in rows:
        buf.write(",".join(_num(v) for v in row) + "\n")
    return buf.getvalue()


def _json_safe(obj):
    if isinstance(obj, dict):
        return {k: _json_safe(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_json_safe(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_json_safe(v) for v in obj.tolist()]
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        return v if math.isfinite(v) else None
    return obj


def _json(obj) -> str:
    return json.dumps(_json_safe(obj), indent=2) + "\n"


def _table(header, rows, fmt) -> str:
    if fmt == "csv":
        return _csv(header, rows)
    return _json({"columns": list(header), "rows": [list(r) for r in rows]})


# ---------------------------------------------------------------- commands

def cmd_witness(cfg: RunConfig, args) -> str:
    res = evaluate_witness(cfg.state(), cfg.quadrature)
    d = res.as_dict()
    d.pop("w_uncertainty")
    if cfg.fmt == "json":
        return _json(d)
    return _csv(list(d), [list(d.values())])


def cmd_sweep(cfg: RunConfig, args) -> str:
    spdc = sweep(Family.spdc(cfg.crystal_length, cfg.wavelength), args.p_min, args.p_max,
                 args.steps, cfg.quadrature, args.schmidt_points)
    gauss = sweep(Family.gaussian(), args.p_min, args.p_max, args.steps, cfg.quadrature)
    header = ["P", "K_gaussian_1d", "W_gaussian", "K_spdc_1d", "W_spdc"]
    rows = []
    for g, s in zip(gauss, spdc):
        for r in (g, s):
            if r.error:
                print(f"warning: P={r.p!r}: {r.error}", file=sys.stderr)
        rows.append([g.p, g.k_1d, g.w, s.k_1d, s.w])
    return _table(header, rows, cfg.fmt)


def cmd_interval(cfg: RunConfig, args) -> str:
    fam = Family.gaussian() if args.family == "gaussian" else Family.spdc(
        cfg.crystal_length, cfg.wavelength)
    try:
        lo, hi = violation_interval(fam, args.p_lo, args.p_hi, args.coarse_step,
                                    args.tol, cfg.quadrature)
        out = {"family": fam.kind, "p_low": lo, "p_high": hi, "status": "violated"}
    except NoSignChangeError as exc:
        out = {"family": fam.kind, "p_low": None, "p_high": None,
               "status": f"no violation of the Gaussian bound {GAUSSIAN_BOUND}: {exc}"}
    if cfg.fmt == "json":
        return _json(out)
    return _csv(list(out), [list(out.values())])


def _geometry(args) -> DetectionGeometry:
    return DetectionGeometry(args.focal_length, args.slit_width, args.fiber_core)


def _grid(state, plane, geometry, args, fixed):
    if args.halfwidth is None:
        return default_x_grid(state, plane, geometry, args.points, fixed)
    if not args.halfwidth > 0:
        raise UsageError("--halfwidth must be positive")
    center = -fixed
    return np.linspace(center - args.halfwidth, center + args.halfwidth, args.points)


def _plane_density(state, plane, geometry, fixed, grid, args, spec):
    if plane == "far":
        dens = far_field_coincidence(state, geometry, fixed, grid, spec)
        width = geometry.slit_width
    else:
        dens = near_field_coincidence(state, fixed, grid, spec)
        width = geometry.fiber_core_diameter
    return aperture_convolve(dens, width) if args.aperture else dens


def cmd_distribution(cfg: RunConfig, args) -> str:
    state = cfg.spdc_state()
    geometry = _geometry(args)
    grid = _grid(state, args.plane, geometry, args, args.fixed)
    dens = _plane_density(state, args.plane, geometry, args.fixed, grid, args, cfg.quadrature)
    if cfg.fmt == "json":
        return _json({
            "plane": args.plane,
            "p": state.p,
            "fixed_position_m": args.fixed,
            "position_m": dens.axis,
            "density_per_m": dens.density,
        })
    return _csv(["position_m", "density_per_m"], zip(dens.axis.tolist(), dens.density.tolist()))


def _z_values(args, state) -> list[float]:
    if args.z:
        out = []
        for chunk in args.z:
            out.extend(float(v) for v in str(chunk).split(",") if v.strip())
        return out
    half = state.crystal_length / 2
    return [-half, -half / 2, 0.0, half / 2, half]


def cmd_displace(cfg: RunConfig, args) -> str:
    state = cfg.spdc_state()
    geometry = _geometry(args)
    grid = _grid(state, "near", geometry, args, args.fixed)
    rows = []
    blocks = {}
    for z in _z_values(args, state):
        if abs(z) > state.crystal_length:
            raise UsageError(f"|z| = {abs(z)!r} exceeds the crystal length")
        if z == 0.0:
            # no displacement: the undisplaced profile, bit for bit
            dens = near_field_coincidence(state, args.fixed, grid, cfg.quadrature)
        else:
            dens = displaced_near_field(state, z, args.fixed, grid, cfg.quadrature)
        blocks[repr(z)] = dens.density
        rows.extend((z, x, d) for x, d in zip(dens.axis.tolist(), dens.density.tolist()))
    if cfg.fmt == "json":
        return _json({"p": state.p, "fixed_position_m": args.fixed, "position_m": grid,
                      "density_per_m_by_z_m": blocks})
    return _csv(["z_m", "position_m", "density_per_m"], rows)


def cmd_simulate(cfg: RunConfig, args) -> str:
    state = cfg.spdc_state()
    data = simulate_scan(state, args.plane, _geometry(args), args.positions,
                         args.peak_counts, args.seed, args.fixed)
    if cfg.fmt == "json":
        return _json({
            "plane": data.plane,
            "fixed_position_m": data.fixed_conjugate_position,
            "seed": data.integration_seed,
            "position_m": data.positions,
            "counts": data.counts,
        })
    buf = io.StringIO()
    write_scan(buf, data)
    return buf.getvalue()


def cmd_fit(cfg: RunConfig, args) -> str:
    state = cfg.spdc_state()
    try:
        data = read_scan(args.scan)
    except OSError as exc:
        raise UsageError(f"cannot read scan file: {exc}") from exc
    res = fit_scan(data, state, _geometry(args))
    out = res.as_dict()
    if args.truth:
        model = ScanModel(state, data.plane, _geometry(args), data.fixed_conjugate_position)
        out["model_variance"] = model.variance
        out["within_3_sigma"] = bool(abs(res.variance - model.variance) <= 3 * res.variance_sigma)
    if cfg.fmt == "json":
        return _json(out)
    return _csv(list(out), [list(out.values())])


def cmd_reproduce_table2(cfg: RunConfig, args) -> str:
    header = ["c_m", "P", "var_x_given_0_E_m2", "var_x_sigma_m2", "var_q_given_0_E_per_m2",
              "var_q_sigma_per_m2", "W_E", "W_E_sigma", "W_T"]
    rows = []
    for c, (vx, vq) in zip(EXPERIMENT_PUMP_WAISTS, REFERENCE_MEASUREMENTS):
        state = spdc_from_experiment(c, cfg.crystal_length, cfg.wavelength)
        w_e = propagate_witness_error(vq, vx, args.mode)
        w_t = evaluate_witness(state, cfg.quadrature).w
        rows.append([c, state.p, vx[0], vx[1], vq[0], vq[1], w_e.value, w_e.sigma, w_t])
    return _table(header, rows, cfg.fmt)


_COMMANDS = {
    "witness": cmd_witness,
    "sweep": cmd_sweep,
    "interval": cmd_interval,
    "distribution": cmd_distribution,
    "displace": cmd_displace,
    "simulate": cmd_simulate,
    "fit": cmd_fit,
    "reproduce-table2": cmd_reproduce_table2,
}


# ---------------------------------------------------------------- parsing

def _common(parser):
    g = parser.add_argument_group("state")
    g.add_argument("--c", dest="pump_waist", type=float, help="pump waist (m)")
    g.add_argument("--p", dest="p", type=float, help="dimensionless P (instead of --c)")
    g.add_argument("--L", dest="crystal_length", type=float, default=DEFAULT_CRYSTAL_LENGTH,
                   help="crystal length (m)")
    g.add_argument("--lambda", dest="wavelength", type=float, default=DEFAULT_WAVELENGTH,
                   help="down-converted vacuum wavelength (m)")
    g.add_argument("--gaussian", action="store_true", help="use a double-Gaussian state")
    g.add_argument("--sigma-minus", type=float, default=1.0,
                   help="Gaussian difference width (1/m)")
    q = parser.add_argument_group("quadrature")
    q.add_argument("--rtol", type=float, default=DEFAULT_QUADRATURE.relative_tolerance)
    q.add_argument("--atol", type=float, default=DEFAULT_QUADRATURE.absolute_tolerance)
    q.add_argument("--max-subdivisions", type=int, default=DEFAULT_QUADRATURE.max_subdivisions)
    q.add_argument("--truncation-factor", type=float,
                   default=DEFAULT_QUADRATURE.truncation_radius_factor)
    o = parser.add_argument_group("output")
    o.add_argument("--output", "-o", help="output file (default: stdout)")
    o.add_argument("--format", dest="fmt", choices=("csv", "json"))
    parser.add_argument("--config", help="file of 'key = value' option lines")


def _detector(parser):
    parser.add_argument("--focal-length", type=float, default=0.15, help="far-field lens (m)")
    parser.add_argument("--slit-width", type=float, default=50e-6, help="far-field slit (m)")
    parser.add_argument("--fiber-core", type=float, default=4.7e-6, help="near-field fiber (m)")
    parser.add_argument("--fixed", type=float, default=0.0,
                        help="position of the conditioning detector (m)")


def _grid_args(parser):
    parser.add_argument("--points", type=int, default=4096, help="grid points")
    parser.add_argument("--halfwidth", type=float, help="grid half-width (m)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="biphoton", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("witness", help="conditional variances and W for one state")
    _common(p)

    p = sub.add_parser("sweep", help="K and W against P for both families")
    _common(p)
    p.add_argument("--p-min", type=float, default=0.1)
    p.add_argument("--p-max", type=float, default=3.0)
    p.add_argument("--steps", type=int, default=30)
    p.add_argument("--schmidt-points", type=int, default=512)

    p = sub.add_parser("interval", help="range of P with W above the Gaussian bound")
    _common(p)
    p.add_argument("--family", choices=("spdc", "gaussian"), default="spdc")
    p.add_argument("--p-lo", type=float, default=0.05)
    p.add_argument("--p-hi", type=float, default=5.0)
    p.add_argument("--coarse-step", type=float, default=0.05)
    p.add_argument("--tol", type=float, default=1e-3)

    p = sub.add_parser("distribution", help="conditional coincidence profile")
    _common(p)
    _detector(p)
    _grid_args(p)
    p.add_argument("--plane", choices=("near", "far"), required=True)
    p.add_argument("--aperture", action="store_true", help="convolve with the slit/fiber")

    p = sub.add_parser("displace", help="near-field profiles with the crystal displaced")
    _common(p)
    _detector(p)
    _grid_args(p)
    p.add_argument("--z", action="append",
                   help="displacement(s) in m, comma separated or repeated "
                        "(default: -L/2, -L/4, 0, L/4, L/2)")

    p = sub.add_parser("simulate", help="Poisson-sampled coincidence scan")
    _common(p)
    _detector(p)
    p.add_argument("--plane", choices=("near", "far"), required=True)
    p.add_argument("--positions", type=int, default=TABLE_II_POSITIONS)
    p.add_argument("--peak-counts", type=int, default=TABLE_II_PEAK_COUNTS)
    p.add_argument("--seed", type=int, default=0)

    p = sub.add_parser("fit", help="fit a scan file")
    _common(p)
    _detector(p)
    p.add_argument("scan", help="scan file (position_m,counts)")
    p.add_argument("--truth", action="store_true",
                   help="also report the model variance of the given state")

    p = sub.add_parser("reproduce-table2", help="variances, propagated W and theory W")
    _common(p)
    p.add_argument("--mode", choices=("linear", "quadrature"), default="linear",
                   help="error propagation rule (linear sum is the default)")
    return parser


_KEY_ALIASES = {"c": "pump_waist", "l": "crystal_length", "lambda": "wavelength",
                "format": "fmt", "sigma_minus": "sigma_minus"}


def _read_config(path, parser, command) -> dict:
    sub = next(a for a in parser._actions if isinstance(a, argparse._SubParsersAction))
    known = {a.dest: a for a in sub.choices[command]._actions}
    out = {}
    try:
        fh = open(path, encoding="utf-8")
    except OSError as exc:
        raise UsageError(f"cannot read config: {exc}") from exc
    with fh:
        for n, raw in enumerate(fh, 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            key, sep, value = line.partition("=")
            if not sep:
                raise UsageError(f"{path}:{n}: expected 'key = value'")
            key = key.strip().lstrip("-").replace("-", "_")
            dest = _KEY_ALIASES.get(key.lower(), key)
            if dest not in known or dest in ("config", "help", "command"):
                raise UsageError(f"{path}:{n}: unknown option {key!r}")
            action = known[dest]
            value = value.strip()
            if isinstance(action, argparse._StoreTrueAction):
                out[dest] = value.lower() in ("1", "true", "yes", "on")
            elif isinstance(action, argparse._AppendAction):
                out[dest] = [value]
            else:
                conv = action.type or str
                try:
                    out[dest] = conv(value)
                except ValueError as exc:
                    raise UsageError(f"{path}:{n}: bad value for {key!r}: {value!r}") from exc
                if action.choices and out[dest] not in action.choices:
                    raise UsageError(f"{path}:{n}: {key!r} must be one of {action.choices}")
    return out


def _attach_negative_values(argv):
    # argparse only recognizes plain negatives like -1 or -.5 as values, so
    # "--z -4.5e-3" (or a list "-4.5e-3,0") would be read as an unknown flag;
    # rewrite it as "--z=-4.5e-3"
    out = []
    for tok in argv:
        if out and out[-1].startswith("--") and "=" not in out[-1] and tok.startswith("-"):
            try:
                [float(v) for v in tok.split(",")]
            except ValueError:
                pass
            else:
                out[-1] = f"{out[-1]}={tok}"
                continue
        out.append(tok)
    return out


def parse_args(argv=None) -> argparse.Namespace:
    parser = build_parser()
    argv = _attach_negative_values(list(sys.argv[1:] if argv is None else argv))
    args = parser.parse_args(argv)
    if args.config:
        cfg = _read_config(args.config, parser, args.command)
        sub = next(a for a in parser._actions if isinstance(a, argparse._SubParsersAction))
        sub.choices[args.command].set_defaults(**cfg)
        args = parser.parse_args(argv)
    return args


def _run_config(args) -> RunConfig:
    try:
        spec = QuadratureSpec(args.rtol, args.atol, args.max_subdivisions, args.truncation_factor)
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    return RunConfig(
        crystal_length=args.crystal_length,
        wavelength=args.wavelength,
        pump_waist=args.pump_waist,
        p=args.p,
        gaussian=args.gaussian,
        sigma_minus=args.sigma_minus,
        quadrature=spec,
        output=args.output,
        fmt=args.fmt or _DEFAULT_FORMAT[args.command],
    )


def main(argv=None) -> int:
    try:
        args = parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if isinstance(exc.code, int) else EXIT_USAGE
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    try:
        cfg = _run_config(args)
        text = _COMMANDS[args.command](cfg, args)
    except NumericalError as exc:
        print(f"numerical failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except (UsageError, ValueError, TypeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    if cfg.output:
        try:
            with open(cfg.output, "w", encoding="utf-8", newline="\n") as fh:
                fh.write(text)
        except OSError as exc:
            print(f"error: cannot write output: {exc}", file=sys.stderr)
            return EXIT_USAGE
    else:
        try:
            sys.stdout.write(text)
            sys.stdout.flush()
        except BrokenPipeError:
            # reader went away (e.g. piped into head); not an error of ours
            sys.stderr.close()
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
