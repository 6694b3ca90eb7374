"""Command-line front end: solve, stoch, mc, oracle.

Reads a JSON system description (schema_version 1), runs the requested
analysis, and writes a CSV time series plus a JSON manifest that
records every resolved parameter, seed, and version needed to
reproduce the run.  Exit codes: 0 success, 1 usage or config error,
2 numeric failure, 3 verification failure.
"""

import argparse
import dataclasses
import json
import math
import os
import sys
import tempfile

import numpy as np
import scipy

from . import __version__
from .bpf import (make_basis, project_function, project_bivariate,
                  delta_spectral, white_noise_covariance)
from .dosys import system_from_dict, system_to_dict
from .detsolve import solve, solve_ivp_shifted
from .stochsolve import (StochasticForcing, tensor_cubature,
                         propagate_moments, variance_series)
from . import oracles

SCHEMA_VERSION = 1
_ORACLE_NAMES = ("impulse1", "variance3", "h2norm4", "ml")


# ---------------------------------------------------------------------------
# config loading

class ConfigError(ValueError):
    """Problem with the run configuration (maps to exit code 1)."""


def _load_config(path):
    try:
        with open(path, "r", encoding="utf-8") as fh:
            cfg = json.load(fh)
    except OSError as e:
        raise ConfigError(f"cannot read {path}: {e}") from e
    except json.JSONDecodeError as e:
        raise ConfigError(f"{path} is not valid JSON: {e}") from e
    if not isinstance(cfg, dict):
        raise ConfigError(f"{path}: top level must be an object")
    ver = cfg.get("schema_version")
    if ver != SCHEMA_VERSION:
        raise ConfigError(f"{path}: schema_version must be {SCHEMA_VERSION}, got {ver!r}")
    return cfg


def _build_system(cfg, quad_points=None):
    try:
        sysm = system_from_dict(cfg)
    except (ValueError, TypeError, KeyError) as e:
        raise ConfigError(f"bad system description: {e}") from e
    if quad_points is not None:
        def bump(t):
            return dataclasses.replace(t, quad_points=quad_points) \
                if t.kind == "distributed" else t
        sysm = dataclasses.replace(
            sysm,
            lhs_terms=tuple(bump(t) for t in sysm.lhs_terms),
            rhs_terms=tuple(bump(t) for t in sysm.rhs_terms))
    return sysm


def _resolve_horizon(cfg, args):
    h = args.horizon if args.horizon is not None else cfg.get("horizon")
    if h is None:
        raise ConfigError("no horizon: set 'horizon' in the config or pass --horizon")
    h = float(h)
    if not (np.isfinite(h) and h > 0):
        raise ConfigError(f"horizon must be positive and finite, got {h!r}")
    return h


def _table_fn(spec, xkey, ykey):
    x = np.asarray(spec[xkey], dtype=float)
    y = np.asarray(spec[ykey], dtype=float)
    if x.ndim != 1 or x.shape != y.shape or x.size < 2:
        raise ConfigError(f"table needs matching 1-D '{xkey}'/'{ykey}' arrays, length >= 2")
    if np.any(np.diff(x) <= 0):
        raise ConfigError(f"table '{xkey}' values must be strictly increasing")
    return lambda t: np.interp(t, x, y)


def _input_spectral(cfg, basis):
    """Deterministic input block -> spectral coefficients."""
    spec = cfg.get("input", {"form": "delta"})
    form = spec.get("form")
    if form == "delta":
        return delta_spectral(basis)
    if form == "constant":
        value = float(spec.get("value", 1.0))
        return project_function(lambda t: np.full_like(t, value, dtype=float), basis)
    if form == "table":
        return project_function(_table_fn(spec, "t", "u"), basis)
    raise ConfigError(f"unknown input form {form!r} (expected delta|constant|table)")


def _mean_fn(spec):
    form = spec.get("form")
    if form == "constant":
        value = float(spec.get("value", 0.0))
        return lambda t: np.full_like(np.asarray(t, dtype=float), value)
    if form == "table":
        return _table_fn(spec, "t", "u")
    raise ConfigError(f"unknown forcing mean form {form!r} (expected constant|table)")


def _kernel_fn(spec):
    """Covariance block -> (kernel callable or None, white intensity or None)."""
    form = spec.get("form")
    if form == "white":
        q = float(spec.get("intensity", 1.0))
        if q < 0:
            raise ConfigError(f"white intensity must be nonnegative, got {q!r}")
        return None, q
    if form == "sinc":
        var = float(spec.get("variance", 1.0))
        width = float(spec.get("width", 2.0 * math.pi))
        if var < 0 or width <= 0:
            raise ConfigError("sinc covariance needs variance >= 0 and width > 0")
        return (lambda t1, t2: var * np.sinc((t1 - t2) / width)), None
    if form == "table":
        t = np.asarray(spec["t"], dtype=float)
        k = np.asarray(spec["k"], dtype=float)
        if t.ndim != 1 or k.shape != (t.size, t.size):
            raise ConfigError("table covariance needs 1-D 't' and square 'k' of matching size")
        from scipy.interpolate import RegularGridInterpolator
        interp = RegularGridInterpolator((t, t), k, bounds_error=False, fill_value=None)

        def kernel(t1, t2):
            tt1, tt2 = np.broadcast_arrays(np.asarray(t1, float), np.asarray(t2, float))
            pts = np.stack([tt1.ravel(), tt2.ravel()], axis=-1)
            return interp(pts).reshape(tt1.shape)

        return kernel, None
    raise ConfigError(f"unknown covariance form {form!r} (expected white|sinc|table)")


def _forcing_blocks(cfg):
    spec = cfg.get("forcing")
    if not isinstance(spec, dict) or "mean" not in spec or "covariance" not in spec:
        raise ConfigError("stochastic runs need a 'forcing' block with 'mean' and 'covariance'")
    return _mean_fn(spec["mean"]), _kernel_fn(spec["covariance"])


# ---------------------------------------------------------------------------
# output

def _atomic_write(path, text):
    """Write text to path via a temp file; no partial files on failure."""
    d = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=d, prefix=".tmp-", suffix="~")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        try:
            os.unlink(tmp)
        except OSError:
            pass
        raise


def _csv_text(header, columns):
    """Locale-independent CSV: dot decimal, LF endings, blank for None."""
    lines = [",".join(header)]
    n = len(columns[0])
    for i in range(n):
        cells = []
        for col in columns:
            v = col[i]
            cells.append("" if v is None else repr(float(v)))
        lines.append(",".join(cells))
    return "\n".join(lines) + "\n"


def _default_output(config_path, command):
    stem = os.path.splitext(os.path.basename(config_path))[0]
    return f"{stem}.{command}.csv"


def _manifest_path(output):
    stem = output[:-4] if output.endswith(".csv") else output
    return stem + ".manifest.json"


def _write_outputs(output, header, columns, manifest):
    _atomic_write(output, _csv_text(header, columns))
    _atomic_write(_manifest_path(output), json.dumps(manifest, indent=2) + "\n")


def _base_manifest(command, config_path, cfg, sysm, flags):
    resolved = dict(cfg)
    resolved.update(system_to_dict(sysm))  # quad-point overrides made visible
    return {
        "command": command,
        "config_path": os.path.abspath(config_path),
        "schema_version": SCHEMA_VERSION,
        "resolved_config": resolved,
        "flags": flags,
        "versions": {
            "dorder": __version__,
            "numpy": np.__version__,
            "scipy": scipy.__version__,
            "python": "%d.%d.%d" % sys.version_info[:3],
        },
    }


# ---------------------------------------------------------------------------
# verification

def _verify_spec(cfg, kinds):
    spec = cfg.get("verify")
    if not isinstance(spec, dict) or "kind" not in spec:
        raise ConfigError("--verify needs a 'verify' block with a 'kind' in the config")
    if spec["kind"] not in kinds:
        raise ConfigError(
            f"verify kind {spec['kind']!r} not usable here (expected one of {sorted(kinds)})")
    return spec


def _verify_impulse(spec, times, y):
    lo, hi = spec.get("window", [0.05, float(times[-1])])
    tol = float(spec.get("tol_abs", 5e-3))
    oracle_col = [None] * len(times)
    err_col = [None] * len(times)
    worst = 0.0
    for i, t in enumerate(times):
        if lo <= t <= hi:
            ref = oracles.analytic_impulse_example1(t)
            oracle_col[i] = ref
            err_col[i] = abs(y[i] - ref)
            worst = max(worst, err_col[i])
    report = {"kind": "impulse_integral", "window": [lo, hi], "tol_abs": tol,
              "max_abs_error": worst, "pass": bool(worst <= tol)}
    return report, [("oracle", oracle_col), ("abs_error", err_col)]


def _verify_gl(spec, cfg, sysm, horizon, times, y):
    n_grid = int(spec.get("n_grid", 1024))
    tol = float(spec.get("tol_abs", 1e-2))
    h = horizon / n_grid
    grid = (np.arange(n_grid) + 1) * h
    input_spec = cfg.get("input", {"form": "delta"})
    if input_spec.get("form") == "delta":
        u = np.zeros(n_grid)
        u[0] = 1.0 / h  # unit-area pulse in the first step
    elif input_spec.get("form") == "constant":
        u = np.full(n_grid, float(input_spec.get("value", 1.0)))
    else:
        u = _table_fn(input_spec, "t", "u")(grid)
    y0 = float(cfg.get("initial", 0.0))
    if y0 != 0.0:
        # same shift as the spectral solver: march x = y - y0 from rest,
        # absorbing the order-zero LHS coefficient into the forcing
        c = sum(t.coeff for t in sysm.lhs_terms if t.kind == "point" and t.order == 0.0)
        (rhs_term,) = sysm.rhs_terms
        u = u - c * y0 / rhs_term.coeff
    ref_full = y0 + oracles.gl_solve(sysm, u, h)
    idx = np.clip(np.round(np.asarray(times) / h).astype(int) - 1, 0, n_grid - 1)
    ref = ref_full[idx]
    worst = float(np.max(np.abs(np.asarray(y) - ref)))
    report = {"kind": "gl_stepper", "n_grid": n_grid, "tol_abs": tol,
              "max_abs_error": worst, "pass": bool(worst <= tol)}
    return report, [("oracle", list(ref)), ("abs_error", list(np.abs(np.asarray(y) - ref)))]


def _verify_ml_variance(spec, times, variance):
    lo, hi = spec.get("window", [0.5, float(times[-1])])
    tol = float(spec.get("tol_rel", 0.02))
    a1 = float(spec.get("a1", 1.0))
    a2 = float(spec.get("a2", 1.0))
    alpha1 = float(spec.get("alpha1", 0.75))
    alpha2 = float(spec.get("alpha2", 1.0))
    oracle_col = [None] * len(times)
    err_col = [None] * len(times)
    worst = 0.0
    for i, t in enumerate(times):
        if lo <= t <= hi:
            ref = oracles.variance_double_integrator(t, a1, a2, alpha1, alpha2)
            oracle_col[i] = ref
            err_col[i] = abs(variance[i] - ref) / abs(ref)
            worst = max(worst, err_col[i])
    report = {"kind": "ml_variance", "window": [lo, hi], "tol_rel": tol,
              "max_rel_error": worst, "pass": bool(worst <= tol)}
    return report, [("oracle_variance", oracle_col), ("rel_error", err_col)]


def _verify_h2(spec, sysm, times, variance):
    t_min = float(spec.get("t_min", 4.5))
    tol = float(spec.get("tol_rel", 0.05))
    mask = np.asarray(times) >= t_min
    if not np.any(mask):
        raise ConfigError(f"h2_plateau: no block midpoints at or after t_min={t_min}")
    plateau = float(np.mean(np.asarray(variance)[mask]))
    ref = oracles.steady_state_variance_frequency(sysm)
    rel = abs(plateau - ref) / abs(ref)
    report = {"kind": "h2_plateau", "t_min": t_min, "tol_rel": tol,
              "plateau": plateau, "reference": ref, "rel_error": rel,
              "pass": bool(rel <= tol)}
    return report, []


def _verify_refinement(spec, sysm, basis, forcing, mean, variance):
    tol = float(spec.get("tol_rel", 1e-3))
    bumped = dataclasses.replace(
        sysm,
        random_params=tuple(dataclasses.replace(p, quad_order=p.quad_order + 2)
                            for p in sysm.random_params))
    grid = tensor_cubature(bumped.random_params)
    r = propagate_moments(bumped, basis, forcing, grid)
    v = np.array([vi for _, vi in variance_series(r, basis.midpoints())])
    dm = float(np.max(np.abs(r.mean.coeffs - mean)) / max(np.max(np.abs(mean)), 1e-300))
    dv = float(np.max(np.abs(v - variance)) / max(np.max(np.abs(variance)), 1e-300))
    report = {"kind": "colloc_refinement", "tol_rel": tol,
              "mean_rel_change": dm, "variance_rel_change": dv,
              "pass": bool(dm <= tol and dv <= tol)}
    return report, []


# ---------------------------------------------------------------------------
# subcommands

def cmd_solve(args):
    """Deterministic response: CSV columns t,y at block midpoints."""
    try:
        cfg = _load_config(args.config)
        sysm = _build_system(cfg, args.quad_points)
        horizon = _resolve_horizon(cfg, args)
        verify_spec = None
        if args.verify:
            verify_spec = _verify_spec(cfg, {"impulse_integral", "gl_stepper"})
    except ConfigError as e:
        print(f"error: {e}", file=sys.stderr)
        return 1

    output = args.output or _default_output(args.config, "solve")
    try:
        basis = make_basis(args.n_basis, horizon)
        forcing = _input_spectral(cfg, basis)
        if "initial" in cfg:
            y = solve_ivp_shifted(sysm, float(cfg["initial"]), forcing)
        else:
            y = solve(sysm, forcing)
        times = basis.midpoints()
        header = ["t", "y"]
        columns = [list(times), list(y.coeffs)]
        report = None
        if verify_spec is not None:
            if verify_spec["kind"] == "impulse_integral":
                report, extra = _verify_impulse(verify_spec, times, y.coeffs)
            else:
                report, extra = _verify_gl(verify_spec, cfg, sysm, horizon, times, y.coeffs)
            for name, col in extra:
                header.append(name)
                columns.append(col)
    except ConfigError as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    except Exception as e:
        print(f"error: {type(e).__name__}: {e}", file=sys.stderr)
        return 2

    manifest = _base_manifest("solve", args.config, cfg, sysm, {
        "n_basis": args.n_basis, "horizon": horizon,
        "quad_points": args.quad_points, "output": output, "verify": bool(args.verify),
    })
    if report is not None:
        manifest["verify"] = report
    _write_outputs(output, header, columns, manifest)
    if report is not None and not report["pass"]:
        print(f"verification FAILED: {json.dumps(report)}", file=sys.stderr)
        return 3
    return 0


def cmd_stoch(args):
    """Collocation moments: CSV columns t,mean,variance at block midpoints."""
    try:
        cfg = _load_config(args.config)
        sysm = _build_system(cfg, args.quad_points)
        horizon = _resolve_horizon(cfg, args)
        mean_fn, (kernel, white_q) = _forcing_blocks(cfg)
        verify_spec = None
        if args.verify:
            verify_spec = _verify_spec(
                cfg, {"ml_variance", "h2_plateau", "colloc_refinement"})
    except ConfigError as e:
        print(f"error: {e}", file=sys.stderr)
        return 1

    output = args.output or _default_output(args.config, "stoch")
    try:
        basis = make_basis(args.n_basis, horizon)
        mean_sv = project_function(mean_fn, basis)
        if white_q is not None:
            cov_sm = white_noise_covariance(basis, white_q)
        else:
            cov_sm = project_bivariate(kernel, basis)
        forcing = StochasticForcing(mean_sv, cov_sm)
        grid = tensor_cubature(sysm.random_params) if sysm.random_params else None
        r = propagate_moments(sysm, basis, forcing, grid)
        times = basis.midpoints()
        variance = np.array([v for _, v in variance_series(r, times)])
        header = ["t", "mean", "variance"]
        columns = [list(times), list(r.mean.coeffs), list(variance)]
        report = None
        if verify_spec is not None:
            kind = verify_spec["kind"]
            if kind == "ml_variance":
                report, extra = _verify_ml_variance(verify_spec, times, variance)
            elif kind == "h2_plateau":
                report, extra = _verify_h2(verify_spec, sysm, times, variance)
            else:
                report, extra = _verify_refinement(
                    verify_spec, sysm, basis, forcing, r.mean.coeffs, variance)
            for name, col in extra:
                header.append(name)
                columns.append(col)
    except ConfigError as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    except Exception as e:
        print(f"error: {type(e).__name__}: {e}", file=sys.stderr)
        return 2

    manifest = _base_manifest("stoch", args.config, cfg, sysm, {
        "n_basis": args.n_basis, "horizon": horizon,
        "quad_points": args.quad_points, "output": output, "verify": bool(args.verify),
    })
    if report is not None:
        manifest["verify"] = report
    _write_outputs(output, header, columns, manifest)
    if report is not None and not report["pass"]:
        print(f"verification FAILED: {json.dumps(report)}", file=sys.stderr)
        return 3
    return 0


def cmd_mc(args):
    """Monte Carlo moments: CSV columns t,mean,variance,mean_stderr,variance_stderr."""
    try:
        cfg = _load_config(args.config)
        sysm = _build_system(cfg, None)
        horizon = _resolve_horizon(cfg, args)
        mean_fn, (kernel, white_q) = _forcing_blocks(cfg)
        if args.samples < 2:
            raise ConfigError(f"--samples must be >= 2, got {args.samples}")
        if args.n_grid < 1:
            raise ConfigError(f"--n-grid must be >= 1, got {args.n_grid}")
    except ConfigError as e:
        print(f"error: {e}", file=sys.stderr)
        return 1

    output = args.output or _default_output(args.config, "mc")
    try:
        forcing = oracles.ForcingModel(mean_fn=mean_fn, kernel=kernel,
                                       white_intensity=white_q)
        r = oracles.mc_moments(sysm, forcing, horizon, args.n_grid,
                               args.samples, args.seed, halton=args.halton)
        header = ["t", "mean", "variance", "mean_stderr", "variance_stderr"]
        columns = [list(r.times), list(r.mean), list(r.variance),
                   list(r.se_mean), list(r.se_variance)]
    except ConfigError as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    except Exception as e:
        print(f"error: {type(e).__name__}: {e}", file=sys.stderr)
        return 2

    manifest = _base_manifest("mc", args.config, cfg, sysm, {
        "n_grid": args.n_grid, "horizon": horizon, "samples": args.samples,
        "seed": args.seed, "halton": bool(args.halton), "output": output,
    })
    _write_outputs(output, header, columns, manifest)
    return 0


def _example4_system():
    from .dosys import DensityTerm, DOSystem
    return DOSystem(
        (DensityTerm("lhs", "derivative", 1.0, "point", order=2),
         DensityTerm("lhs", "derivative", 10.0, "distributed", lower=0.8015, upper=0.8893),
         DensityTerm("lhs", "derivative", 1.0, "point", order=0)),
        (DensityTerm("rhs", "derivative", 1.0, "point", order=0),))


def cmd_oracle(args):
    """Print reference values: ml A B Z | impulse1 T... | variance3 T... | h2norm4."""
    name = args.name
    vals = args.args
    try:
        if name == "ml":
            if len(vals) != 3:
                raise ConfigError("usage: oracle ml ALPHA BETA Z")
            out = [oracles.mittag_leffler(float(vals[0]), float(vals[1]), float(vals[2]))]
        elif name == "impulse1":
            if not vals:
                raise ConfigError("usage: oracle impulse1 T [T ...]")
            out = [oracles.analytic_impulse_example1(float(t)) for t in vals]
        elif name == "variance3":
            if len(vals) not in (1, 5):
                raise ConfigError("usage: oracle variance3 T [A1 A2 ALPHA1 ALPHA2]")
            extra = [float(v) for v in vals[1:]] or [1.0, 1.0, 0.75, 1.0]
            out = [oracles.variance_double_integrator(float(vals[0]), *extra)]
        elif name == "h2norm4":
            if vals:
                raise ConfigError("usage: oracle h2norm4 (no arguments)")
            out = [oracles.steady_state_variance_frequency(_example4_system())]
        else:
            raise ConfigError(
                f"unknown oracle {name!r}; available: {', '.join(_ORACLE_NAMES)}")
    except (ConfigError, ValueError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    except Exception as e:
        print(f"error: {type(e).__name__}: {e}", file=sys.stderr)
        return 2
    for v in out:
        print(repr(float(v)))
    return 0


# ---------------------------------------------------------------------------
# parser

def _add_common(p):
    p.add_argument("config", help="JSON system description")
    p.add_argument("--horizon", type=float, default=None,
                   help="time horizon (overrides the config)")
    p.add_argument("--output", default=None,
                   help="CSV output path (default: <config stem>.<command>.csv)")


def build_parser():
    parser = argparse.ArgumentParser(
        prog="dorder",
        description="Distributed-order system analysis on block pulse bases.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("solve", help="deterministic response")
    _add_common(p)
    p.add_argument("--n-basis", type=int, default=512, help="block count (default 512)")
    p.add_argument("--quad-points", type=int, default=None,
                   help="order-quadrature points per distributed term (default 3)")
    p.add_argument("--verify", action="store_true",
                   help="run the config's verify block; violations exit 3")
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("stoch", help="collocation moments")
    _add_common(p)
    p.add_argument("--n-basis", type=int, default=512, help="block count (default 512)")
    p.add_argument("--quad-points", type=int, default=None,
                   help="order-quadrature points per distributed term (default 3)")
    p.add_argument("--verify", action="store_true",
                   help="run the config's verify block; violations exit 3")
    p.set_defaults(func=cmd_stoch)

    p = sub.add_parser("mc", help="Monte Carlo moments")
    _add_common(p)
    p.add_argument("--n-grid", type=int, default=512, help="time steps (default 512)")
    p.add_argument("--samples", type=int, default=10000, help="sample count (default 10000)")
    p.add_argument("--seed", type=int, default=12345, help="random seed (default 12345)")
    p.add_argument("--halton", action="store_true",
                   help="scrambled Halton stream for parameter draws")
    p.set_defaults(func=cmd_mc)

    p = sub.add_parser("oracle", help="print reference values")
    p.add_argument("name", help="|".join(_ORACLE_NAMES))
    p.add_argument("args", nargs="*", help="oracle arguments")
    p.set_defaults(func=cmd_oracle)

    return parser


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return 0 if e.code in (0, None) else 1
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
