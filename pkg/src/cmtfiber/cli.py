"""Command-line front end.

Exit codes: 0 success, 2 usage error, 3 configuration error, 4 runtime
error.  Every CSV carries a ``#`` header with the generator version and the
configuration hash; timings go to ``<out>.manifest.json``.
"""

from __future__ import annotations

import argparse
import dataclasses
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .config import Config, ConfigError, load_config, reference_config_path
from .equivalent import (autonomy_diagnostics, enumerate_launches, epsilon_sweep,
                         run_equivalent)
from .gain import OracleError, oracle_agreement
from .integrator import IntegrationError, build_context, initial_state, integrate
from .modes import ModeSolverError, solve_modes, step_count
from .plotting import PlotError, emit_plot, plot_trace
from .reporting import RunManifest, write_table

EXIT_USAGE, EXIT_CONFIG, EXIT_RUNTIME = 2, 3, 4


class UsageError(Exception):
    pass


# -- argument helpers ----------------------------------------------------------------

def _floats(text: str) -> list[float]:
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}")


def _range(text: str) -> list[float]:
    """``start:stop:count`` (inclusive linspace) or a comma list."""
    if ":" not in text:
        return _floats(text)
    try:
        a, b, n = text.split(":")
        return list(np.linspace(float(a), float(b), int(n)))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected start:stop:count, got {text!r}")


def _add_numerics(p: argparse.ArgumentParser, solver=True):
    if solver:
        p.add_argument("--solver", choices=["rk4", "dopri"])
    p.add_argument("--steps-per-beat", type=int)
    p.add_argument("--radial-order", type=int)
    p.add_argument("--angular-points", type=int)


def _config(args) -> Config:
    path = args.config
    # bare names select a packaged reference config unless such a file exists
    if path.lower() in ("tm", "yb") and not Path(path).exists():
        path = reference_config_path(path)
    cfg = load_config(path)
    changes = {}
    for name in ("solver", "steps_per_beat", "radial_order", "angular_points"):
        v = getattr(args, name, None)
        if v is not None:
            key = {"radial_order": "radial_quad_order",
                   "angular_points": "angular_quad_points"}.get(name, name)
            changes[key] = v
    if changes:
        cfg = cfg.replace(numerics=dataclasses.replace(cfg.numerics, **changes))
    return cfg


def _launch(args, cfg):
    fr = getattr(args, "fractions", None)
    if fr is None:
        return None
    if abs(sum(fr) - 1) > 1e-9 or min(fr) < 0:
        raise ConfigError("--fractions must be nonnegative and sum to 1")
    return fr


def _progress(done, total):
    print(f"\r  {done}/{total} launches", end="" if done < total else "\n",
          file=sys.stderr, flush=True)


# -- subcommands -----------------------------------------------------------------

def cmd_modes(args) -> int:
    cfg = _config(args)
    fam = solve_modes(cfg.fiber)
    man = RunManifest("modes", cfg.digest())
    meta = man.header()
    meta["V"] = f"{fam.V:.12g}"
    if fam.M >= 2:
        meta["beat_length_m"] = f"{fam.beat_length:.12g}"
        meta["steps_for_L"] = step_count(cfg.fiber.L, fam.beat_length,
                                         cfg.numerics.steps_per_beat)
    rows = [(m.name, rank, m.i, m.j, m.u, m.w, m.beta, m.beta / cfg.fiber.k_s)
            for rank, m in enumerate(fam, start=1)]
    write_table(args.out, ["mode", "rank", "i", "j", "u", "w", "beta_per_m", "n_eff"],
                rows, meta)
    return 0


def _trace_rows(trace):
    names = ["z_m", "P_pump_W"] + [f"P_{n}_W" for n in trace.mode_names] + ["P_signal_W"]
    data = np.column_stack([trace.z, trace.P_pump, trace.P_mode, trace.P_signal])
    return names, data


def cmd_simulate(args) -> int:
    cfg = _config(args)
    if args.length is not None:
        cfg = Config(dataclasses.replace(cfg.fiber, L=args.length), cfg.dopant,
                     dataclasses.replace(cfg.numerics, L_tilde=None))
    ctx = build_context(cfg)
    y0 = initial_state(ctx, fractions=_launch(args, cfg), P_p0=args.pp0)
    trace = integrate(ctx, y0, target_samples=args.samples)
    man = RunManifest("simulate", cfg.digest(), trace.solver,
                      {"L": trace.n_steps}, {"L": trace.wall_time}, [args.out])
    names, data = _trace_rows(trace)
    write_table(args.out, names, data, man.header())
    if args.plot:
        svg = plot_trace(names, data, title=f"{cfg.fiber.dopant} fiber, L = {cfg.fiber.L:g} m")
        with open(args.plot, "w") as fh:
            fh.write(svg)
        man.outputs.append(args.plot)
    man.write(args.out)
    return 0


def cmd_equivalent(args) -> int:
    cfg = _config(args)
    Lt = args.ltilde if args.ltilde is not None else cfg.numerics.L_tilde
    if Lt is None:
        raise UsageError("--ltilde is required when the config sets no L_tilde")
    if not 0 < Lt <= cfg.fiber.L:
        raise ConfigError(f"L_tilde = {Lt} outside (0, L = {cfg.fiber.L}]")
    run = run_equivalent(cfg, Lt, compare=args.compare,
                         fractions=_launch(args, cfg), P_p0=args.pp0)
    sh = run.short
    man = RunManifest("equivalent", cfg.digest(), sh.solver,
                      {"short": sh.n_steps}, {"short": sh.wall_time}, [args.out])
    names, data = _trace_rows(sh)
    names[0] = "z_tilde_m"
    meta = man.header()
    meta["L_tilde_m"] = format(Lt, ".12g")
    if run.report is not None:
        rep = run.report
        man.n_steps["long"] = run.long.n_steps
        man.wall_time_s["long"] = run.long.wall_time
        meta = man.header()
        meta["L_tilde_m"] = format(Lt, ".12g")
        for n, v in zip(rep.names, rep.max_abs):
            meta[f"max_abs_diff_{n}_W"] = format(v, ".6g")
        meta["relative_error"] = format(rep.relative, ".6g")
        names = names + [f"dP_{n}_W" for n in rep.names]
        data = np.column_stack([data, rep.difference])
    write_table(args.out, names, data, meta)
    if args.plot:
        cols = [k for k, n in enumerate(names) if n.startswith("dP_")] or list(range(1, len(names)))
        svg = plot_trace([names[0]] + [names[k] for k in cols],
                         np.column_stack([data[:, 0], data[:, cols]]),
                         title=f"equivalent fiber, L_tilde = {Lt:g} m")
        with open(args.plot, "w") as fh:
            fh.write(svg)
        man.outputs.append(args.plot)
    man.write(args.out)
    return 0


def cmd_sweep(args) -> int:
    cfg = _config(args)
    ctx = build_context(cfg)
    launches = enumerate_launches(ctx.M, args.increment)
    print(f"sweep: {len(args.pp0)} pump powers x {len(launches)} launches, "
          f"L_tilde = {args.ltilde}", file=sys.stderr)
    res = epsilon_sweep(cfg, args.pp0, args.ltilde, launches=launches, ctx=ctx,
                        progress=None if args.quiet else _progress)
    man = RunManifest("sweep", cfg.digest(), cfg.numerics.solver,
                      {"long": res.n_long}, {}, [args.out])
    meta = man.header()
    meta["launches"] = len(launches)
    meta["failures"] = len(res.failures)
    rows = []
    for i, P in enumerate(res.P_p0):
        for j, Lt in enumerate(res.L_tilde):
            e = res.eps[i, j]
            rows.append((P, Lt, e if np.isfinite(e) else float("nan"),
                         int(res.worst_launch[i, j]), int(np.isfinite(e))))
    write_table(args.out, ["P_p0_W", "L_tilde_m", "eps", "worst_launch", "valid"], rows, meta)
    for f in res.failures:
        print(f"sweep: failed run {f}", file=sys.stderr)
    if args.plot:
        emit_plot(args.out, args.plot, style="grid",
                  title=f"{cfg.fiber.dopant}: max relative power difference")
        man.outputs.append(args.plot)
    man.write(args.out)
    return 0


def cmd_diagnose(args) -> int:
    cfg = _config(args)
    ctx = build_context(cfg)
    y0 = initial_state(ctx, fractions=_launch(args, cfg))
    length = cfg.fiber.L if args.length is None else args.length
    trace = integrate(ctx, y0, length=length, target_samples=args.samples)
    rep = autonomy_diagnostics(trace, ctx)
    names = ["z_m", "irradiance_gap", "irradiance_norm", "mean_gp_per_m", "eta_gp_per_m"]
    cols = [rep.z, rep.irradiance_gap, rep.irradiance_norm, rep.mean_gp, rep.eta_gp]
    for k, n in enumerate(trace.mode_names):
        names += [f"auto_{n}_W_per_m", f"rho_{n}_W_per_m", f"etaK_{n}_W_per_m"]
        cols += [rep.auto[:, k], rep.rho[:, k], rep.eta_K[:, k]]
    man = RunManifest("diagnose", cfg.digest(), trace.solver,
                      {"L": trace.n_steps}, {"L": trace.wall_time}, [args.out])
    meta = man.header()
    meta["rho_relative"] = format(rep.rho_relative, ".6g")
    meta["eta_K_relative"] = format(rep.eta_K_relative, ".6g")
    meta["eta_gp_relative"] = format(rep.eta_gp_relative, ".6g")
    meta["irradiance_relative"] = format(rep.irradiance_relative, ".6g")
    write_table(args.out, names, np.column_stack(cols), meta)
    man.write(args.out)
    return 0


def cmd_gain_check(args) -> int:
    cfg = _config(args)
    agr = oracle_agreement(cfg.dopant, cfg.fiber, samples=args.n, seed=args.seed)
    man = RunManifest("gain-check", cfg.digest())
    meta = man.header()
    meta["max_rel_diff"] = format(agr.max_rel_diff, ".6g")
    meta["max_residual"] = format(float(np.max(agr.residual)), ".6g")
    write_table(args.out, ["I_s_W_m2", "I_p_W_m2", "rel_diff", "residual"],
                np.column_stack([agr.I_s, agr.I_p, agr.rel_diff, agr.residual]), meta)
    return 0


def cmd_plot(args) -> int:
    emit_plot(args.csv, args.out, style=args.style, title=args.title)
    return 0


# -- parser ----------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="cmtfiber", description=__doc__.split("\n")[0])
    p.add_argument("--version", action="version", version=f"cmtfiber {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("modes", help="list guided LP modes and the beat length")
    s.add_argument("--config", required=True)
    s.add_argument("--out", default="-")
    s.set_defaults(func=cmd_modes)

    s = sub.add_parser("simulate", help="integrate the full fiber")
    s.add_argument("--config", required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--length", type=float)
    s.add_argument("--pp0", type=float, help="override launch pump power (W)")
    s.add_argument("--fractions", type=_floats, help="per-mode signal power fractions")
    s.add_argument("--samples", type=int, default=2000, help="approximate output rows")
    s.add_argument("--plot")
    _add_numerics(s)
    s.set_defaults(func=cmd_simulate)

    s = sub.add_parser("equivalent", help="run the equivalent short fiber")
    s.add_argument("--config", required=True)
    s.add_argument("--ltilde", type=float)
    s.add_argument("--compare", action="store_true", help="also run the full fiber")
    s.add_argument("--out", required=True)
    s.add_argument("--pp0", type=float)
    s.add_argument("--fractions", type=_floats)
    s.add_argument("--plot")
    _add_numerics(s)
    s.set_defaults(func=cmd_equivalent)

    s = sub.add_parser("sweep", help="worst-case error grid over P_p0 and L_tilde")
    s.add_argument("--config", required=True)
    s.add_argument("--pp0", type=_range, required=True, help="start:stop:count or list (W)")
    s.add_argument("--ltilde", type=_floats, required=True, help="comma list (m)")
    s.add_argument("--increment", type=float, default=0.1)
    s.add_argument("--out", required=True)
    s.add_argument("--plot")
    s.add_argument("--quiet", action="store_true")
    _add_numerics(s)
    s.set_defaults(func=cmd_sweep)

    s = sub.add_parser("diagnose", help="autonomy diagnostics along a run")
    s.add_argument("--config", required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--length", type=float)
    s.add_argument("--fractions", type=_floats)
    s.add_argument("--samples", type=int, default=200)
    _add_numerics(s)
    s.set_defaults(func=cmd_diagnose)

    s = sub.add_parser("gain-check", help="closed-form populations against the oracle")
    s.add_argument("--config", required=True)
    s.add_argument("--n", type=int, default=1000)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out", default="-")
    s.set_defaults(func=cmd_gain_check)

    s = sub.add_parser("plot", help="render a CSV from this tool as SVG")
    s.add_argument("--csv", required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--style", choices=["auto", "trace", "grid"], default="auto")
    s.add_argument("--title")
    s.set_defaults(func=cmd_plot)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"cmtfiber: usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except FileNotFoundError as exc:
        print(f"cmtfiber: file not found: {exc.filename}", file=sys.stderr)
        return EXIT_CONFIG
    except ConfigError as exc:
        print(f"cmtfiber: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (IntegrationError, ModeSolverError, OracleError, PlotError,
            ValueError, OSError) as exc:
        print(f"cmtfiber: error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
