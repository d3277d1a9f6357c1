"""Command line entry point ``kgl``.

Exit codes: 0 pass, 1 assertion failure, 2 hypothesis unmet or inconclusive,
3 configuration error.
"""
from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from ..errors import ConfigError, ExistenceRadiusError, KglError, ParameterError, RegionViolationError, SolverError
from ..estimates import EstimateInputs, constant_chain, in_region
from ..geometry import rho_bounds, ricci_ambient_lower_bound
from ..solver import solve_ball, solve_radial
from .config import build_geometry, load_config, rho_profile
from .experiments import EXPERIMENTS, boundary_family, ceiling_from_config, read_fields, write_fields, write_radial_fields
from .report import EXIT_CONFIG, EXIT_FAIL, EXIT_PASS, EXIT_UNMET, format_value


def _cmd_solve(args):
    cfg = load_config(args.config)
    h_mean = args.H if args.H is not None else cfg.get_float("H", 0.0)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    g = build_geometry(cfg, args.R)
    if args.radial:
        try:
            sol = solve_radial(g, h_mean, args.R, u_center=args.u_center)
        except ExistenceRadiusError as exc:
            print(f"existence radius reached: r* = {exc.r_star:.12g}", file=sys.stderr)
            return EXIT_UNMET
        path = write_radial_fields(sol, out / "fields_radial.csv")
        print(f"u(R) = {sol.u[-1]:.12g}\nwrote {path}")
        return EXIT_PASS
    spec = args.boundary or cfg.get_str("boundary", "zero")
    bfun = boundary_family(spec, args.R, ceiling_from_config(cfg, g, args.R, h_mean))
    try:
        u, rep = solve_ball(g, h_mean, args.R, bfun,
                            n_r=args.n_r or cfg.get_int("mesh.n_r", 128),
                            n_theta=args.n_theta or cfg.get_int("mesh.n_theta", 64))
    except SolverError as exc:
        (out / "solve_report.txt").write_text(exc.report.as_text())
        print(str(exc), file=sys.stderr)
        return EXIT_UNMET
    (out / "solve_report.txt").write_text(rep.as_text())
    path = write_fields(u, h_mean, out / "fields_solution.csv")
    print(rep.as_text() + f"grad_p = {u.gradient_at_pole():.12g}\nwrote {path}")
    return EXIT_PASS


def _cmd_constants(args):
    cfg = load_config(args.config)
    g = build_geometry(cfg, args.R)
    h_mean = args.H if args.H is not None else cfg.get_float("H", 0.0)
    rb = rho_bounds(g, args.R)
    ell = args.ell if args.ell is not None else (cfg.get_float("ell") if cfg.has("ell") else ricci_ambient_lower_bound(g, args.R))
    inp = EstimateInputs(alpha=args.alpha, big_c=args.C, beta=args.beta, h_mean=h_mean, u_at_p=args.up,
                         k0=g.curvature_bound(args.R), ell=ell, radius=args.R, rho_bounds=rb, dim=g.dim_m)
    try:
        consts = constant_chain(inp)
    except ParameterError as exc:
        print(f"parameter error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    rows = dict(alpha=inp.alpha, beta=inp.beta, big_c=inp.big_c, u_p=inp.u_at_p, k0=inp.k0, ell=inp.ell, R=inp.radius,
                rho_sup=rb.rho_sup, grad_rho_sup=rb.grad_rho_sup, rho_inf=rb.rho_inf)
    rows.update(consts.as_dict())
    print("\n".join(f"{k} = {format_value(v)}" for k, v in rows.items()))
    return EXIT_PASS


def _cmd_exp(args):
    cfg = load_config(args.config)
    report = EXPERIMENTS[args.name](cfg)
    paths = report.write(args.out, plot=args.plot)
    print(report.summary_text() + "".join(f"wrote {p}\n" for p in paths), end="")
    return report.exit_code


def _cmd_region_check(args):
    cfg = load_config(args.config)
    alpha = args.alpha if args.alpha is not None else cfg.get_float("alpha", 2.0)
    beta = args.beta if args.beta is not None else cfg.get_float("beta")
    big_c = args.C if args.C is not None else cfg.get_float("C")
    r, theta, u = read_fields(args.solution)
    rho = rho_profile(cfg)(r)
    if cfg.get_str("metric.kind", "radial") == "grid2d":
        amp = cfg.get_float("rho.angular", 0.0)
        rho = rho * (1.0 + amp * r**2 / (1.0 + r**2) * np.cos(theta))
    try:
        inside = in_region(u, rho, alpha, beta, big_c)
    except RegionViolationError as exc:
        print(f"region violation: {exc}", file=sys.stderr)
        return EXIT_FAIL
    print(f"in_region = {format_value(inside)}")
    return EXIT_PASS if inside else EXIT_FAIL


def build_parser():
    p = argparse.ArgumentParser(prog="kgl", description="CMC Killing graphs in warped products.")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("solve", help="solve one Dirichlet or radial problem and dump fields")
    s.add_argument("--config", required=True)
    s.add_argument("--H", type=float)
    s.add_argument("--R", type=float, required=True)
    s.add_argument("--radial", action="store_true", help="use the radial first-integral oracle")
    s.add_argument("--u-center", type=float, default=0.0)
    s.add_argument("--boundary", help="boundary family, e.g. tilt(0.1) (default: config or zero)")
    s.add_argument("--n-r", type=int)
    s.add_argument("--n-theta", type=int)
    s.add_argument("--out", required=True)
    s.set_defaults(func=_cmd_solve)

    c = sub.add_parser("constants", help="print the gradient-estimate constant chain")
    c.add_argument("--config", required=True)
    c.add_argument("--alpha", type=float, required=True)
    c.add_argument("--beta", type=float, required=True)
    c.add_argument("--C", type=float, required=True)
    c.add_argument("--up", type=float, required=True)
    c.add_argument("--R", type=float, required=True)
    c.add_argument("--H", type=float)
    c.add_argument("--ell", type=float)
    c.set_defaults(func=_cmd_constants)

    e = sub.add_parser("exp", help="run a verification experiment")
    e.add_argument("name", choices=sorted(EXPERIMENTS))
    e.add_argument("--config", required=True)
    e.add_argument("--out", required=True)
    e.add_argument("--plot", action="store_true", help="also write plot_<name>.svg (needs matplotlib)")
    e.set_defaults(func=_cmd_exp)

    r = sub.add_parser("region-check", help="check a field dump against the region")
    r.add_argument("--config", required=True)
    r.add_argument("--solution", required=True)
    r.add_argument("--alpha", type=float)
    r.add_argument("--beta", type=float)
    r.add_argument("--C", type=float)
    r.set_defaults(func=_cmd_region_check)
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, ValueError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except KglError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_UNMET


if __name__ == "__main__":
    sys.exit(main())
