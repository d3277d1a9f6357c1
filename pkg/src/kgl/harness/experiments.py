"""The verification experiments: gradient bound, rigidity trend, slab/minimal
contrast and the identity suite.

Each experiment reads a :class:`Config`, runs the solver pipeline and returns an
:class:`ExperimentReport`.  Verdicts only assert the inequality direction;
slack is reported as data.  A row is ``unmet`` when a hypothesis (region
membership, parameter admissibility) fails and ``inconclusive`` when the
solver did not converge; only rows whose hypotheses all held can ``fail``.
"""
from __future__ import annotations

import csv
import math
import re
import warnings
from pathlib import Path

import numpy as np

from ..errors import (
    ConfigError,
    ExistenceRadiusError,
    ParameterError,
    RegionViolationError,
    ResolutionWarning,
    SolverError,
)
from ..estimates import EstimateInputs, beta_min, constant_chain, in_region, region_ceiling
from ..geometry import ConstantRho, EuclideanProfile, make_radial, rho_bounds, ricci_ambient_lower_bound
from ..graph_operator import (
    GraphFunction,
    cmc_residual,
    intrinsic_laplacian_identity,
    residual_form_agreement,
)
from ..mesh import PolarMesh
from ..solver import radial_residual, solve_ball, solve_radial
from .config import Config, build_geometry
from .report import FAIL, INCONCLUSIVE, PASS, UNMET, ExperimentReport

CONSTANT_COLUMNS = ["alpha", "beta", "big_c", "k0", "ell", "c_r", "c0", "a_bar", "k_exp", "d0", "d1", "d", "log_d"]
BOUND_COLUMNS = [
    "R", "H", "u_p", "grad_p", "sup_u", "D", "D_global", "slack", "in_region", "converged",
    "iterations", "residual", "defect",
] + CONSTANT_COLUMNS + ["verdict", "note"]


# --------------------------------------------------------------------------
# boundary data
# --------------------------------------------------------------------------
def boundary_family(spec, radius, ceiling=None):
    """theta -> boundary values for one of the fixed families.

    zero | constant(c) | tilt(a) | bump(a, w) | ceiling(frac) | bump_ceiling(frac, w)

    bump is a cos^2 profile of height a and half-width w measured in arclength
    on the boundary circle, centred at theta = 0; the *_ceiling variants take
    their height as a fraction of the smallest region ceiling on the circle.
    """
    m = re.match(r"^\s*([a-z_]+)\s*(?:\((.*)\))?\s*$", spec)
    if not m:
        raise ConfigError(f"boundary: cannot parse {spec!r}")
    name = m.group(1)
    try:
        args = [float(a) for a in m.group(2).split(",")] if m.group(2) else []
    except ValueError:
        raise ConfigError(f"boundary: non-numeric argument in {spec!r}") from None

    def need(k):
        if len(args) != k:
            raise ConfigError(f"boundary: {name} takes {k} argument(s)")

    if name in ("ceiling", "bump_ceiling"):
        if ceiling is None:
            raise ConfigError(f"boundary: {name} needs alpha, beta and a numeric C")
    if name == "zero":
        need(0)
        return lambda t: np.zeros_like(t)
    if name == "constant":
        need(1)
        return lambda t: np.full_like(t, args[0])
    if name == "tilt":
        need(1)
        return lambda t: args[0] * np.cos(t)
    if name in ("bump", "bump_ceiling"):
        need(2)
        height = args[0] * (ceiling if name == "bump_ceiling" else 1.0)
        half_width = args[1]

        def bump(t):
            s = radius * np.abs(np.angle(np.exp(1j * t)))
            return np.where(s < half_width, height * np.cos(0.5 * np.pi * s / half_width) ** 2, 0.0)

        return bump
    if name == "ceiling":
        need(1)
        return lambda t: np.full_like(t, args[0] * ceiling)
    raise ConfigError(f"boundary: unknown family {name!r}")


# --------------------------------------------------------------------------
# field dumps
# --------------------------------------------------------------------------
FIELD_COLUMNS = ["r", "theta", "u", "W", "residual", "defect"]


def write_fields(u: GraphFunction, h_mean, path):
    """Per-node CSV (r, theta, u, W, residual, defect); NaN where undefined."""
    res = cmc_residual(u, h_mean, form="flux")
    defect = intrinsic_laplacian_identity(u, h_mean).defect
    mesh = u.mesh
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(FIELD_COLUMNS)
        for i in range(mesh.n_r + 1):
            for j in range(1 if i == 0 else mesh.n_theta):
                w.writerow(
                    [f"{mesh.r[i]:.12g}", f"{mesh.theta[j]:.12g}"]
                    + [f"{x:.12g}" for x in (u.values[i, j], u.w[i, j], res[i, j], defect[i, j])]
                )
    return Path(path)


def write_radial_fields(sol, path):
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["r", "u", "uprime", "flux"])
        for row in zip(sol.r, sol.u, sol.uprime, sol.flux):
            w.writerow([f"{x:.12g}" for x in row])
    return Path(path)


def read_fields(path):
    """(r, theta, u) arrays from a field dump; theta is 0 for radial dumps."""
    try:
        with Path(path).open() as fh:
            rows = list(csv.DictReader(fh))
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from None
    if not rows or "r" not in rows[0] or "u" not in rows[0]:
        raise ConfigError(f"{path}: expected a field dump with r and u columns")
    r = np.array([float(x["r"]) for x in rows])
    t = np.array([float(x.get("theta", 0.0) or 0.0) for x in rows])
    u = np.array([float(x["u"]) for x in rows])
    return r, t, u


# --------------------------------------------------------------------------
# shared pieces
# --------------------------------------------------------------------------
def _region_params(cfg: Config):
    alpha = cfg.get_float("alpha", 2.0)
    beta = cfg.get_str("beta", "auto")
    big_c = cfg.get_str("C", "auto")
    return alpha, beta, big_c


def ceiling_from_config(cfg: Config, g, radius, h_mean=0.0):
    """Smallest region ceiling on B_radius for a numeric C, else None."""
    alpha, beta_s, c_s = _region_params(cfg)
    if c_s == "auto":
        return None
    rb = rho_bounds(g, radius)
    beta = _resolve_beta(beta_s, g.dim_m, h_mean, rb)
    return float(region_ceiling(rb.rho_sup, alpha, beta, _resolve_c(c_s, alpha, beta, rb, 0.0)))


def _resolve_beta(beta, dim, h_mean, rb):
    if beta == "auto":
        bmin = beta_min(dim, h_mean, rb)
        return bmin if bmin > 0 else 1.0
    try:
        return float(beta)
    except ValueError:
        raise ConfigError(f"beta: expected a number or auto, got {beta!r}") from None


def _resolve_c(big_c, alpha, beta, rb, sup_u):
    """C = auto puts the lowest ceiling over the ball 0.01 above max(sup u, 0)."""
    if big_c == "auto":
        return math.log(alpha * rb.rho_sup) + alpha * beta * max(sup_u, 0.0) + 0.01
    try:
        return float(big_c)
    except ValueError:
        raise ConfigError(f"C: expected a number or auto, got {big_c!r}") from None


def _solve(cfg: Config, g, h_mean, radius, boundary):
    """2D solve (or radial solve when solver = radial) returning (u, converged, iterations, residual, note)."""
    n_r = cfg.get_int("mesh.n_r", 128)
    n_t = cfg.get_int("mesh.n_theta", 64)
    if cfg.get_str("solver", "ball") == "radial":
        sol = solve_radial(g, h_mean, radius, u_center=0.0)
        mesh = PolarMesh(radius, n_r, n_t)
        vals = np.repeat(sol.at(mesh.r)[:, None], n_t, axis=1)
        res = radial_residual(g, sol, h_mean)
        return GraphFunction(g, mesh, vals), True, 0, res, "radial"
    note = ""
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always", ResolutionWarning)
        try:
            u, rep = solve_ball(g, h_mean, radius, boundary, n_r=n_r, n_theta=n_t)
        except SolverError as exc:
            return None, False, exc.report.iterations, exc.report.residual_linf, "no convergence"
    if any(issubclass(w.category, ResolutionWarning) for w in caught):
        note = "resolution warning"
    return u, True, rep.iterations, rep.residual_linf, note


def _shift_to(u: GraphFunction, target):
    """Vertical translation along the Killing field (maps solutions to solutions)."""
    if target is None:
        return u
    return GraphFunction(u.geometry, u.mesh, u.values + (target - u.center_value))


def _bound_row(cfg, g, radius, h_mean, boundary_spec, u_target, ceiling_hint=None):
    """Solve one instance and evaluate the gradient bound on it."""
    dim = g.dim_m
    rb = rho_bounds(g, radius)
    k0 = g.curvature_bound(radius)
    ell = cfg.get_float("ell") if cfg.has("ell") else ricci_ambient_lower_bound(g, radius)
    alpha, beta_s, c_s = _region_params(cfg)
    beta = _resolve_beta(beta_s, dim, h_mean, rb)
    ceil_for_bc = None
    if c_s != "auto":
        ceil_for_bc = float(np.min(region_ceiling(rb.rho_sup, alpha, beta, float(c_s))))
    elif ceiling_hint is not None:
        ceil_for_bc = ceiling_hint
    g_solve = build_geometry(cfg, radius) if g.mode == "grid2d" else g
    bfun = boundary_family(boundary_spec, radius, ceil_for_bc)
    u, ok, its, res, note = _solve(cfg, g_solve, h_mean, radius, bfun)
    row = dict(R=radius, H=h_mean, alpha=alpha, beta=beta, k0=k0, ell=ell, converged=ok, iterations=its,
               residual=res, note=note)
    if not ok:
        row.update(verdict=INCONCLUSIVE)
        return row, None, None
    u = _shift_to(u, u_target)
    sup_u = float(np.max(u.values))
    big_c = _resolve_c(c_s, alpha, beta, rb, sup_u)
    grad_p = u.gradient_at_pole()
    try:
        inside = in_region(u.values, u.rho, alpha, beta, big_c)
    except RegionViolationError:
        inside = False
    u_p = u.center_value
    defect = intrinsic_laplacian_identity(u, h_mean).linf if cfg.get_str("solver", "ball") == "ball" else None
    row.update(u_p=u_p, grad_p=grad_p, sup_u=sup_u, big_c=big_c, in_region=inside, defect=defect)
    try:
        inp = EstimateInputs(alpha=alpha, big_c=big_c, beta=beta, h_mean=h_mean, u_at_p=max(u_p, 0.0),
                             k0=k0, ell=ell, radius=radius, rho_bounds=rb, dim=dim)
        consts = constant_chain(inp)
    except ParameterError as exc:
        row.update(verdict=UNMET, note=(note + "; " if note else "") + str(exc))
        return row, None, u
    row.update({k: getattr(consts, k) for k in ("c_r", "c0", "a_bar", "k_exp", "d0", "d1", "d", "log_d")})
    row.update(D=consts.d, D_global=consts.d_inf, slack=grad_p / consts.d)
    if not inside or u_p < 0:
        row.update(verdict=UNMET, note=(note + "; " if note else "") + "graph leaves the region")
    else:
        row.update(verdict=PASS if grad_p <= consts.d else FAIL)
    return row, consts, u


def _u_target(cfg):
    v = cfg.get_str("u_p", "free")
    return None if v == "free" else float(v)


# --------------------------------------------------------------------------
# experiments
# --------------------------------------------------------------------------
def exp_gradient_bound(cfg: Config) -> ExperimentReport:
    """|grad u(p)| <= D on every solved instance that lies inside the region."""
    g = build_geometry(cfg, cfg.get_floats("radii", [1.0])[0])
    h_mean = cfg.get_float("H", 0.0)
    rep = ExperimentReport("gradient-bound", cfg.digest(), BOUND_COLUMNS)
    rep.inputs.update(H=h_mean, boundary=cfg.get_str("boundary", "zero"), u_p=cfg.get_str("u_p", "free"))
    for radius in cfg.get_floats("radii", [1.0]):
        row, _, _ = _bound_row(cfg, g, radius, h_mean, cfg.get_str("boundary", "zero"), _u_target(cfg))
        rep.add_row(**row)
        rep.verdict(f"bound_R={radius:g}", row["verdict"], row.get("note", ""))
    return rep


def exp_rigidity(cfg: Config) -> ExperimentReport:
    """Slice recovery trend for H <= 0 over Ric_M >= 0 as R grows."""
    radii = cfg.get_floats("radii", [2.0, 4.0, 8.0, 16.0])
    g = build_geometry(cfg, radii[0])
    h_mean = cfg.get_float("H", 0.0)
    if h_mean > 0:
        raise ConfigError("rigidity concerns H <= 0")
    if any(g.curvature_bound(r) > 0 for r in radii) or not (g.k0 is None or g.k0 == 0):
        raise ConfigError("rigidity needs nonnegative curvature of M (K0 = 0)")
    if g.mode == "radial" and not isinstance(g.fm, EuclideanProfile):
        raise ConfigError("rigidity runs over the Euclidean profile")
    spec = cfg.get_str("boundary", "bump_ceiling(0.9, 2)")
    alpha, beta_s, c_s = _region_params(cfg)
    if c_s == "auto" and "ceiling" in spec:
        raise ConfigError("ceiling-scaled boundary data need a numeric C")
    rep = ExperimentReport("rigidity", cfg.digest(), BOUND_COLUMNS)
    rep.inputs.update(H=h_mean, boundary=spec)
    for radius in radii:
        row, consts, _ = _bound_row(cfg, g, radius, h_mean, spec, _u_target(cfg))
        if consts is not None and row["verdict"] == PASS and row["grad_p"] > consts.d_inf:
            row["verdict"] = FAIL
            row["note"] = "exceeds global D"
        rep.add_row(**row)
        rep.verdict(f"bound_R={radius:g}", row["verdict"], row.get("note", ""))
    ok_rows = [r for r in rep.rows if r["verdict"] == PASS]
    if len(ok_rows) == len(rep.rows) and len(ok_rows) >= 2:
        grads = [r["grad_p"] for r in ok_rows]
        centers = [abs(r["u_p"]) for r in ok_rows]
        tol = 1e-12
        rep.verdict("grad_nonincreasing", PASS if all(b <= a + tol for a, b in zip(grads, grads[1:])) else FAIL,
                    " ".join(f"{x:.6g}" for x in grads))
        rep.verdict("center_nonincreasing", PASS if all(b <= a + tol for a, b in zip(centers, centers[1:])) else FAIL,
                    " ".join(f"{x:.6g}" for x in centers))
        dg = [r["D_global"] for r in ok_rows]
        rep.verdict("global_D_constant", PASS if max(dg) - min(dg) <= 1e-12 * max(dg) else FAIL, f"{dg[0]:.12g}")
        rep.inputs["D_ratio_first_last"] = ok_rows[0]["D"] / ok_rows[-1]["D"]
    else:
        rep.verdict("trend", UNMET, "some radii did not produce a valid instance")
    return rep


SLAB_COLUMNS = ["H", "R", "solved", "r_star", "r_star_expected", "u_at_R", "residual", "verdict"]


def exp_slab_minimal(cfg: Config) -> ExperimentReport:
    """Nonzero H: finite existence radius; H = 0: every radius solves."""
    g = build_geometry(cfg)
    if g.mode != "radial" or not isinstance(g.fm, EuclideanProfile) or not isinstance(g.rho_profile, ConstantRho):
        raise ConfigError("slab-minimal runs on the Euclidean profile with constant rho")
    radii = cfg.get_floats("radii", [1.0, 2.0, 4.0, 8.0, 16.0, 32.0, 64.0])
    tol = cfg.get_float("r_star_tol", 1e-6)
    rep = ExperimentReport("slab-minimal", cfg.digest(), SLAB_COLUMNS)
    for h_mean in cfg.get_floats("h_values", [0.1, 0.5, 2.0, 0.0]):
        if h_mean != 0:
            r_max = max(radii)
            expected = 1.0 / abs(h_mean)
            try:
                sol = solve_radial(g, h_mean, r_max)
                rep.add_row(H=h_mean, R=r_max, solved=True, r_star=math.inf, r_star_expected=expected,
                            u_at_R=sol.u[-1], verdict=FAIL)
            except ExistenceRadiusError as exc:
                ok = abs(exc.r_star - expected) <= tol
                rep.add_row(H=h_mean, R=r_max, solved=False, r_star=exc.r_star, r_star_expected=expected,
                            verdict=PASS if ok else FAIL)
            rep.verdict(f"existence_radius_H={h_mean:g}", rep.rows[-1]["verdict"], f"r*={rep.rows[-1]['r_star']:.12g}")
        else:
            for radius in radii:
                sol = solve_radial(g, 0.0, radius, n_samples=257)
                res = radial_residual(g, sol, 0.0)
                rep.add_row(H=0.0, R=radius, solved=True, r_star=math.inf, u_at_R=sol.u[-1], residual=res, verdict=PASS)
            rep.verdict("minimal_all_radii", PASS, f"R up to {max(radii):g}")
    return rep


IDENTITY_COLUMNS = ["check", "n_r", "value", "order", "tolerance", "verdict"]


def _orders(values):
    v = np.asarray(values, dtype=float)
    return np.log2(v[:-1] / v[1:])


def _fit_order(hs, values):
    return float(np.polyfit(np.log(hs), np.log(values), 1)[0])


def random_smooth_field(rng):
    """Cubic polynomial in (x, y) plus one plane wave, coefficients ~ N(0, 0.3^2)."""
    c = rng.normal(scale=0.3, size=10)
    k = rng.uniform(0.5, 2.0)
    phase = rng.uniform(0, 2 * np.pi)
    ang = rng.uniform(0, 2 * np.pi)

    def field(r, t):
        x, y = r * np.cos(t), r * np.sin(t)
        poly = (c[0] + c[1] * x + c[2] * y + c[3] * x * x + c[4] * x * y + c[5] * y * y
                + c[6] * x**3 + c[7] * x * x * y + c[8] * x * y * y)
        return poly + c[9] * np.sin(k * (x * np.cos(ang) + y * np.sin(ang)) + phase)

    return field


def residual_agreement_study(g, fields, grids=(64, 128, 256), radius=1.0, h_mean=0.3):
    """Per-field (gap on each grid, observed order of the last refinement).

    The gap is measured on r >= R/4 (see residual_form_agreement).
    """
    out = []
    for fld in fields:
        gaps = []
        for n in grids:
            mesh = PolarMesh(radius, n, n)
            gaps.append(residual_form_agreement(GraphFunction(g, mesh, mesh.sample(fld)), h_mean).max_difference)
        out.append((gaps, float(_orders(gaps)[-1])))
    return out


def cap_identity_study(grids=(32, 64, 128, 256), h_mean=0.5, radius=1.5):
    """Solve the Euclidean cap problem on each grid; defect and oracle error per grid."""
    g = make_radial()
    sol = solve_radial(g, h_mean, radius, n_samples=1025)
    rows = []
    for n in grids:
        u, rep = solve_ball(g, h_mean, radius, float(sol.u[-1]), n_r=n, n_theta=max(n // 2, 4))
        err = float(np.max(np.abs(u.values - sol.at(u.mesh.r)[:, None])))
        rows.append((n, intrinsic_laplacian_identity(u, h_mean).linf, err, rep.residual_linf))
    return rows


def exp_identity_suite(cfg: Config) -> ExperimentReport:
    """Identity defects on slices and caps, residual-form agreement, Ricci bounds."""
    rep = ExperimentReport("identities", cfg.digest(), IDENTITY_COLUMNS)
    radius = cfg.get_float("identity.R", 1.0)
    g = build_geometry(cfg, radius)

    # slices
    n = cfg.get_int("mesh.n_r", 64) if g.mode == "radial" else g.metric.mesh.n_r
    mesh = PolarMesh(radius, n, cfg.get_int("mesh.n_theta", 64)) if g.mode == "radial" else g.metric.mesh
    height = cfg.get_float("identity.slice_height", 0.25)
    u = GraphFunction(g, mesh, np.full(mesh.shape, height))
    d = intrinsic_laplacian_identity(u, 0.0)
    res = float(np.nanmax(np.abs(cmc_residual(u, 0.0))))
    for name, val in (("slice_defect", d.linf), ("slice_residual", res)):
        ok = val <= 1e-12
        rep.add_row(check=name, n_r=mesh.n_r, value=val, tolerance=1e-12, verdict=PASS if ok else FAIL)
        rep.verdict(name, PASS if ok else FAIL, f"{val:.3e}")

    # caps
    grids = [int(x) for x in cfg.get_floats("identity.grids", [32, 64, 128, 256])]
    cap = cap_identity_study(grids, cfg.get_float("identity.H", 0.5), cfg.get_float("identity.cap_R", 1.5))
    defects = [c[1] for c in cap]
    orders = [None] + list(_orders(defects))
    for (nn, dv, err, _), od in zip(cap, orders):
        rep.add_row(check="cap_defect", n_r=nn, value=dv, order=od)
    fit = _fit_order([1.0 / c[0] for c in cap], defects)
    rep.add_row(check="cap_defect_fit", value=fit, tolerance=1.9, verdict=PASS if fit >= 1.9 else FAIL)
    rep.verdict("cap_defect_order", PASS if fit >= 1.9 else FAIL, f"fitted order {fit:.4f}")

    # random fields
    n_fields = cfg.get_int("identity.n_random", 100)
    rng = np.random.default_rng(cfg.get_int("seed", 0))
    ga = g if g.mode == "radial" else make_radial("hyperbolic", 1.0)
    study = residual_agreement_study(ga, [random_smooth_field(rng) for _ in range(n_fields)])
    worst = min(o for _, o in study)
    const = max(gaps[-1] * 256**2 for gaps, _ in study)  # gap / h^2 on the finest grid, R = 1
    rep.add_row(check="residual_forms_min_order", n_r=256, value=worst, tolerance=1.9,
                verdict=PASS if worst >= 1.9 else FAIL)
    rep.add_row(check="residual_forms_constant", n_r=256, value=const)
    rep.verdict("residual_forms_order", PASS if worst >= 1.9 else FAIL, f"min order {worst:.4f}, C {const:.4g}")

    # Ricci lower bounds
    ell = ricci_ambient_lower_bound(g, radius)
    rep.add_row(check="ricci_L_config", value=ell)
    ell_h = ricci_ambient_lower_bound(make_radial("hyperbolic", 1.0), radius)
    ok = abs(ell_h - 1.0) <= 1e-9
    rep.add_row(check="ricci_L_hyperbolic", value=ell_h, tolerance=1e-9, verdict=PASS if ok else FAIL)
    rep.verdict("ricci_hyperbolic", PASS if ok else FAIL, f"L = {ell_h:.12g}")
    return rep


EXPERIMENTS = {
    "gradient-bound": exp_gradient_bound,
    "rigidity": exp_rigidity,
    "slab-minimal": exp_slab_minimal,
    "identities": exp_identity_suite,
}
