"""Radial first-integral oracle and a 2D Newton solver for CMC Killing graphs.

Radial graphs u(r) over a rotationally symmetric warped product satisfy

    (J rho u'/W)' = n H J rho,      J = f_M^{n-1},

so with Phi(r) = n H (int_0^r J rho) / (J rho)(r) one has u'/W = Phi and
u' = Phi sqrt(gamma) / sqrt(1 - Phi^2).  No radial graph exists past the
first radius where |Phi| = 1.

The Dirichlet problem on a geodesic ball is solved by Newton's method on the
discrete area functional of :mod:`kgl.graph_operator`, whose Hessian is the
(symmetric positive definite) Newton matrix.
"""
from __future__ import annotations

import math
import time
import warnings
from dataclasses import dataclass, field
from typing import Callable, Optional, Union

import numpy as np
from scipy.integrate import quad
from scipy.interpolate import CubicHermiteSpline
from scipy.optimize import brentq

from .errors import DiscretizationError, ExistenceRadiusError, ResolutionWarning, SolverError
from .geometry import WarpedProduct
from .graph_operator import AreaFunctional, GraphFunction
from .mesh import PolarMesh

TAU_PDE = 1e-10
MAX_HALVINGS = 30
PICARD_AFTER = 3
RESOLUTION_SPREAD = 1.5

_GL_X, _GL_W = np.polynomial.legendre.leggauss(30)


# --------------------------------------------------------------------------
# linear algebra
# --------------------------------------------------------------------------
@dataclass
class CGResult:
    x: np.ndarray
    iterations: int
    converged: bool
    residual_norm: float


def pcg(a, b, x0=None, rtol=1e-12, maxiter=None) -> CGResult:
    """Conjugate gradients with Jacobi preconditioning for SPD ``a``.

    Stops when ||b - a x||_2 <= rtol ||b||_2 (recursive residual).
    """
    b = np.asarray(b, dtype=float)
    n = b.size
    maxiter = maxiter or 20 * n
    diag = a.diagonal()
    if np.any(diag <= 0):
        raise DiscretizationError("matrix has a nonpositive diagonal entry")
    inv_d = 1.0 / diag
    x = np.zeros(n) if x0 is None else np.array(x0, dtype=float)
    r = b - a @ x if x0 is not None else b.copy()
    bnorm = np.linalg.norm(b)
    target = rtol * bnorm
    rnorm = np.linalg.norm(r)
    if rnorm <= target or bnorm == 0.0:
        return CGResult(x, 0, True, rnorm)
    z = inv_d * r
    p = z.copy()
    rz = r @ z
    for k in range(1, maxiter + 1):
        q = a @ p
        pq = p @ q
        if pq <= 0:
            raise DiscretizationError("matrix is not positive definite")
        step = rz / pq
        x += step * p
        r -= step * q
        rnorm = np.linalg.norm(r)
        if rnorm <= target:
            return CGResult(x, k, True, rnorm)
        z = inv_d * r
        rz_new = r @ z
        p = z + (rz_new / rz) * p
        rz = rz_new
    return CGResult(x, maxiter, False, rnorm)


# --------------------------------------------------------------------------
# radial oracle
# --------------------------------------------------------------------------
@dataclass
class RadialSolution:
    r: np.ndarray
    u: np.ndarray
    uprime: np.ndarray
    flux: np.ndarray  # Phi = u'/W
    metadata: dict = field(default_factory=dict)

    @property
    def interpolant(self):
        return CubicHermiteSpline(self.r, self.u, self.uprime)

    def at(self, r):
        """u at arbitrary radii in [0, R] (cubic Hermite through the samples)."""
        return self.interpolant(np.asarray(r, dtype=float))


class _RadialFlux:
    """Phi(r) with the weighted volume int_0^r J rho accumulated panel by panel."""

    def __init__(self, g: WarpedProduct, h_mean, r_nodes):
        self.g = g
        self.h_mean = h_mean
        self.n = g.dim_m
        self.r_nodes = r_nodes
        panels = [self._panel(a, b) for a, b in zip(r_nodes[:-1], r_nodes[1:])]
        self.cum = np.concatenate([[0.0], np.cumsum(panels)])

    def weight(self, r):
        return self.g.fm(r) ** (self.n - 1) * self.g.rho_at(r)

    def _panel(self, a, b):
        if b <= a:
            return 0.0
        t = 0.5 * (b - a) * _GL_X + 0.5 * (a + b)
        return 0.5 * (b - a) * float(np.dot(_GL_W, self.weight(t)))

    def volume(self, r, k):
        """int_0^r J rho for r in panel k = [r_nodes[k], r_nodes[k+1]]."""
        return self.cum[k] + self._panel(self.r_nodes[k], r)

    def phi(self, r, k):
        if self.h_mean == 0:
            return 0.0
        if r < 1e-7:
            # I/(J rho) = r/n + O(r^3)
            return self.h_mean * r
        return self.n * self.h_mean * self.volume(r, k) / float(self.weight(r))

    def slope(self, r, k):
        p = self.phi(r, k)
        return p * math.sqrt(float(self.g.gamma(r))) / math.sqrt(1.0 - p * p)


def solve_radial(g: WarpedProduct, h_mean, radius, u_center=0.0, n_samples=1025, epsabs=1e-12) -> RadialSolution:
    """Exact-to-quadrature radial CMC graph over [0, radius].

    Raises ExistenceRadiusError when |Phi| reaches 1 before ``radius``.
    """
    if g.mode != "radial":
        raise DiscretizationError("solve_radial needs a rotationally symmetric geometry")
    if radius <= 0 or n_samples < 2:
        raise DiscretizationError("need radius > 0 and at least two samples")
    r = np.linspace(0.0, radius, n_samples)
    fl = _RadialFlux(g, h_mean, r)
    phi = np.array([fl.phi(x, min(k, n_samples - 2)) for k, x in enumerate(r)])

    over = np.flatnonzero(np.abs(phi) >= 1.0)
    if over.size:
        k = int(over[0])
        # |Phi| < 1 at r[k-1] (Phi(0) = 0), >= 1 at r[k]
        r_star = brentq(lambda x: abs(fl.phi(x, k - 1)) - 1.0, r[k - 1], r[k], xtol=1e-15, rtol=4 * np.finfo(float).eps)
        raise ExistenceRadiusError(r_star, h_mean)

    u = np.empty_like(r)
    u[0] = u_center
    for k in range(n_samples - 1):
        if h_mean == 0:
            u[k + 1] = u[k]
            continue
        du, _ = quad(fl.slope, r[k], r[k + 1], args=(k,), epsabs=epsabs, epsrel=1e-13, limit=200)
        u[k + 1] = u[k] + du
    gam = g.gamma(r)
    up = phi * np.sqrt(gam) / np.sqrt(1.0 - phi**2)
    meta = {"H": h_mean, "n": g.dim_m, "fm": repr(g.fm), "rho": repr(g.rho_profile), "u_center": u_center}
    return RadialSolution(r=r, u=u, uprime=up, flux=phi, metadata=meta)


def radial_residual(g: WarpedProduct, sol: RadialSolution, h_mean):
    """Max over samples of |Phi - n H int_0^r J rho/(J rho)| with W rebuilt from u'.

    The volume integral is recomputed by adaptive quadrature from 0, independently
    of the panel accumulation used to build the solution.
    """
    n = g.dim_m
    worst = 0.0
    for r, up in zip(sol.r[1:], sol.uprime[1:]):
        w = math.sqrt(float(g.gamma(r)) + up * up)
        jr = float(g.fm(r) ** (n - 1) * g.rho_at(r))
        vol, _ = quad(lambda t: float(g.fm(t) ** (n - 1) * g.rho_at(t)), 0.0, r, epsabs=1e-14, epsrel=1e-13, limit=200)
        worst = max(worst, abs(up / w - n * h_mean * vol / jr))
    return worst


def existence_radius(g: WarpedProduct, h_mean, r_max, n_samples=4097):
    """First radius <= r_max where |Phi| = 1, or math.inf if none."""
    try:
        solve_radial(g, h_mean, r_max, n_samples=n_samples, epsabs=1e-6)
    except ExistenceRadiusError as exc:
        return exc.r_star
    return math.inf


# --------------------------------------------------------------------------
# 2D Dirichlet problem
# --------------------------------------------------------------------------
@dataclass
class SolveReport:
    iterations: int = 0
    residual_linf: float = math.inf
    damping: list = field(default_factory=list)
    h: float = 0.0
    converged: bool = False
    newton_failures: int = 0
    picard_steps: int = 0
    cg_iterations: list = field(default_factory=list)
    residual_history: list = field(default_factory=list)
    max_corner_spread: float = 1.0
    rounding_floor: float = 0.0
    tol_effective: float = TAU_PDE
    seconds: float = 0.0

    def as_text(self):
        rows = [
            ("converged", str(self.converged).lower()),
            ("iterations", self.iterations),
            ("residual_linf", f"{self.residual_linf:.6e}"),
            ("h", f"{self.h:.10g}"),
            ("tol_effective", f"{self.tol_effective:.3e}"),
            ("rounding_floor", f"{self.rounding_floor:.3e}"),
            ("newton_failures", self.newton_failures),
            ("picard_steps", self.picard_steps),
            ("damping", " ".join(f"{t:g}" for t in self.damping)),
            ("cg_iterations", " ".join(str(c) for c in self.cg_iterations)),
            ("max_corner_spread", f"{self.max_corner_spread:.6g}"),
        ]
        return "\n".join(f"{k} = {v}" for k, v in rows) + "\n"


Boundary = Union[float, np.ndarray, Callable]


def _boundary_values(mesh: PolarMesh, boundary: Boundary):
    vals = np.asarray(boundary(mesh.theta) if callable(boundary) else boundary, dtype=float)
    if vals.ndim == 0:
        vals = np.full(mesh.n_theta, float(vals))
    if vals.shape != (mesh.n_theta,) or not np.all(np.isfinite(vals)):
        raise DiscretizationError("boundary data must be finite with one value per boundary node")
    return vals


class _Problem:
    def __init__(self, fun: AreaFunctional, h_mean, bvals):
        self.fun = fun
        self.h_mean = h_mean
        self.n = fun.geometry.dim_m
        self.nu = fun.mesh.n_unknown
        self.bvals = bvals
        self.scale = fun.rho_nodes * fun.volumes
        self.sqrt_v = np.sqrt(fun.volumes)

    def full(self, x):
        return np.concatenate([x, self.bvals])

    def residual(self, x):
        return -self.fun.gradient(self.full(x), self.h_mean, self.n)[: self.nu] / self.scale

    def rounding_floor(self, x):
        """Residual change caused by one-ulp perturbations of u.

        Angular differences on the first ring are divided by (h dtheta)^2, so
        for non-radial data the pointwise residual cannot be resolved below
        eps max|u| max(diag J / (rho V)).
        """
        full = self.full(x)
        diag = self.fun.hessian(full).diagonal()[: self.nu]
        return float(np.finfo(float).eps * np.max(np.abs(full)) * np.max(diag / self.scale))

    def merit(self, res):
        return float(np.linalg.norm(res * self.sqrt_v))


def harmonic_extension(fun: AreaFunctional, bvals, rtol=1e-12):
    """Discrete Laplace-Beltrami extension of the boundary ring."""
    nu = fun.mesh.n_unknown
    lap = fun.laplacian()
    rhs = -(lap[:nu, nu:] @ bvals)
    out = pcg(lap[:nu, :nu], rhs, rtol=rtol)
    return out.x, out.iterations


def solve_ball(
    geometry: WarpedProduct,
    h_mean,
    radius,
    boundary: Boundary,
    n_r=256,
    n_theta=128,
    tol=TAU_PDE,
    max_iter=200,
    initial: Optional[np.ndarray] = None,
    cg_rtol=1e-12,
):
    """Dirichlet problem for the CMC Killing-graph equation on B_radius(p).

    Returns (GraphFunction, SolveReport).  Converged means the L-infinity
    residual is at most max(tol, rounding floor of the residual); the floor only
    exceeds the default tol for non-radial data on fine meshes.  Raises
    SolverError (carrying the report) when that is not reached within
    ``max_iter`` steps.
    """
    t0 = time.perf_counter()
    if geometry.mode == "grid2d":
        mesh = geometry.metric.mesh
        if not math.isclose(mesh.radius, radius, rel_tol=1e-12):
            raise DiscretizationError("radius differs from the radius of the geometry's mesh")
    else:
        mesh = PolarMesh(radius, n_r, n_theta)
    fun = AreaFunctional(geometry, mesh)
    bvals = _boundary_values(mesh, boundary)
    prob = _Problem(fun, h_mean, bvals)
    nu = prob.nu
    report = SolveReport(h=mesh.h)

    if initial is None:
        x, its = harmonic_extension(fun, bvals, rtol=cg_rtol)
        report.cg_iterations.append(its)
    else:
        x = mesh.to_vector(initial)[:nu].copy()

    res = prob.residual(x)
    rinf = float(np.max(np.abs(res)))
    report.residual_history.append(rinf)
    report.rounding_floor = prob.rounding_floor(x)
    report.tol_effective = max(tol, report.rounding_floor)
    consecutive_failures = 0
    while rinf > report.tol_effective and report.iterations < max_iter:
        report.iterations += 1
        full = prob.full(x)
        if consecutive_failures >= PICARD_AFTER:
            k = fun.frozen_matrix(full)
            rhs = -(k[:nu, nu:] @ bvals) - fun.source(h_mean, prob.n)
            sol = pcg(k[:nu, :nu], rhs, x0=x, rtol=cg_rtol)
            report.cg_iterations.append(sol.iterations)
            x = sol.x
            report.picard_steps += 1
            report.damping.append(0.0)  # 0 marks a Picard step
            consecutive_failures = 0
        else:
            jac = fun.hessian(full)[:nu, :nu]
            grad = fun.gradient(full, h_mean, prob.n)[:nu]
            sol = pcg(jac, -grad, rtol=cg_rtol)
            report.cg_iterations.append(sol.iterations)
            m0 = prob.merit(res)
            t = 1.0
            accepted = False
            for _ in range(MAX_HALVINGS + 1):
                trial = x + t * sol.x
                r_trial = prob.residual(trial)
                if np.all(np.isfinite(r_trial)) and prob.merit(r_trial) <= (1.0 - 1e-4 * t) * m0:
                    accepted = True
                    break
                t *= 0.5
            if accepted:
                x = trial
                report.damping.append(t)
                consecutive_failures = 0
            else:
                report.damping.append(-1.0)  # -1 marks a rejected Newton step
                report.newton_failures += 1
                consecutive_failures += 1
        res = prob.residual(x)
        rinf = float(np.max(np.abs(res)))
        report.residual_history.append(rinf)
        report.rounding_floor = prob.rounding_floor(x)
        report.tol_effective = max(tol, report.rounding_floor)

    report.residual_linf = rinf
    report.converged = rinf <= report.tol_effective
    report.seconds = time.perf_counter() - t0
    u = GraphFunction(geometry, mesh, mesh.from_vector(prob.full(x)))
    report.max_corner_spread = float(np.max(fun.corner_w_spread(prob.full(x))))
    if report.max_corner_spread > RESOLUTION_SPREAD:
        warnings.warn(
            f"rho W varies by a factor {report.max_corner_spread:.3g} across one cell; refine the mesh",
            ResolutionWarning,
            stacklevel=2,
        )
    if not report.converged:
        raise SolverError(
            f"no convergence after {report.iterations} iterations (residual {rinf:.3e} > {report.tol_effective:.1e})", report
        )
    return u, report


def ring_fluxes(u: GraphFunction, functional: Optional[AreaFunctional] = None):
    """Discrete outward flux of rho grad u / W through the circle between rings k and k+1.

    Entry k sums the radial-edge fluxes of the corner triangles spanning rings
    k and k+1.  For a converged solution it equals n H times the weighted
    dual volume of rings 0..k, so for H = 0 it vanishes on every circle.
    """
    fun = functional or AreaFunctional(u.geometry, u.mesh)
    full = u.mesh.to_vector(u.values)
    s, a, _ = fun.corner_s(full)
    ea = fun.w * fun.p2 * a / s / fun.h
    row = np.repeat(np.arange(u.mesh.n_r)[:, None], u.mesh.n_theta, axis=1).ravel()
    return np.bincount(np.tile(row, 4), ea, u.mesh.n_r)
