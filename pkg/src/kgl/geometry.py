"""Warped products N = M^n x_rho R with a distinguished pole p in M.

M is either rotationally symmetric (metric dr^2 + f_M(r)^2 g_sphere, any n >= 2)
or a two-dimensional polar grid where the warping function is sampled per node.
In both cases r is the exact geodesic distance from the pole, so geodesic balls
are coordinate discs and there is no cut locus.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional, Union

import numpy as np
from scipy.interpolate import CubicSpline

from .errors import InvalidGeometryError, ResolutionError
from .mesh import PolarMesh

# r = 0 is replaced by this (relative) radius wherever a pole limit is needed.
_POLE_EPS = 1e-8


class Profile:
    """A smooth function of the radial coordinate together with two derivatives."""

    name = "profile"

    def __call__(self, r):
        raise NotImplementedError

    def d1(self, r):
        raise NotImplementedError

    def d2(self, r):
        raise NotImplementedError

    def global_bounds(self):
        """(inf, sup, sup|d1|) over [0, inf), or None when not known in closed form."""
        return None

    def __repr__(self):
        return self.name


class MetricProfile(Profile):
    """Radial profile f_M of a rotationally symmetric metric, f(0)=0, f'(0)=1."""

    def integral(self, r):
        """int_0^r f."""
        raise NotImplementedError

    def log_derivative(self, r):
        """f'/f, with the 1/r behaviour at the pole."""
        r = np.asarray(r, dtype=float)
        return self.d1(r) / self(r)

    def radial_curvature(self, r):
        """Sectional curvature of planes containing d/dr: -f''/f."""
        r = np.maximum(np.asarray(r, dtype=float), _POLE_EPS)
        return -self.d2(r) / self(r)

    def tangential_curvature(self, r):
        """Sectional curvature of planes tangent to geodesic spheres: (1 - f'^2)/f^2."""
        r = np.maximum(np.asarray(r, dtype=float), 1e-4)
        return (1.0 - self.d1(r) ** 2) / self(r) ** 2


class EuclideanProfile(MetricProfile):
    name = "euclidean"

    def __call__(self, r):
        return np.asarray(r, dtype=float) * 1.0

    def d1(self, r):
        return np.ones_like(np.asarray(r, dtype=float))

    def d2(self, r):
        return np.zeros_like(np.asarray(r, dtype=float))

    def integral(self, r):
        return 0.5 * np.asarray(r, dtype=float) ** 2

    def log_derivative(self, r):
        return 1.0 / np.asarray(r, dtype=float)

    def radial_curvature(self, r):
        return np.zeros_like(np.asarray(r, dtype=float))

    def tangential_curvature(self, r):
        return np.zeros_like(np.asarray(r, dtype=float))


class HyperbolicProfile(MetricProfile):
    """f(r) = sinh(sqrt(K0) r)/sqrt(K0): constant curvature -K0."""

    def __init__(self, k0=1.0):
        if k0 <= 0:
            raise InvalidGeometryError("hyperbolic profile needs K0 > 0")
        self.k0 = float(k0)
        self._s = np.sqrt(self.k0)
        self.name = f"hyperbolic({self.k0:g})"

    def __call__(self, r):
        return np.sinh(self._s * np.asarray(r, dtype=float)) / self._s

    def d1(self, r):
        return np.cosh(self._s * np.asarray(r, dtype=float))

    def d2(self, r):
        return self._s * np.sinh(self._s * np.asarray(r, dtype=float))

    def integral(self, r):
        x = self._s * np.asarray(r, dtype=float)
        # cosh(x) - 1 = 2 sinh(x/2)^2 avoids cancellation near 0
        return 2.0 * np.sinh(0.5 * x) ** 2 / self.k0

    def log_derivative(self, r):
        return self._s / np.tanh(self._s * np.asarray(r, dtype=float))

    def radial_curvature(self, r):
        return np.full_like(np.asarray(r, dtype=float), -self.k0)

    def tangential_curvature(self, r):
        return np.full_like(np.asarray(r, dtype=float), -self.k0)


class TableProfile(MetricProfile):
    """Cubic-spline interpolant of a two-column (r, value) table.

    Usable both as a metric profile (table must start at (0, 0)) and as a
    warping function.
    """

    def __init__(self, r, values, name="table"):
        r = np.asarray(r, dtype=float)
        values = np.asarray(values, dtype=float)
        if r.ndim != 1 or r.shape != values.shape or r.size < 4:
            raise InvalidGeometryError("table needs at least 4 (r, value) rows")
        if np.any(np.diff(r) <= 0):
            raise InvalidGeometryError("table radii must be strictly increasing")
        self.r = r
        self.values = values
        self._spline = CubicSpline(r, values)
        self._d1 = self._spline.derivative(1)
        self._d2 = self._spline.derivative(2)
        self._anti = self._spline.antiderivative()
        self.name = name

    @classmethod
    def from_file(cls, path):
        data = np.loadtxt(path, ndmin=2)
        if data.shape[1] != 2:
            raise InvalidGeometryError(f"{path}: expected two columns (r, value)")
        return cls(data[:, 0], data[:, 1], name=f"table({path})")

    @property
    def r_max(self):
        return float(self.r[-1])

    def __call__(self, r):
        return self._spline(np.asarray(r, dtype=float))

    def d1(self, r):
        return self._d1(np.asarray(r, dtype=float))

    def d2(self, r):
        return self._d2(np.asarray(r, dtype=float))

    def integral(self, r):
        return self._anti(np.asarray(r, dtype=float)) - self._anti(0.0)


class ConstantRho(Profile):
    def __init__(self, c):
        self.c = float(c)
        self.name = f"constant({self.c:g})"

    def __call__(self, r):
        return np.full_like(np.asarray(r, dtype=float), self.c)

    def d1(self, r):
        return np.zeros_like(np.asarray(r, dtype=float))

    def d2(self, r):
        return np.zeros_like(np.asarray(r, dtype=float))

    def global_bounds(self):
        return self.c, self.c, 0.0


# psi(r) families for rho = c + exp(-psi): (psi, psi', psi'')
PSI_FAMILIES: dict[str, tuple[Callable, Callable, Callable]] = {
    "log1p": (
        lambda r: np.log1p(r),
        lambda r: 1.0 / (1.0 + r),
        lambda r: -1.0 / (1.0 + r) ** 2,
    ),
    "sqrt": (
        lambda r: np.sqrt(1.0 + r) - 1.0,
        lambda r: 0.5 / np.sqrt(1.0 + r),
        lambda r: -0.25 / (1.0 + r) ** 1.5,
    ),
    "linear": (
        lambda r: np.asarray(r, dtype=float) * 1.0,
        lambda r: np.ones_like(np.asarray(r, dtype=float)),
        lambda r: np.zeros_like(np.asarray(r, dtype=float)),
    ),
}


class DecayingRho(Profile):
    """rho(r) = c + exp(-psi(r)) with psi increasing to infinity.

    With psi = log1p or sqrt, psi' -> 0 as well; psi = linear gives the
    exponentially decaying 1 + e^{-r} used in the oracle instances.
    """

    def __init__(self, c=1.0, psi="log1p"):
        if c <= 0:
            raise InvalidGeometryError("decaying needs c > 0")
        if psi not in PSI_FAMILIES:
            raise InvalidGeometryError(f"unknown psi {psi!r}; choose from {sorted(PSI_FAMILIES)}")
        self.c = float(c)
        self.psi = psi
        self._psi, self._dpsi, self._ddpsi = PSI_FAMILIES[psi]
        self.name = f"decaying({self.c:g}, {psi})"

    def __call__(self, r):
        return self.c + np.exp(-self._psi(np.asarray(r, dtype=float)))

    def d1(self, r):
        r = np.asarray(r, dtype=float)
        return -self._dpsi(r) * np.exp(-self._psi(r))

    def d2(self, r):
        r = np.asarray(r, dtype=float)
        return (self._dpsi(r) ** 2 - self._ddpsi(r)) * np.exp(-self._psi(r))

    def global_bounds(self):
        # every family has psi(0) = 0 and psi' e^{-psi} decreasing, so the
        # extremes of rho and |rho'| sit at the pole; inf rho is the limit c
        return self.c, self.c + 1.0, float(self._dpsi(0.0))


class QuadraticRho(Profile):
    """rho(r) = c + a r^2: smooth at the pole, unbounded."""

    def __init__(self, c=1.0, a=1.0):
        self.c = float(c)
        self.a = float(a)
        self.name = f"quadratic({self.c:g}, {self.a:g})"

    def __call__(self, r):
        return self.c + self.a * np.asarray(r, dtype=float) ** 2

    def d1(self, r):
        return 2.0 * self.a * np.asarray(r, dtype=float)

    def d2(self, r):
        return np.full_like(np.asarray(r, dtype=float), 2.0 * self.a)


@dataclass(frozen=True, eq=False)
class PolarGrid2D:
    """Two-dimensional M in geodesic polar coordinates dr^2 + f_M(r)^2 dtheta^2.

    The warping function is sampled at the nodes of ``mesh`` and need not be
    rotationally symmetric.
    """

    fm: MetricProfile
    mesh: PolarMesh


@dataclass(frozen=True)
class RhoBounds:
    rho_sup: float
    grad_rho_sup: float
    rho_inf: float
    global_rho_sup: Optional[float] = None
    global_grad_rho_sup: Optional[float] = None
    global_rho_inf: Optional[float] = None

    def __post_init__(self):
        if not (0 < self.rho_inf <= self.rho_sup * (1 + 1e-14)) or self.grad_rho_sup < 0:
            raise InvalidGeometryError(f"inconsistent rho bounds {self}")


def gamma(rho):
    """gamma = 1/rho^2, elementwise."""
    rho = np.asarray(rho, dtype=float)
    if np.any(~(rho > 0)):
        raise InvalidGeometryError("warping function must be strictly positive")
    return 1.0 / rho**2


@dataclass(frozen=True, eq=False)
class WarpedProduct:
    dim_m: int
    metric: Union[MetricProfile, PolarGrid2D]
    rho: Union[Profile, np.ndarray]
    k0: Optional[float] = None
    name: str = field(default="", compare=False)

    def __post_init__(self):
        if self.dim_m < 2:
            raise InvalidGeometryError("dim_m must be at least 2")
        if isinstance(self.metric, PolarGrid2D):
            if self.dim_m != 2:
                raise InvalidGeometryError("grid2d metrics are two-dimensional")
            if isinstance(self.rho, np.ndarray):
                if self.rho.shape != self.metric.mesh.shape:
                    raise InvalidGeometryError(
                        f"rho samples have shape {self.rho.shape}, mesh is {self.metric.mesh.shape}"
                    )
                rho = self.rho.copy()
                rho.setflags(write=False)
                object.__setattr__(self, "rho", rho)
        elif isinstance(self.rho, np.ndarray):
            raise InvalidGeometryError("sampled rho requires a grid2d metric")
        if self.k0 is not None and self.k0 < 0:
            raise InvalidGeometryError("K0 must be nonnegative")
        r = self._check_radii()
        gamma(self.rho if isinstance(self.rho, np.ndarray) else self.rho(r))
        if self.fm(r[1:]).min() <= 0:
            raise InvalidGeometryError("f_M must be positive for r > 0")
        if self.k0 is not None:
            krad = self.fm.radial_curvature(r)
            if krad.min() < -self.k0 - 1e-9 * max(1.0, self.k0):
                raise InvalidGeometryError(
                    f"radial curvature {krad.min():.6g} below -K0 = {-self.k0:g}"
                )

    def _check_radii(self):
        if self.mode == "grid2d":
            return self.metric.mesh.r
        top = self.fm.r_max if isinstance(self.fm, TableProfile) else 10.0
        return np.linspace(0.0, top, 401)

    @property
    def mode(self):
        return "grid2d" if isinstance(self.metric, PolarGrid2D) else "radial"

    @property
    def fm(self) -> MetricProfile:
        return self.metric.fm if isinstance(self.metric, PolarGrid2D) else self.metric

    @property
    def rho_profile(self) -> Profile:
        if isinstance(self.rho, np.ndarray):
            raise InvalidGeometryError("rho is sampled, not a radial profile")
        return self.rho

    def curvature_bound(self, radius):
        """K0: supplied, or the smallest K0 >= 0 with -f''/f >= -K0 on [0, radius]."""
        if self.k0 is not None:
            return self.k0
        r = np.linspace(0.0, radius, 2049)
        return float(max(0.0, -self.fm.radial_curvature(r).min()))

    # radial-mode point evaluations
    def rho_at(self, r):
        return self.rho_profile(r)

    def gamma(self, r):
        return gamma(self.rho_at(r))

    def kappa(self, r):
        """|grad rho|/rho."""
        return np.abs(self.rho_profile.d1(r)) / self.rho_at(r)

    def kappa_via_gamma(self, r):
        """|grad gamma|/(2 gamma), with gamma' = -2 rho'/rho^3."""
        rho = self.rho_at(r)
        dgamma = -2.0 * self.rho_profile.d1(r) / rho**3
        return np.abs(dgamma) / (2.0 * self.gamma(r))

    # nodal fields on a polar mesh
    def rho_field(self, mesh: PolarMesh):
        if isinstance(self.rho, np.ndarray):
            if mesh.shape != self.rho.shape or not np.isclose(mesh.radius, self.metric.mesh.radius):
                raise InvalidGeometryError("mesh does not match the sampled rho grid")
            return np.array(self.rho)
        return np.repeat(self.rho(mesh.r)[:, None], mesh.n_theta, axis=1)

    def gamma_field(self, mesh):
        return gamma(self.rho_field(mesh))

    def grad_rho_field(self, mesh):
        """Physical (radial, tangential) components of grad rho at the nodes."""
        if isinstance(self.rho, np.ndarray):
            return mesh.grad(self.rho_field(mesh), self.fm)
        d = np.repeat(self.rho.d1(mesh.r)[:, None], mesh.n_theta, axis=1)
        return d, np.zeros_like(d)

    def kappa_field(self, mesh):
        gr, gt = self.grad_rho_field(mesh)
        return np.hypot(gr, gt) / self.rho_field(mesh)

    def kappa_field_via_gamma(self, mesh):
        g = self.gamma_field(mesh)
        gr, gt = mesh.grad(g, self.fm)
        return np.hypot(gr, gt) / (2.0 * g)


def _radial_samples(radius, dr):
    r = np.arange(0.0, radius + 0.5 * dr, dr)
    if r[-1] > radius:
        r[-1] = radius
    elif r[-1] < radius - 1e-12 * max(1.0, radius):
        r = np.append(r, radius)
    return r


def rho_bounds(g: WarpedProduct, radius, n_samples=4097) -> RhoBounds:
    """sup rho, sup |grad rho| and min rho over the closed ball B_radius(p)."""
    if radius <= 0:
        raise InvalidGeometryError("radius must be positive")
    glob = (None, None, None)
    if g.mode == "radial":
        r = np.linspace(0.0, radius, n_samples)
        rho = g.rho_at(r)
        grad = np.abs(g.rho_profile.d1(r))
        gb = g.rho_profile.global_bounds()
        if gb is not None:
            glob = (gb[1], gb[2], gb[0])
    else:
        mesh = g.metric.mesh
        inside = mesh.r <= radius * (1 + 1e-12)
        rho = g.rho_field(mesh)[inside]
        gr, gt = g.grad_rho_field(mesh)
        grad = np.hypot(gr, gt)[inside]
        grad[np.abs(grad) < 1e-10] = 0.0
    gamma(rho)
    return RhoBounds(
        rho_sup=float(rho.max()),
        grad_rho_sup=float(grad.max()),
        rho_inf=float(rho.min()),
        global_rho_sup=glob[0],
        global_grad_rho_sup=glob[1],
        global_rho_inf=glob[2],
    )


def _direction_quadratic(ric_h, hess_h, lap, rho, n_horizontal, n_vertical):
    """min over unit v of Ric_N(v,v) given diagonal horizontal data.

    ric_h, hess_h: (..., 2) arrays, diagonal entries of Ric_M and Hess rho in an
    orthonormal horizontal frame (e1, e2); the two forms share the frame.  For
    n > 2 the second entry stands for every tangential direction.
    """
    psi = np.linspace(0.0, 2 * np.pi, n_horizontal, endpoint=False)
    phi = np.linspace(0.0, 2 * np.pi, n_vertical, endpoint=False)
    c2, s2 = np.cos(psi) ** 2, np.sin(psi) ** 2
    rho = rho[..., None]
    ric_e = ric_h[..., :1] * c2 + ric_h[..., 1:2] * s2
    hess_e = hess_h[..., :1] * c2 + hess_h[..., 1:2] * s2
    horiz = (ric_e - hess_e / rho)[..., None]  # (..., n_h, 1)
    # v = cos(phi) e + sin(phi) Y/rho, so <v, Y> = rho sin(phi)
    vert = (lap[..., None] / rho)[..., None]
    q = np.cos(phi) ** 2 * horiz - np.sin(phi) ** 2 * vert
    return q.min(axis=(-1, -2))


def ricci_ambient_lower_bound(
    g: WarpedProduct, radius, dr=1.0 / 256, n_horizontal=16, n_vertical=64
):
    """Smallest L >= 0 with Ric_N >= -L over the sampled ball and unit directions.

    Ric_N(v,v) = Ric_M(pi v, pi v) - Hess rho(pi v, pi v)/rho - <v,Y>^2 Lap rho / rho^3.
    Radial mode samples r on a fixed step from the pole, so balls with radii on
    that lattice are nested sample sets.
    """
    n = g.dim_m
    if g.mode == "radial":
        r = _radial_samples(radius, dr)
        r = np.maximum(r, _POLE_EPS)
        fm, rp = g.fm, g.rho_profile
        krad = fm.radial_curvature(r)
        ktan = fm.tangential_curvature(r)
        ric = np.stack([(n - 1) * krad, krad + (n - 2) * ktan], axis=-1)
        rho, d1, d2 = rp(r), rp.d1(r), rp.d2(r)
        logd = fm.log_derivative(r)
        hess = np.stack([d2, d1 * logd], axis=-1)
        lap = d2 + (n - 1) * logd * d1
    else:
        mesh = g.metric.mesh
        if mesh.n_r < 4 or mesh.n_theta < 8:
            raise ResolutionError("grid too coarse for second derivatives (need n_r >= 4, n_theta >= 8)")
        rows = slice(1, None)
        keep = mesh.r[rows] <= radius * (1 + 1e-12)
        r = mesh.r[rows][keep][:, None]
        fm = g.fm
        f, fp = fm(r), fm.d1(r)
        krad = fm.radial_curvature(r) * np.ones((1, mesh.n_theta))
        rho_all = g.rho_field(mesh)
        rr = mesh.d_rr(rho_all)[rows][keep]
        rt = mesh.d_theta(rho_all)[rows][keep]
        tt = mesh.d_thetatheta(rho_all)[rows][keep]
        rrt = mesh.d_theta(mesh.d_r(rho_all))[rows][keep]
        rho_r = mesh.d_r(rho_all)[rows][keep]
        rho = rho_all[rows][keep]
        # Hessian in the orthonormal frame (d/dr, d/dtheta / f)
        h11 = rr
        h22 = (tt + f * fp * rho_r) / f**2
        h12 = (rrt - fp / f * rt) / f
        # rotate to the eigenframe of Hess rho; Ric_M = K_rad * identity in 2D
        tr, det = h11 + h22, h11 * h22 - h12**2
        disc = np.sqrt(np.maximum(0.25 * tr**2 - det, 0.0))
        hess = np.stack([0.5 * tr - disc, 0.5 * tr + disc], axis=-1)
        ric = np.stack([krad, krad], axis=-1)
        lap = h11 + h22
    qmin = _direction_quadratic(ric, hess, lap, rho, n_horizontal, n_vertical)
    return float(max(0.0, -np.min(qmin)))


def make_radial(fm="euclidean", rho=1.0, dim_m=2, k0=None):
    """Convenience constructor used by the harness and tests."""
    if isinstance(fm, str):
        if fm == "euclidean":
            fm = EuclideanProfile()
        elif fm.startswith("hyperbolic"):
            fm = HyperbolicProfile(1.0)
        else:
            raise InvalidGeometryError(f"unknown profile {fm!r}")
    if isinstance(rho, (int, float)):
        rho = ConstantRho(rho)
    if k0 is None:
        if isinstance(fm, EuclideanProfile):
            k0 = 0.0
        elif isinstance(fm, HyperbolicProfile):
            k0 = fm.k0
    return WarpedProduct(dim_m=dim_m, metric=fm, rho=rho, k0=k0)
