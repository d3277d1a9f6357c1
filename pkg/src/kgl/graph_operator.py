"""Discrete Killing-graph mean curvature operator on a polar mesh.

The graph Sigma(u) of u over M in N = M x_rho R has area element

    rho W dvol_M,   W = sqrt(gamma + |grad u|^2),   gamma = 1/rho^2,

and constant mean curvature H (Gauss map oriented by <Y, N> = 1/W > 0) means

    div(grad u / W) - <grad gamma, grad u>/(2 gamma W) = n H,

equivalently (1/rho) div(rho grad u / W) = n H.  The flux form is discretised as
the gradient of a discrete area functional, so its Jacobian is symmetric and
positive definite.  Each mesh quad carries four corner triangles; a corner
triangle sees one radial and one angular edge difference.  The divergence form
and the intrinsic identities are evaluated with independent nodal stencils.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Optional

import numpy as np
import scipy.sparse as sp

from .errors import DiscretizationError
from .geometry import WarpedProduct, gamma as gamma_of
from .mesh import PolarMesh


@dataclass(eq=False)
class GraphFunction:
    """Nodal values of u over the geodesic ball covered by ``mesh``."""

    geometry: WarpedProduct
    mesh: PolarMesh
    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != self.mesh.shape:
            raise DiscretizationError(f"values shape {self.values.shape} != mesh shape {self.mesh.shape}")
        self.values[0] = self.values[0].mean()

    @cached_property
    def rho(self):
        return self.geometry.rho_field(self.mesh)

    @cached_property
    def gamma(self):
        return gamma_of(self.rho)

    @cached_property
    def gradient(self):
        """Physical (radial, tangential) gradient components at every node."""
        return self.mesh.grad(self.values, self.geometry.fm)

    @cached_property
    def grad_sq(self):
        gr, gt = self.gradient
        return gr**2 + gt**2

    @cached_property
    def w(self):
        return np.sqrt(self.gamma + self.grad_sq)

    def gradient_at_pole(self):
        gx, gy = self.mesh.pole_gradient(self.values)
        return float(np.hypot(gx, gy))

    @property
    def center_value(self):
        return float(self.values[0, 0])


@dataclass(frozen=True)
class GaussQuantities:
    w: np.ndarray
    inv_w: np.ndarray
    y_tan_sq: np.ndarray
    normal_norm_sq: np.ndarray


def gauss_quantities(u: GraphFunction) -> GaussQuantities:
    """W, <Y, N> = 1/W and |gamma Y^T|^2 = gamma |grad u|^2 / W^2 at the nodes."""
    g = u.gamma
    w = u.w
    # N = (gamma Y - grad u)/W with |Y| = rho: |N|^2 = (gamma^2 rho^2 + |grad u|^2)/W^2
    nn = (g**2 * u.rho**2 + u.grad_sq) / w**2
    return GaussQuantities(w=w, inv_w=1.0 / w, y_tan_sq=g * u.grad_sq / w**2, normal_norm_sq=nn)


def inverse_induced_metric(sigma_inv, du, gamma):
    """g^{ij} = sigma^{ij} - u^i u^j / W^2 with u^i = sigma^{ik} u_k.

    sigma_inv: (..., m, m), du: (..., m) coordinate partials, gamma: (...).
    """
    sigma_inv = np.asarray(sigma_inv, dtype=float)
    du = np.asarray(du, dtype=float)
    up = np.einsum("...ij,...j->...i", sigma_inv, du)
    w2 = np.asarray(gamma) + np.einsum("...i,...i->...", up, du)
    return sigma_inv - up[..., :, None] * up[..., None, :] / w2[..., None, None]


def _coordinate_data(u: GraphFunction):
    """sigma^{ij} and coordinate partials (u_r, u_theta) on rows 1..n_r."""
    mesh = u.mesh
    f = u.geometry.fm(mesh.r[1:])[:, None] * np.ones((1, mesh.n_theta))
    gr, gt = u.gradient
    du = np.stack([gr[1:], gt[1:] * f], axis=-1)
    sig = np.zeros(f.shape + (2, 2))
    sig[..., 0, 0] = 1.0
    sig[..., 1, 1] = 1.0 / f**2
    return sig, du, f


def induced_metric(u: GraphFunction):
    """Contravariant induced metric g^{ij} in (r, theta) coordinates.

    The pole row is left as NaN: polar coordinates are singular there.
    """
    sig, du, _ = _coordinate_data(u)
    gi = inverse_induced_metric(sig, du, u.gamma[1:])
    det = gi[..., 0, 0] * gi[..., 1, 1] - gi[..., 0, 1] * gi[..., 1, 0]
    if np.any(gi[..., 0, 0] <= 0) or np.any(det <= 0):
        raise DiscretizationError("induced metric is not positive definite")
    out = np.full(u.mesh.shape + (2, 2), np.nan)
    out[1:] = gi
    return out


def area_density(u: GraphFunction):
    """sqrt(det g_ij) in (r, theta) coordinates, from the inverse induced metric."""
    gi = induced_metric(u)[1:]
    det_inv = gi[..., 0, 0] * gi[..., 1, 1] - gi[..., 0, 1] ** 2
    out = np.zeros(u.mesh.shape)
    out[1:] = 1.0 / np.sqrt(det_inv)
    return out


def graph_area(u: GraphFunction):
    """Area of Sigma(u) over the mesh disc, integrated from area_density."""
    return u.mesh.integrate(area_density(u))


class AreaFunctional:
    """E(u) = sum over corner triangles of w rho_q W_c + n H sum_k rho_k V_k u_k.

    Its gradient with respect to the unknown nodal values is -rho V times the
    flux-form residual; its Hessian is the Newton matrix.
    """

    def __init__(self, geometry: WarpedProduct, mesh: PolarMesh):
        if geometry.dim_m != 2:
            raise DiscretizationError("the polar-grid operator is two-dimensional")
        self.geometry = geometry
        self.mesh = mesh
        fm = geometry.fm
        nr, nt = mesh.n_r, mesh.n_theta
        idx = mesh.node_index
        i = np.arange(nr)[:, None] * np.ones((1, nt), dtype=np.int64)
        j = np.ones((nr, 1), dtype=np.int64) * np.arange(nt)[None, :]
        jp = (j + 1) % nt
        n00, n10 = idx[i, j], idx[i + 1, j]
        n01, n11 = idx[i, jp], idx[i + 1, jp]
        f = fm(mesh.r)
        with np.errstate(divide="ignore"):
            cb = np.where(f > 0, 1.0 / np.where(f > 0, f, 1.0) ** 2, 0.0)
        cb_in, cb_out = cb[i], cb[i + 1]
        rho = geometry.rho_field(mesh)
        if np.any(~(rho > 0)):
            raise DiscretizationError("nonpositive warping on the mesh")
        rho_q = 0.25 * (rho[i, j] + rho[i + 1, j] + rho[i, jp] + rho[i + 1, jp])
        areas = mesh.quad_areas(fm)[:, None] * np.ones((1, nt))
        if np.any(areas <= 0):
            raise DiscretizationError("degenerate cell area")
        # corners: (i,j), (i+1,j), (i,j+1), (i+1,j+1)
        self.ra0 = np.concatenate([n00, n00, n01, n01], axis=None)
        self.ra1 = np.concatenate([n10, n10, n11, n11], axis=None)
        self.ab0 = np.concatenate([n00, n10, n00, n10], axis=None)
        self.ab1 = np.concatenate([n01, n11, n01, n11], axis=None)
        self.cb = np.concatenate([cb_in, cb_out, cb_in, cb_out], axis=None)
        self.w = np.tile((0.25 * areas).ravel(), 4)
        self.p2 = np.tile((rho_q**2).ravel(), 4)
        self.n_tri = self.w.size
        self.h = mesh.h
        self.dth = mesh.dtheta
        self.volumes = mesh.dual_volumes(fm)
        self.rho_nodes = mesh.to_vector(rho)[: mesh.n_unknown]
        self._build_pattern()

    def _build_pattern(self):
        a0, a1, b0, b1 = self.ra0, self.ra1, self.ab0, self.ab1
        self._rows = np.concatenate([a1, a1, a0, a0, b1, b1, b0, b0, a1, a1, a0, a0, b1, b1, b0, b0])
        self._cols = np.concatenate([a1, a0, a1, a0, b1, b0, b1, b0, b1, b0, b1, b0, a1, a0, a1, a0])
        one = np.ones(self.n_tri)
        ih, it = 1.0 / self.h, 1.0 / self.dth
        # sign pattern times the edge scalings
        self._saa = np.concatenate([one, -one, -one, one]) * ih * ih
        self._sbb = np.concatenate([one, -one, -one, one]) * it * it
        self._sab = np.concatenate([one, -one, -one, one]) * ih * it

    def edge_differences(self, u_full):
        a = (u_full[self.ra1] - u_full[self.ra0]) / self.h
        b = (u_full[self.ab1] - u_full[self.ab0]) / self.dth
        return a, b

    def corner_s(self, u_full):
        a, b = self.edge_differences(u_full)
        return np.sqrt(1.0 + self.p2 * (a * a + self.cb * b * b)), a, b

    def energy(self, u_full, h_mean=0.0, n=2):
        s, _, _ = self.corner_s(u_full)
        nu = self.mesh.n_unknown
        return float(np.dot(self.w, s) + n * h_mean * np.dot(self.rho_nodes * self.volumes, u_full[:nu]))

    def area(self, u_full):
        """Discrete area of the graph: sum of w rho_q W over corner triangles."""
        s, _, _ = self.corner_s(u_full)
        return float(np.dot(self.w, s))

    def gradient(self, u_full, h_mean, n=2):
        s, a, b = self.corner_s(u_full)
        ea = self.w * self.p2 * a / s / self.h
        eb = self.w * self.p2 * self.cb * b / s / self.dth
        nf = self.mesh.n_full
        g = (
            np.bincount(self.ra1, ea, nf) - np.bincount(self.ra0, ea, nf)
            + np.bincount(self.ab1, eb, nf) - np.bincount(self.ab0, eb, nf)
        )
        nu = self.mesh.n_unknown
        g[:nu] += n * h_mean * self.rho_nodes * self.volumes
        return g

    def residual(self, u_full, h_mean, n=2):
        """Flux-form residual (1/rho) div(rho grad u / W) - n H at the unknown nodes."""
        nu = self.mesh.n_unknown
        return -self.gradient(u_full, h_mean, n)[:nu] / (self.rho_nodes * self.volumes)

    def _assemble(self, haa, hbb, hab):
        vals = np.concatenate([
            np.tile(haa, 4) * self._saa,
            np.tile(hbb, 4) * self._sbb,
            np.tile(hab, 4) * self._sab,
            np.tile(hab, 4) * self._sab,
        ])
        nf = self.mesh.n_full
        return sp.coo_matrix((vals, (self._rows, self._cols)), shape=(nf, nf)).tocsr()

    def hessian(self, u_full):
        s, a, b = self.corner_s(u_full)
        p2, cb, w = self.p2, self.cb, self.w
        s3 = s**3
        ma, mb = p2 * a, p2 * cb * b
        haa = w * (p2 / s - ma * ma / s3)
        hbb = w * (p2 * cb / s - mb * mb / s3)
        hab = -w * ma * mb / s3
        return self._assemble(haa, hbb, hab)

    def frozen_matrix(self, u_full):
        """Picard matrix: W frozen at u_full."""
        s, _, _ = self.corner_s(u_full)
        return self._assemble(self.w * self.p2 / s, self.w * self.p2 * self.cb / s, np.zeros(self.n_tri))

    def laplacian(self):
        return self._assemble(self.w, self.w * self.cb, np.zeros(self.n_tri))

    def source(self, h_mean, n=2):
        return n * h_mean * self.rho_nodes * self.volumes

    def corner_w_spread(self, u_full):
        """max/min ratio of rho W over the four corners of each quad."""
        s, _, _ = self.corner_s(u_full)
        q = s.reshape(4, -1)
        return q.max(axis=0) / q.min(axis=0)


def _nodal_field(mesh, vec, fill=np.nan):
    out = np.full(mesh.shape, fill)
    out[: mesh.n_r] = mesh.from_vector(np.concatenate([vec, np.zeros(mesh.n_theta)]))[: mesh.n_r]
    return out


def flux_residual(u: GraphFunction, h_mean, functional: Optional[AreaFunctional] = None):
    """Flux-form residual as a nodal field; NaN on the Dirichlet ring."""
    fun = functional or AreaFunctional(u.geometry, u.mesh)
    res = fun.residual(u.mesh.to_vector(u.values), h_mean, u.geometry.dim_m)
    return _nodal_field(u.mesh, res)


def divergence_residual(u: GraphFunction, h_mean):
    """div(grad u/W) - <grad gamma, grad u>/(2 gamma W) - n H by nodal differences.

    Defined on rows 1..n_r-1; NaN at the pole and on the boundary ring.
    """
    mesh, fm = u.mesh, u.geometry.fm
    gr, gt = u.gradient
    w = u.w
    f = fm(mesh.r)[:, None]
    fvr = f * gr / w
    fvr[0] = 0.0
    div = np.full(mesh.shape, np.nan)
    div[1:-1] = (mesh.d_r_inner(fvr)[1:-1] + mesh.d_theta(gt / w)[1:-1]) / f[1:-1]
    g = u.gamma
    ggr, ggt = mesh.grad(g, fm)
    drift = (ggr * gr + ggt * gt) / (2.0 * g * w)
    out = div - drift - u.geometry.dim_m * h_mean
    out[0] = np.nan
    out[-1] = np.nan
    return out


def cmc_residual(u: GraphFunction, h_mean, form="flux"):
    """Pointwise residual of the CMC Killing-graph equation.

    form="flux" evaluates (1/rho) div(rho grad u/W) - nH through the area
    functional (defined at the pole and every interior ring); form="divergence"
    evaluates the original divergence form by nodal differences.
    """
    if form == "flux":
        return flux_residual(u, h_mean)
    if form == "divergence":
        return divergence_residual(u, h_mean)
    raise ValueError(f"unknown residual form {form!r}")


@dataclass(frozen=True)
class ResidualAgreement:
    max_difference: float
    h: float
    constant: float  # max_difference / h^2


def residual_form_agreement(u: GraphFunction, h_mean, r_min_fraction=0.25) -> ResidualAgreement:
    """L-infinity gap between the two residual forms on interior rings with r >= r_min_fraction R.

    The corner-triangle flux form pairs a radial edge difference at one angle
    with an angular difference centred half a step away.  Those O(dtheta) errors
    cancel across corners up to an O(dtheta^2 / r) remainder, so the pointwise gap
    is second order on any annulus bounded away from the pole but only first
    order on the first few rings.
    """
    a = flux_residual(u, h_mean)
    b = divergence_residual(u, h_mean)
    mesh = u.mesh
    rows = (mesh.r >= r_min_fraction * mesh.radius - 1e-12) & (np.arange(mesh.n_r + 1) > 0)
    rows[-1] = False
    gap = float(np.max(np.abs(a[rows] - b[rows])))
    h = mesh.h
    return ResidualAgreement(gap, h, gap / h**2)


def weighted_laplacian(u: GraphFunction):
    """L u = e^{-phi} div_Sigma(e^phi grad_Sigma u) with phi = 2 log rho.

    Assembled from the inverse induced metric and sqrt(det g) in (r, theta)
    coordinates; rows 1..n_r-1 are returned, NaN elsewhere.
    """
    mesh = u.mesh
    sig, du, _ = _coordinate_data(u)
    gi = inverse_induced_metric(sig, du, u.gamma[1:])
    det_inv = gi[..., 0, 0] * gi[..., 1, 1] - gi[..., 0, 1] ** 2
    sqrt_g = 1.0 / np.sqrt(det_inv)
    ephi = u.rho[1:] ** 2
    flux = ephi[..., None] * sqrt_g[..., None] * np.einsum("...ij,...j->...i", gi, du)
    xr = np.zeros(mesh.shape)
    xt = np.zeros(mesh.shape)
    xr[1:] = flux[..., 0]
    xt[1:] = flux[..., 1]
    # sqrt(det g) vanishes with f at the pole, so xr[0] = xt[0] = 0 there
    div = mesh.d_r_inner(xr) + mesh.d_theta(xt)
    out = np.full(mesh.shape, np.nan)
    out[1:-1] = div[1:-1] / (ephi[:-1] * sqrt_g[:-1])
    return out


@dataclass(frozen=True)
class IdentityDefect:
    defect: np.ndarray
    linf: float
    pde_residual: float
    is_solution: bool


def intrinsic_laplacian_identity(u: GraphFunction, h_mean, tol=1e-8) -> IdentityDefect:
    """Defect of  Delta_Sigma u = n gamma H / W + <grad gamma, grad u>/gamma.

    Written with the weighted operator this reads L u = n gamma H / W.  The
    defect is meaningful only when u solves the CMC equation; ``is_solution``
    records whether the flux residual is below ``tol``.
    """
    lu = weighted_laplacian(u)
    rhs = u.geometry.dim_m * u.gamma * h_mean / u.w
    defect = lu - rhs
    res = flux_residual(u, h_mean)
    pde = float(np.nanmax(np.abs(res)))
    return IdentityDefect(defect=defect, linf=float(np.nanmax(np.abs(defect))), pde_residual=pde, is_solution=pde <= tol)
