"""Tensor polar mesh of a geodesic ball B_R(p) and nodal derivative operators.

Nodes sit at r_i = i h (i = 0..n_r) and theta_j = 2 pi j / n_theta.  Row i = 0
is the pole: all its entries carry the same value.  Row i = n_r is the Dirichlet
boundary.  Nodal fields are (n_r + 1, n_theta) arrays; the solver works on the
flattened unknown vector [pole, ring 1, ..., ring n_r - 1] followed by the
boundary ring.

Radial derivatives are finite differences (second-order centered, third-order
one-sided at the boundary, through the pole at i = 0); angular derivatives are spectral,
which is exact for the trigonometric content of smooth fields at fixed r.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .errors import DiscretizationError


@dataclass(frozen=True)
class PolarMesh:
    radius: float
    n_r: int = 256
    n_theta: int = 128

    def __post_init__(self):
        if self.radius <= 0:
            raise DiscretizationError("mesh radius must be positive")
        if self.n_r < 3:
            raise DiscretizationError("need at least 3 radial intervals")
        if self.n_theta < 4 or self.n_theta % 2:
            raise DiscretizationError("n_theta must be even and at least 4")

    @property
    def shape(self):
        return (self.n_r + 1, self.n_theta)

    @property
    def h(self):
        return self.radius / self.n_r

    @property
    def dtheta(self):
        return 2 * np.pi / self.n_theta

    @cached_property
    def r(self):
        return np.linspace(0.0, self.radius, self.n_r + 1)

    @cached_property
    def theta(self):
        return np.arange(self.n_theta) * self.dtheta

    @property
    def n_unknown(self):
        return 1 + (self.n_r - 1) * self.n_theta

    @property
    def n_full(self):
        return self.n_unknown + self.n_theta

    @cached_property
    def node_index(self):
        idx = np.empty(self.shape, dtype=np.int64)
        idx[0] = 0
        idx[1:] = 1 + np.arange(self.n_r * self.n_theta).reshape(self.n_r, self.n_theta)
        return idx

    def xy(self):
        rr, tt = np.meshgrid(self.r, self.theta, indexing="ij")
        return rr * np.cos(tt), rr * np.sin(tt)

    def to_vector(self, field):
        field = np.asarray(field, dtype=float)
        v = np.empty(self.n_full)
        v[0] = field[0].mean()
        v[1:] = field[1:].ravel()
        return v

    def from_vector(self, v):
        out = np.empty(self.shape)
        out[0] = v[0]
        out[1:] = np.asarray(v[1:]).reshape(self.n_r, self.n_theta)
        return out

    def sample(self, func):
        """Evaluate func(r, theta) at every node (pole row from r = 0)."""
        rr, tt = np.meshgrid(self.r, self.theta, indexing="ij")
        out = np.asarray(func(rr, tt), dtype=float) * np.ones(self.shape)
        out[0] = out[0].mean()
        return out

    # control volumes
    def quad_areas(self, fm):
        """Area of the annular sector [r_i, r_i+1] x one angular step, per ring i."""
        F = fm.integral(self.r)
        return self.dtheta * np.diff(F)

    def dual_volumes(self, fm):
        """Control volume around each unknown node, as a vector of length n_unknown."""
        h = self.h
        v = np.empty(self.n_unknown)
        v[0] = 2 * np.pi * fm.integral(0.5 * h)
        ri = self.r[1:-1]
        ring = self.dtheta * (fm.integral(ri + 0.5 * h) - fm.integral(ri - 0.5 * h))
        v[1:] = np.repeat(ring, self.n_theta)
        return v

    # derivatives
    def _opposite(self, row):
        return np.roll(row, -self.n_theta // 2)

    def d_r(self, u):
        u = np.asarray(u, dtype=float)
        h = self.h
        out = np.empty_like(u)
        out[1:-1] = (u[2:] - u[:-2]) / (2 * h)
        # third order, so that centered differences of derivatives stay second order next to it
        out[-1] = (11 * u[-1] - 18 * u[-2] + 9 * u[-3] - 2 * u[-4]) / (6 * h)
        out[0] = (u[1] - self._opposite(u[1])) / (2 * h)
        return out

    def d_r_inner(self, u):
        """Radial derivative on rows 1..n_r-1 that never reads the boundary row.

        Used for the outer derivative of nested stencils: on row n_r - 1 it is the
        backward second-order difference, so the smooth error of the inner
        centered derivatives is not mixed with the one-sided boundary error.
        Rows 0 and n_r are NaN.
        """
        u = np.asarray(u, dtype=float)
        h = self.h
        out = np.full_like(u, np.nan)
        out[1:-2] = (u[2:-1] - u[:-3]) / (2 * h)
        out[-2] = (3 * u[-2] - 4 * u[-3] + u[-4]) / (2 * h)
        return out

    def d_rr(self, u):
        u = np.asarray(u, dtype=float)
        h = self.h
        out = np.empty_like(u)
        out[1:-1] = (u[2:] - 2 * u[1:-1] + u[:-2]) / h**2
        out[-1] = (2 * u[-1] - 5 * u[-2] + 4 * u[-3] - u[-4]) / h**2 if self.n_r >= 3 else np.nan
        out[0] = (u[1] - 2 * u[0] + self._opposite(u[1])) / h**2
        return out

    def _wavenumbers(self):
        return np.fft.rfftfreq(self.n_theta, d=1.0 / self.n_theta)

    def d_theta(self, u):
        k = self._wavenumbers()
        mult = 1j * k
        mult[-1] = 0.0  # Nyquist mode has no real derivative
        return np.fft.irfft(np.fft.rfft(u, axis=-1) * mult, n=self.n_theta, axis=-1)

    def d_thetatheta(self, u):
        k = self._wavenumbers()
        return np.fft.irfft(np.fft.rfft(u, axis=-1) * (-(k**2)), n=self.n_theta, axis=-1)

    def grad(self, u, fm):
        """Physical components (radial, tangential) of the gradient at every node.

        At the pole both components are projections of a single Cartesian
        gradient onto the ray frame of each theta_j.
        """
        gr = self.d_r(u)
        gt = np.empty_like(gr)
        gt[1:] = self.d_theta(u[1:]) / fm(self.r[1:])[:, None]
        gx, gy = self._fit_mode_one(gr[0])
        c, s = np.cos(self.theta), np.sin(self.theta)
        gr[0] = gx * c + gy * s
        gt[0] = -gx * s + gy * c
        return gr, gt

    def _fit_mode_one(self, row):
        c, s = np.cos(self.theta), np.sin(self.theta)
        return 2 * np.mean(row * c), 2 * np.mean(row * s)

    def pole_gradient(self, u):
        """Cartesian gradient at the pole from the first Fourier mode of rings 1, 2.

        The mode-one coefficient of u on the ring of radius r is r |grad u(p)| + O(r^3),
        so Richardson extrapolation of rings 1 and 2 is fourth-order.
        """
        h = self.h
        a1 = np.array(self._fit_mode_one(u[1])) / h
        a2 = np.array(self._fit_mode_one(u[2])) / (2 * h)
        g = (4 * a1 - a2) / 3
        return float(g[0]), float(g[1])

    def ball_mask(self, radius):
        return np.repeat((self.r <= radius * (1 + 1e-12))[:, None], self.n_theta, axis=1)

    def integrate(self, density):
        """Trapezoid in r, periodic sum in theta, of a nodal density in (r, theta) coordinates."""
        inner = density.sum(axis=1) * self.dtheta
        return float(np.trapezoid(inner, self.r))
