"""Barrier functions and the explicit gradient-estimate constants.

For a CMC Killing graph over B_R(p) lying in

    0 <= u <= (C - log(alpha rho)) / (alpha beta)

the interior gradient is bounded by |grad u(p)| <= D, where D comes out of the
chain  C_R -> C_0 -> A -> K -> D_0 -> D_1 -> D  computed here.  The global
variants (A_1, C_1, D_0^inf, D^inf) are the R -> infinity limits for the
hyperbolic comparison profile.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import Optional

import numpy as np

from .errors import ParameterError, RegionViolationError
from .geometry import RhoBounds

# relative margin used to realise the strict inequalities
STRICT_MARGIN = 1e-6
# K used when the (k0) threshold vanishes (u(p) = 0)
K_FLOOR = 1e-3


def profile_f(k0, t):
    """Comparison profile f with f'' = K0 f, f(0) = 0, f'(0) = 1.

    Returns (f, f', f'', g) with g = f'/f (infinite at t = 0).
    """
    t = np.asarray(t, dtype=float)
    if np.any(t < 0):
        raise ParameterError("profile_f is defined for t >= 0")
    if k0 < 0:
        raise ParameterError("K0 must be nonnegative")
    if k0 == 0:
        f, fp, fpp = t * 1.0, np.ones_like(t), np.zeros_like(t)
        with np.errstate(divide="ignore"):
            g = 1.0 / t
        return f, fp, fpp, g
    s = math.sqrt(k0)
    x = s * t
    f = np.sinh(x) / s
    fp = np.cosh(x)
    fpp = k0 * f
    with np.errstate(divide="ignore", invalid="ignore"):
        small = x < 1e-4
        g = np.where(small, 1.0 / t + k0 * t / 3.0, s / np.tanh(np.where(small, 1.0, x)))
    return f, fp, fpp, g


def c_r(k0, radius):
    """C_R = int_0^R f = (cosh(sqrt(K0) R) - 1)/K0, or R^2/2 when K0 = 0."""
    if radius <= 0:
        raise ParameterError("R must be positive")
    x = math.sqrt(k0) * radius
    if x < 1e-4:
        return 0.5 * radius**2 * (1.0 + x * x / 12.0)
    return 2.0 * math.sinh(0.5 * x) ** 2 / k0


def _ratios(k0, radius):
    """(f(R)/C_R, f'(R)/C_R) evaluated without overflow for large R."""
    s = math.sqrt(k0)
    x = s * radius
    if x < 1e-4:
        # series in x; exact at K0 = 0
        return 2.0 / radius * (1.0 + x * x / 12.0), 2.0 / radius**2 * (1.0 + 5.0 * x * x / 12.0)
    f_over = s / math.tanh(0.5 * x)
    # cosh(x)/(cosh(x) - 1) = 1/(1 - 1/cosh(x))
    inv_cosh = 0.0 if x > 700 else 1.0 / math.cosh(x)
    fp_over = k0 / (1.0 - inv_cosh) if x > 1e-3 else k0 * math.cosh(x) / (2.0 * math.sinh(0.5 * x) ** 2)
    return f_over, fp_over


def xi(s, alpha, beta, big_c):
    """xi(s) = e^C int_0^s exp(-alpha beta tau) dtau and its first two derivatives."""
    s = np.asarray(s, dtype=float)
    ab = alpha * beta
    val = math.exp(big_c) * -np.expm1(-ab * s) / ab
    dot = np.exp(big_c - ab * s)
    return val, dot, -ab * dot


def h_cutoff(d, k0, radius):
    """h(d) = (1/C_R) int_0^d f, the radial part of the barrier."""
    d = np.asarray(d, dtype=float)
    return np.array([c_r(k0, x) if x > 0 else 0.0 for x in d.ravel()]).reshape(d.shape) / c_r(k0, radius)


def region_ceiling(rho, alpha, beta, big_c):
    """Upper height of the region: (C - log(alpha rho)) / (alpha beta)."""
    rho = np.asarray(rho, dtype=float)
    return (big_c - np.log(alpha * rho)) / (alpha * beta)


def in_region(u, rho, alpha, beta, big_c, atol=0.0):
    """True when 0 <= u <= ceiling at every sample.

    Raises RegionViolationError if the ceiling is negative at a sample where u
    is nonzero, listing the flat indices of those samples.
    """
    u = np.asarray(u, dtype=float)
    ceil = region_ceiling(rho, alpha, beta, big_c) * np.ones_like(u)
    bad = (ceil < 0) & (u != 0)
    if np.any(bad):
        idx = np.flatnonzero(bad)
        raise RegionViolationError(
            f"region ceiling negative at {idx.size} samples where u != 0", offending=idx.tolist()
        )
    return bool(np.all(u >= -atol) and np.all(u <= ceil + atol))


def beta_min(dim, h_mean, rho_bounds: RhoBounds):
    """Smallest admissible beta: n |H| sup rho + 2 sup |grad rho|."""
    return dim * abs(h_mean) * rho_bounds.rho_sup + 2.0 * rho_bounds.grad_rho_sup


@dataclass(frozen=True)
class EstimateInputs:
    alpha: float
    big_c: float
    beta: float
    h_mean: float
    u_at_p: float
    k0: float
    ell: float
    radius: float
    rho_bounds: RhoBounds
    dim: int = 2
    kappa_sup: Optional[float] = None

    def validate(self):
        if not self.alpha > 1.0 + STRICT_MARGIN:
            raise ParameterError(f"alpha > 1 violated (alpha = {self.alpha!r})")
        c_min = math.log(self.alpha * self.rho_bounds.rho_sup)
        if not self.big_c - c_min > STRICT_MARGIN * max(1.0, abs(c_min)):
            raise ParameterError(f"C > log(alpha sup rho) = {c_min:.12g} violated (C = {self.big_c!r})")
        if not self.beta > 0:
            raise ParameterError("beta > 0 violated")
        bmin = beta_min(self.dim, self.h_mean, self.rho_bounds)
        if self.beta < bmin:
            raise ParameterError(f"beta >= n|H| sup rho + 2 sup|grad rho| = {bmin:.12g} violated (beta = {self.beta!r})")
        if self.u_at_p < 0:
            raise ParameterError("u(p) >= 0 violated")
        if self.k0 < 0 or self.ell < 0:
            raise ParameterError("K0 >= 0 and L >= 0 required")
        if self.radius <= 0:
            raise ParameterError("R > 0 required")
        if self.dim < 2:
            raise ParameterError("n >= 2 required")
        return self


@dataclass(frozen=True)
class EstimateConstants:
    c_r: float
    c0: float
    a_bar: float
    k_exp: float
    d0: float
    d1: float
    d: float
    a1: float
    c1: float
    d0_inf: float
    k_inf: float
    d_inf: float
    k_threshold: float = field(default=0.0)
    log_d: float = field(default=0.0)  # finite even when D overflows

    def as_dict(self):
        return asdict(self)


def k_threshold(a_bar, c0, ell):
    """(A + sqrt(A^2 + C_0^2 L)) / C_0^2; zero in the limit C_0 -> infinity."""
    if math.isinf(c0):
        return 0.0
    q = a_bar / c0
    return (q + math.sqrt(q * q + ell)) / c0


def _choose_k(threshold):
    return max((1.0 + STRICT_MARGIN) * threshold, K_FLOOR)


def _d_from(d1, k):
    # D = D_1 (e^{K/2} + 1) overflows only for absurd K; inf is the honest answer
    try:
        return d1 * (math.exp(0.5 * k) + 1.0)
    except OverflowError:
        return math.inf


def _log_d_from(d1, k):
    return math.log(d1) + 0.5 * k + math.log1p(math.exp(-0.5 * k))


def constant_chain(inp: EstimateInputs) -> EstimateConstants:
    """All constants of the interior and global gradient estimates."""
    inp.validate()
    n, a = inp.dim, inp.alpha
    rb = inp.rho_bounds
    xi_p = float(xi(inp.u_at_p, inp.alpha, inp.beta, inp.big_c)[0])
    c1 = inp.alpha * inp.beta / (2.0 * math.exp(inp.big_c))
    # 1/(2 xi) written as C_1/(1 - e^{-alpha beta u(p)}) so that C_0 >= C_1 survives rounding
    sat = -math.expm1(-inp.alpha * inp.beta * inp.u_at_p)
    c0 = math.inf if xi_p == 0 else c1 / sat

    cr = c_r(inp.k0, inp.radius)
    f_over, fp_over = _ratios(inp.k0, inp.radius)
    kap = inp.kappa_sup if inp.kappa_sup is not None else rb.grad_rho_sup / rb.rho_inf
    # f' is nondecreasing, so sup_{B_R} f'(d) = f'(R)
    a_bar = 0.5 * (n * fp_over + f_over * (n * abs(inp.h_mean) + kap))
    thr = k_threshold(a_bar, c0, inp.ell)
    k = _choose_k(thr)
    d0 = max(1.0, 1.0 / (a - 1.0) + 4.0 * f_over**2 * xi_p**2 / (a - 1.0) ** 2)
    d1 = math.sqrt(1.0 + d0) / rb.rho_inf
    d = _d_from(d1, k)

    # R -> infinity with f = sinh(sqrt(K0) t)/sqrt(K0)
    rho1 = rb.global_grad_rho_sup if rb.global_grad_rho_sup is not None else rb.grad_rho_sup
    r0 = rb.global_rho_inf if rb.global_rho_inf is not None else rb.rho_inf
    sk = math.sqrt(inp.k0)
    a1 = 0.5 * (n * inp.k0 + (n * abs(inp.h_mean) + rho1 / r0) * sk)
    k_inf = _choose_k(k_threshold(a1, c1, inp.ell))
    d0_inf = max(1.0, 1.0 / (a - 1.0) + 4.0 * inp.k0 * xi_p**2 / (a - 1.0) ** 2)
    d_inf = _d_from(math.sqrt(1.0 + d0_inf) / r0, k_inf)
    return EstimateConstants(
        c_r=cr, c0=c0, a_bar=a_bar, k_exp=k, d0=d0, d1=d1, d=d,
        a1=a1, c1=c1, d0_inf=d0_inf, k_inf=k_inf, d_inf=d_inf, k_threshold=thr,
        log_d=_log_d_from(d1, k),
    )


def barrier_phi(d, s, inp: EstimateInputs, consts: EstimateConstants):
    """phi = (1 - h(d) - C_0 xi(s))^+ on the half-cylinder over B_R."""
    xs = xi(s, inp.alpha, inp.beta, inp.big_c)[0]
    with np.errstate(invalid="ignore"):
        c0xs = np.where(xs == 0, 0.0, consts.c0 * xs)
    return np.maximum(1.0 - h_cutoff(d, inp.k0, inp.radius) - c0xs, 0.0)


def eta_function(phi, k_exp):
    """eta = e^{K phi} - 1; zero wherever phi vanishes."""
    return np.expm1(k_exp * np.asarray(phi, dtype=float))
