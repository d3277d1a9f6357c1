import math

import mpmath as mp
import numpy as np
import pytest
from hypothesis import assume, given, strategies as st
from scipy.integrate import quad

from kgl.errors import ParameterError, RegionViolationError
from kgl.estimates import (
    K_FLOOR,
    STRICT_MARGIN,
    EstimateInputs,
    barrier_phi,
    beta_min,
    c_r,
    constant_chain,
    eta_function,
    h_cutoff,
    in_region,
    k_threshold,
    profile_f,
    region_ceiling,
    xi,
)
from kgl.geometry import DecayingRho, RhoBounds, make_radial, rho_bounds

RB1 = RhoBounds(1.0, 0.0, 1.0)


def inputs(**kw):
    base = dict(alpha=2.0, big_c=1.0, beta=1.0, h_mean=0.0, u_at_p=0.1, k0=1.0, ell=1.0, radius=2.0,
                rho_bounds=RB1, dim=2)
    base.update(kw)
    return EstimateInputs(**base)


# ---------------------------------------------------------------- profile, C_R, xi
def test_profile_f_examples():
    f, fp, fpp, g = profile_f(0.0, 2.0)
    assert (f, fp, fpp, g) == (2.0, 1.0, 0.0, 0.5)
    f, fp, _, _ = profile_f(1.0, 1.0)
    assert f == pytest.approx(1.17520119364, abs=1e-11)
    assert fp == pytest.approx(math.cosh(1.0), abs=1e-15)
    for k0 in (0.0, 0.3, 1.0, 7.0):
        assert profile_f(k0, 0.0)[1] == 1.0


@given(st.one_of(st.just(0.0), st.floats(1e-8, 5.0)), st.floats(1e-6, 8.0))
def test_profile_f_ode_and_log_derivative(k0, t):
    f, fp, fpp, g = profile_f(k0, t)
    assert fpp == pytest.approx(k0 * f, rel=1e-14, abs=1e-300)
    if t > 0:
        assert g == pytest.approx(fp / f, rel=1e-9)


def test_profile_f_series_guard_near_zero():
    t = np.array([1e-9, 1e-6, 1e-5])
    _, _, _, g = profile_f(2.0, t)
    np.testing.assert_allclose(g, 1 / t + 2.0 * t / 3, rtol=1e-12)


def test_profile_f_domain():
    with pytest.raises(ParameterError):
        profile_f(1.0, -0.1)


def test_c_r_examples():
    assert c_r(0.0, 2.0) == 2.0
    assert c_r(1.0, 1.0) == pytest.approx(0.54308063482, abs=1e-11)
    with pytest.raises(ParameterError):
        c_r(1.0, 0.0)


@pytest.mark.parametrize("k0,R", [(0.0, 1.3), (1.0, 1.0), (2.0, 3.0), (0.1, 10.0)])
def test_c_r_matches_quadrature(k0, R):
    ref, _ = quad(lambda t: float(profile_f(k0, t)[0]), 0.0, R, epsabs=0.0, epsrel=1e-13)
    assert abs(c_r(k0, R) - ref) <= 1e-10 * max(1.0, ref)


def test_f_over_c_r_limit():
    f = float(profile_f(1.0, 20.0)[0])
    assert abs(f / c_r(1.0, 20.0) - 1.0) < 1e-8


def test_xi_examples():
    assert float(xi(0.0, 2.0, 1.0, 1.0)[0]) == 0.0
    # closed form e(1 - e^-2)/2 equals sinh(1)
    assert float(xi(1.0, 2.0, 1.0, 1.0)[0]) == pytest.approx(1.1752012, abs=5e-8)
    assert float(xi(1.0, 2.0, 1.0, 1.0)[0]) == pytest.approx(math.e * (1 - math.exp(-2)) / 2, rel=1e-15)
    s = np.linspace(0, 40, 200)
    v = xi(s, 2.0, 1.0, 1.0)[0]
    assert np.all(np.diff(v) >= 0) and np.all(v <= math.e / 2) and np.all(v[:20] < math.e / 2)
    assert v[-1] == pytest.approx(math.e / 2, rel=1e-15)


@given(st.floats(0, 10), st.floats(1.01, 5), st.floats(0.01, 5), st.floats(-3, 3))
def test_xi_ode(s, a, b, c):
    _, d1, d2 = xi(s, a, b, c)
    assert abs(d2 + a * b * d1) <= 1e-12 * max(1.0, abs(d1))
    assert d1 > 0 and d2 <= 0


# ---------------------------------------------------------------- region
def test_region_ceiling_examples():
    assert float(region_ceiling(1.0, 2.0, 1.0, 1.0)) == pytest.approx((1 - math.log(2)) / 2, rel=1e-15)
    assert float(region_ceiling(1.0, 2.0, 1.0, 1.0)) == pytest.approx(0.15343, abs=5e-6)
    assert in_region(np.zeros(10), np.ones(10), 2.0, 1.0, 1.0)
    assert not in_region(np.full(3, 0.2), np.ones(3), 2.0, 1.0, 1.0)
    assert not in_region(np.full(3, -0.01), np.ones(3), 2.0, 1.0, 1.0)


def test_region_violation_lists_samples():
    rho = np.array([1.0, 5.0, 5.0])
    with pytest.raises(RegionViolationError) as err:
        in_region(np.array([0.1, 0.0, 0.1]), rho, 2.0, 1.0, 1.0)
    assert err.value.offending == [2]


def test_example_ceiling_grows_with_r():
    g = make_radial("euclidean", DecayingRho(1.0, "log1p"))
    r = np.linspace(0, 200, 2001)
    ceil = region_ceiling(g.rho_at(r), 2.0, 1.0, 2.0)
    assert np.all(np.diff(ceil) > 0)
    assert np.all(np.diff(g.rho_at(r)) < 0)
    # ceiling rises to (C - log(alpha c))/(alpha beta) as rho decreases to c
    assert ceil[-1] < (2.0 - math.log(2.0)) / 2.0


def test_beta_min_exact():
    g = make_radial("euclidean", DecayingRho(1.0, "linear"))
    rb = rho_bounds(g, 1.0)
    assert beta_min(3, -0.4, rb) == 3 * 0.4 * rb.rho_sup + 2 * rb.grad_rho_sup
    inputs(beta=beta_min(2, 0.5, RB1), h_mean=0.5).validate()
    with pytest.raises(ParameterError, match="beta"):
        inputs(beta=0.999, h_mean=0.5).validate()


@pytest.mark.parametrize(
    "kw,word",
    [
        (dict(alpha=1.0), "alpha"),
        (dict(big_c=math.log(2.0)), "C >"),
        (dict(beta=0.0), "beta"),
        (dict(u_at_p=-0.1), "u\\(p\\)"),
        (dict(radius=0.0), "R"),
    ],
)
def test_invalid_inputs_name_the_inequality(kw, word):
    with pytest.raises(ParameterError, match=word):
        constant_chain(inputs(**kw))


# ---------------------------------------------------------------- constant chain
def chain_oracle(inp: EstimateInputs):
    """Direct transcription of the constant formulas in 40-digit arithmetic."""
    mp.mp.dps = 40
    a, c, b, h, up = (mp.mpf(x) for x in (inp.alpha, inp.big_c, inp.beta, inp.h_mean, inp.u_at_p))
    k0, ell, R, n = mp.mpf(inp.k0), mp.mpf(inp.ell), mp.mpf(inp.radius), inp.dim
    rb = inp.rho_bounds
    xi_p = mp.e**c * (1 - mp.e ** (-a * b * up)) / (a * b)
    c0 = mp.inf if xi_p == 0 else 1 / (2 * xi_p)
    if k0 > 0:
        s = mp.sqrt(k0)
        f, fp, cr = mp.sinh(s * R) / s, mp.cosh(s * R), (mp.cosh(s * R) - 1) / k0
    else:
        f, fp, cr = R, mp.mpf(1), R**2 / 2
    kap = mp.mpf(rb.grad_rho_sup) / rb.rho_inf
    A = (n * fp / cr + f / cr * (n * abs(h) + kap)) / 2
    thr = 0 if c0 == mp.inf else (A + mp.sqrt(A**2 + c0**2 * ell)) / c0**2
    K = max((1 + mp.mpf(STRICT_MARGIN)) * thr, mp.mpf(K_FLOOR))
    d0 = max(1, 1 / (a - 1) + 4 * f**2 * xi_p**2 / ((a - 1) ** 2 * cr**2))
    d1 = mp.sqrt(1 + d0) / rb.rho_inf
    d = d1 * (mp.e ** (K / 2) + 1)
    rho1 = rb.global_grad_rho_sup if rb.global_grad_rho_sup is not None else rb.grad_rho_sup
    r0 = rb.global_rho_inf if rb.global_rho_inf is not None else rb.rho_inf
    a1 = (n * k0 + (n * abs(h) + mp.mpf(rho1) / r0) * mp.sqrt(k0)) / 2
    c1 = a * b / (2 * mp.e**c)
    kinf = max((1 + mp.mpf(STRICT_MARGIN)) * (a1 + mp.sqrt(a1**2 + c1**2 * ell)) / c1**2, mp.mpf(K_FLOOR))
    d0inf = max(1, 1 / (a - 1) + 4 * k0 * xi_p**2 / (a - 1) ** 2)
    dinf = mp.sqrt(1 + d0inf) / r0 * (mp.e ** (kinf / 2) + 1)
    return dict(c_r=cr, c0=c0, a_bar=A, k_exp=K, d0=d0, d1=d1, d=d, a1=a1, c1=c1, d0_inf=d0inf, k_inf=kinf, d_inf=dinf)


@pytest.mark.parametrize(
    "kw",
    [
        dict(),
        dict(k0=0.0, radius=3.0, u_at_p=0.5, ell=0.0),
        dict(h_mean=-0.2, beta=2.0, u_at_p=1.0, k0=1.0, radius=5.0, ell=2.0),
        dict(rho_bounds=RhoBounds(2.0, 1.0, 1.0 + math.exp(-2), 2.0, 1.0, 1.0), big_c=3.0, beta=3.0, radius=2.0),
        dict(u_at_p=0.0, dim=4, h_mean=0.1, beta=1.0),
    ],
)
def test_constant_chain_matches_oracle(kw):
    inp = inputs(**kw)
    got = constant_chain(inp).as_dict()
    for key, ref in chain_oracle(inp).items():
        if ref == mp.inf:
            assert math.isinf(got[key])
        else:
            assert got[key] == pytest.approx(float(ref), rel=1e-12), key


def test_u_p_zero_degenerate_case():
    k = constant_chain(inputs(u_at_p=0.0))
    assert math.isinf(k.c0) and k.k_threshold == 0.0 and k.k_exp == K_FLOOR
    assert k.d0 == max(1.0, 1.0 / (2.0 - 1.0))


def test_a1_example():
    k = constant_chain(inputs(h_mean=0.0, k0=1.0, rho_bounds=RhoBounds(1.0, 0.0, 1.0)))
    assert k.a1 == 1.0


def test_c0_c1_example():
    k = constant_chain(inputs(u_at_p=1.0, radius=3.0))
    assert k.c0 == pytest.approx(1 / (2 * math.sinh(1.0)), rel=1e-14)
    assert k.c1 == pytest.approx(0.36788, abs=5e-6)
    assert k.c0 > k.c1


def test_log_d_consistent():
    k = constant_chain(inputs(u_at_p=1.0, ell=3.0))
    assert k.log_d == pytest.approx(math.log(k.d), rel=1e-13)


@given(
    st.floats(1.01, 4.0), st.floats(0.0, 2.0), st.floats(0.05, 3.0), st.floats(0.0, 2.0), st.floats(0.0, 3.0),
    st.floats(0.1, 30.0), st.floats(0.0, 5.0),
)
def test_strict_k_inequality_and_positivity(alpha, c_extra, beta, u_p, k0, R, ell):
    inp = inputs(alpha=alpha, big_c=math.log(alpha) + 1e-3 + c_extra, beta=beta, u_at_p=u_p, k0=k0, radius=R, ell=ell)
    k = constant_chain(inp)
    if not math.isinf(k.c0):
        q = k.a_bar / k.c0  # scaled form avoids overflow of C_0^2
        assert k.k_exp * k.c0 > q + math.sqrt(q * q + ell)
    assert k.k_inf * k.c1**2 > k.a1 + math.sqrt(k.a1**2 + k.c1**2 * ell)
    for v in (k.c_r, k.c0, k.a_bar, k.k_exp, k.d0, k.d1, k.d, k.c1, k.d0_inf, k.k_inf, k.d_inf):
        assert v > 0
    assert k.d >= k.d1
    assert k.c0 >= k.c1


@given(
    st.floats(1.01, 4.0), st.floats(0.0, 2.0), st.floats(0.05, 3.0), st.floats(0.0, 2.0), st.floats(0.0, 3.0),
    st.floats(0.1, 20.0), st.floats(0.0, 5.0), st.floats(0.0, 1.0), st.integers(0, 3),
)
def test_d_monotone(alpha, c_extra, beta, u_p, k0, R, ell, bump, which):
    h = 0.0 if which != 1 else 0.1
    base = dict(alpha=alpha, big_c=math.log(alpha) + 1e-3 + c_extra, beta=beta + 1.0, u_at_p=u_p, k0=k0, radius=R,
                ell=ell, h_mean=h)
    lo = constant_chain(inputs(**base))
    key = ["ell", "h_mean", "k0", "u_at_p"][which]
    hi_kw = dict(base)
    hi_kw[key] = base[key] + bump if key != "h_mean" else -(abs(h) + bump * 0.5)
    hi = constant_chain(inputs(**hi_kw))
    assume(math.isfinite(hi.d))
    assert hi.d >= lo.d * (1 - 1e-14)


@pytest.mark.parametrize("k0", [0.25, 1.0, 4.0])
@pytest.mark.parametrize("u_p", [0.0, 0.3, 2.0])
def test_d0_tends_to_global_value(k0, u_p):
    R = 40.0 / math.sqrt(k0)
    for r in (R, 2 * R):
        k = constant_chain(inputs(k0=k0, radius=r, u_at_p=u_p))
        assert abs(k.d0 - k.d0_inf) <= 1e-6


def test_d_is_r_independent_for_flat_inputs():
    d8 = constant_chain(inputs(k0=0.0, ell=0.0, u_at_p=0.0, radius=8.0)).d
    d64 = constant_chain(inputs(k0=0.0, ell=0.0, u_at_p=0.0, radius=64.0)).d
    assert 1.0 <= d8 / d64 <= 1.001


def test_k_threshold_limit():
    assert k_threshold(1.0, math.inf, 3.0) == 0.0
    assert k_threshold(1.0, 2.0, 0.0) == pytest.approx(0.5)


# ---------------------------------------------------------------- barrier diagnostics
def test_barrier_phi_and_eta():
    inp = inputs(u_at_p=0.2)
    k = constant_chain(inp)
    d = np.linspace(0, inp.radius, 50)
    s = np.linspace(0, 0.2, 50)
    phi = barrier_phi(d, s, inp, k)
    assert np.all((phi >= 0) & (phi <= 1))
    assert barrier_phi(np.array([0.0]), np.array([0.0]), inp, k)[0] == 1.0
    assert barrier_phi(np.array([inp.radius]), np.array([0.0]), inp, k)[0] == 0.0
    eta = eta_function(phi, k.k_exp)
    assert np.all(eta[phi == 0] == 0) and np.all(eta >= 0)
    assert float(h_cutoff(np.array(inp.radius), inp.k0, inp.radius)) == pytest.approx(1.0)
