import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from binest.core.expr import (abs_shift, bilinear, cubic, linear, make_builtin, polynomial,
                              quadratic)
from binest.core.params import Encoding, ParamKind, ParamPoint
from binest.errors import DomainError, ResourceError
from binest.estimators import EstimatorKind, EstimatorSpec
from binest.harness import fit_rate, mc_moments
from binest.oracles import (closed_moments, enumerate_outcomes, exact_expectation,
                            exact_gradient_enum, gs_asymptotics, gs_moments_quadrature,
                            gs_tail_prob_closed, gs_true_gradient, logistic_density,
                            noise_op_moments_closed, noise_op_variance_closed,
                            noise_op_variance_excess, relaxed_darn_mean_exact, taylor_c1,
                            taylor_c2)

PM = Encoding.PLUS_MINUS


def _p(v):
    return ParamPoint(ParamKind.P, v)


def _poly(rng, degree=3):
    return polynomial(rng.uniform(-2, 2, degree + 1))


# enumeration ------------------------------------------------------------------------


@pytest.mark.parametrize("p", [0.05, 0.5, 0.95])
def test_enum_abs_shift_gradient(p):
    assert exact_gradient_enum(abs_shift(0.9), _p(p), PM)[0] == pytest.approx(1.8, rel=1e-14)


def test_enum_linear_and_bilinear():
    assert exact_gradient_enum(linear(2.5, -1.0), _p(0.2))[0] == pytest.approx(2.5)
    g = exact_gradient_enum(bilinear(), _p([0.4, 0.7]), PM)
    assert g[0] == pytest.approx(0.8, rel=1e-14)
    assert g[1] == pytest.approx(2 * (2 * 0.4 - 1), rel=1e-14)


def test_enum_expectation_brute_force():
    f = make_builtin("toy_chain", n=3)
    p = np.array([0.2, 0.5, 0.9])
    total = 0.0
    for bits in enumerate_outcomes(3):
        w = np.prod(np.where(np.array(bits) == 1, p, 1 - p))
        total += w * float(f(np.array(bits, dtype=float)))
    assert exact_expectation(f, _p(p)) == pytest.approx(total, rel=1e-14)


def test_enum_gradient_matches_finite_difference():
    f = make_builtin("tanh_net", inputs=2, hidden=2, points=4)
    p = np.linspace(0.2, 0.8, f.arity)
    g = exact_gradient_enum(f, _p(p), PM)
    h = 1e-6
    for i in range(f.arity):
        e = np.zeros(f.arity)
        e[i] = h
        fd = (exact_expectation(f, _p(p + e), PM) - exact_expectation(f, _p(p - e), PM)) / (2 * h)
        assert g[i] == pytest.approx(fd, rel=1e-6, abs=1e-9)


def test_enum_limit():
    with pytest.raises(ResourceError):
        exact_gradient_enum(make_builtin("quadratic_form", dim=21), _p(np.full(21, 0.5)))


# closed ST / DARN moments -----------------------------------------------------------------


def test_closed_frozen_values():
    f = abs_shift(0.9)
    st_m = closed_moments("ST", f, 0.95, encoding=PM)
    assert st_m.mean == pytest.approx(1.8, rel=1e-14)
    dn = closed_moments("DARN", f, 0.95)
    assert dn.mean == 0.0
    assert dn.variance == pytest.approx(21.052631578947368, rel=1e-13)
    assert closed_moments("ST", linear(4.0), 0.3).variance == 0.0


@given(st.floats(0.01, 0.99), st.lists(st.floats(-3, 3), min_size=4, max_size=4),
       st.sampled_from(["01", "pm1"]))
@settings(max_examples=50)
def test_closed_st_equals_two_outcome_enumeration(p, c, enc):
    f = cubic(*c)
    e = Encoding(enc)
    lo, hi = e.to_values([0.0, 1.0])
    k = 2.0 if e is PM else 1.0
    a0, a1 = k * f.grad(np.array([lo])), k * f.grad(np.array([hi]))
    mean = (1 - p) * a0[0] + p * a1[0]
    second = (1 - p) * a0[0] ** 2 + p * a1[0] ** 2
    m = closed_moments("ST", f, p, encoding=e)
    assert m.mean == pytest.approx(mean, rel=1e-12, abs=1e-12)
    assert m.variance == pytest.approx(second - mean**2, rel=1e-10, abs=1e-12)


@given(st.floats(0.01, 0.99), st.lists(st.floats(-3, 3), min_size=4, max_size=4))
@settings(max_examples=50)
def test_darn_variance_identity(p, c):
    f = cubic(*c)
    a, b = f.grad(np.array([1.0]))[0], f.grad(np.array([-1.0]))[0]
    direct = a * a / p + b * b / (1 - p) - (a + b) ** 2
    assert closed_moments("DARN", f, p).variance == pytest.approx(direct, rel=1e-10, abs=1e-10)


def test_darn_variance_asymptote_near_one():
    f = cubic(1.0, 0.4, -0.3)
    b = f.grad(np.array([-1.0]))[0]
    ratios = [closed_moments("DARN", f, p).variance / (b * b / (1 - p))
              for p in (0.9, 0.99, 0.999)]
    gaps = [abs(r - 1) for r in ratios]
    assert gaps == sorted(gaps, reverse=True)
    assert gaps[-1] < 0.01


def test_darn_closed_domain():
    with pytest.raises(DomainError):
        closed_moments("DARN", abs_shift(), 1.0)


# correlated-sample variance ------------------------------------------------------------


def test_noise_op_closed_values():
    M, mean = 5.0, 1.0
    sigma2 = M - mean**2
    assert noise_op_variance_closed(M, mean, 0.0, 4) == pytest.approx(sigma2 / 4)
    assert noise_op_variance_closed(M, mean, 1.0, 4) == pytest.approx(sigma2)
    assert noise_op_variance_excess(4.0 + 0.0, 0.0, 0.5, 10) == pytest.approx(0.9)


@given(st.floats(0, 10), st.floats(-3, 3), st.floats(0, 1), st.integers(1, 50))
def test_noise_op_difference_identity(extra, mean, rho, S):
    M = mean**2 + extra
    diff = noise_op_variance_closed(M, mean, rho, S) - noise_op_variance_closed(M, mean, 0.0, S)
    assert diff == pytest.approx(noise_op_variance_excess(M, mean, rho, S), abs=1e-10)


def test_noise_op_inconsistent_moments():
    with pytest.raises(DomainError):
        noise_op_variance_closed(0.5, 1.0, 0.3, 2)


def test_noise_op_moments_from_base():
    m = noise_op_moments_closed("DARN", abs_shift(0.9), 0.95, 1.0, 10)
    assert m.variance == pytest.approx(closed_moments("DARN", abs_shift(0.9), 0.95).variance)


# GS quadrature -------------------------------------------------------------------------


def test_gs_mean_small_tau_is_true_gradient():
    m = gs_moments_quadrature(linear(), 0.3, 1e-4)
    assert m.mean == pytest.approx(float(logistic_density(0.3)), abs=1e-6)
    assert gs_true_gradient(linear(), 0.3) == pytest.approx(float(logistic_density(0.3)))


def test_gs_second_moment_leading_term():
    tau = 1e-3
    m = gs_moments_quadrature(linear(), 0.0, tau)
    assert m.second_moment == pytest.approx(1 / (24 * tau), rel=0.01)


@pytest.mark.parametrize("seed", range(5))
def test_stgs_mean_small_tau_limit(seed):
    f = _poly(np.random.default_rng(seed), 2)
    eta = 0.4
    d0, d1 = f.grad(np.array([[0.0], [1.0]]))[:, 0]
    m = gs_moments_quadrature(f, eta, 1e-4, "STGS")
    assert m.mean == pytest.approx(logistic_density(eta) * (d0 + d1) / 2, abs=1e-4)


def test_stgs_small_tau_bias_on_quadratic_and_gs_first_order_rate():
    f = quadratic(1.5, -0.5)
    eta = 0.3
    truth = gs_true_gradient(f, eta)
    stgs = gs_moments_quadrature(f, eta, 1e-4, "STGS").mean
    assert abs(stgs - truth) < 1e-3 * abs(truth)
    taus = [0.008, 0.004, 0.002, 0.001, 0.0005]
    gs = [gs_moments_quadrature(f, eta, tau).mean - truth for tau in taus]
    assert fit_rate(taus, gs).slope == pytest.approx(1.0, abs=0.05)


def test_quadrature_mean_matches_mc():
    rng = np.random.default_rng(42)
    worst = 0.0
    for k in range(10):
        f = _poly(rng)
        eta = float(rng.uniform(-1, 1))
        for j, tau in enumerate((1.0, 0.5)):
            q = gs_moments_quadrature(f, eta, tau).mean
            mc = mc_moments(EstimatorSpec("GS", tau=tau), f, ParamPoint(ParamKind.ETA, eta),
                            10**7, seed=9, stream=100 * k + j).item()
            worst = max(worst, abs(mc.mean - q) / mc.stderr)
    assert worst < 4.0


def test_taylor_coefficients():
    assert taylor_c1(0.0) == 0.0
    assert taylor_c2(0.0) == -0.25
    e = math.exp(0.7)
    assert taylor_c1(0.7) == pytest.approx((e - 1) / (e + 1), rel=1e-14)
    assert taylor_c2(0.7) == pytest.approx((e * e - 4 * e + 1) / (2 * (e + 1) ** 2), rel=1e-13)
    assert taylor_c2(-0.7) == taylor_c2(0.7)


def test_linear_first_order_bias_vanishes_at_zero():
    a = gs_asymptotics(linear(), 0.0, 0.1)
    assert a.bias_terms[1] == pytest.approx(0.0, abs=1e-14)
    assert a.bias_terms[0] == pytest.approx(0.0, abs=1e-12)


@pytest.mark.parametrize("f,eta", [(cubic(), 0.3), (quadratic(1.0, 0.2), -0.5), (linear(), 0.3)])
def test_bias_expansion_remainder_is_third_order(f, eta):
    taus = np.array([0.08, 0.04, 0.02, 0.01, 0.005])
    resid = []
    for tau in taus:
        exact = gs_moments_quadrature(f, eta, tau).mean - gs_true_gradient(f, eta)
        resid.append(exact - gs_asymptotics(f, eta, tau).bias)
    assert fit_rate(taus, resid).slope >= 2.7


def test_gs_second_moment_expansion_leading_order():
    f = cubic(1.0, 0.0, 0.5)
    for tau in (1e-2, 1e-3):
        a = gs_asymptotics(f, 0.2, tau)
        m = gs_moments_quadrature(f, 0.2, tau)
        assert a.second_moment == pytest.approx(m.second_moment, rel=5 * tau)


# tail probability -------------------------------------------------------------------------


def test_tail_prob_cap():
    assert gs_tail_prob_closed(0.0, 0.1, 0.25) == 0.0
    assert gs_tail_prob_closed(0.3, 1.0, 0.3) == 0.0


def test_tail_prob_linear_in_tau():
    eps = 0.01
    s = 0.5 * (1 - math.sqrt(1 - 4 * eps))
    for eta in (0.0, 0.8):
        ratio = gs_tail_prob_closed(eta, 1e-6, eps) / 1e-6
        limit = 2 * logistic_density(eta) * math.log((1 - s) / s)
        assert ratio == pytest.approx(limit, rel=1e-5)


@given(st.floats(-3, 3), st.floats(1e-3, 2), st.floats(1e-3, 0.24))
def test_tail_prob_monotone(eta, tau, eps):
    p = gs_tail_prob_closed(eta, tau, eps)
    assert 0.0 <= p <= 1.0
    assert gs_tail_prob_closed(eta, tau * 1.1, eps) >= p
    assert gs_tail_prob_closed(eta, tau, eps * 0.9) >= p


# relaxed DARN -----------------------------------------------------------------------------


@pytest.mark.parametrize("name,params", [("cubic", {}), ("quadratic", {"b": 0.3}),
                                         ("logistic_compose", {}), ("polynomial",
                                         {"coeffs": [0.1, -0.2, 0.3, 0.4, -0.5]}),
                                         ("abs_shift", {"a": 0.3})])
def test_relaxed_darn_exact_at_zero(name, params):
    f = make_builtin(name, **params)
    truth = float(f([1.0])) - float(f([-1.0]))
    assert relaxed_darn_mean_exact(f, 0.3, 0.0) == pytest.approx(truth, abs=1e-8)


@pytest.mark.parametrize("a_low", [0.0, 0.25, 0.5, 0.9])
def test_relaxed_darn_linear_every_a_low(a_low):
    assert relaxed_darn_mean_exact(linear(1.7, 0.2), 0.6, a_low) == pytest.approx(2 * 1.7)


def test_relaxed_darn_cubic_half_interval():
    # (1 / 0.5) * int_{0.5}^1 6 u^2 du = 2 * (2 (1 - 1/8)) = 3.5
    assert relaxed_darn_mean_exact(cubic(), 0.5, 0.5) == pytest.approx(3.5, rel=1e-12)


def test_relaxed_darn_domain():
    with pytest.raises(DomainError):
        relaxed_darn_mean_exact(cubic(), 0.5, 1.0)


def test_closed_moments_kind_check():
    with pytest.raises(Exception):
        closed_moments(EstimatorKind.GS, cubic(), 0.5)
