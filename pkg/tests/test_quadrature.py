import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate as sp

from binest.errors import NumericError
from binest.quadrature import QuadratureConfig, integrate, integrate_unit


def test_polynomial_exact():
    r = integrate(lambda x, xa, xb: 3 * x**2, -1.0, 2.0)
    assert r.value == pytest.approx(9.0, rel=1e-13)
    assert r.abs_error < 1e-10


def test_reversed_and_empty_interval():
    assert integrate(lambda x, xa, xb: x, 1.0, 0.0).value == pytest.approx(-0.5)
    assert integrate(lambda x, xa, xb: x, 1.0, 1.0).value == 0.0


def test_log_endpoint_singularities():
    # int_0^1 log(v) log(1 - v) dv = 2 - pi^2 / 6
    r = integrate_unit(lambda v, vb: np.log(v) * np.log(vb))
    assert r.value == pytest.approx(2 - math.pi**2 / 6, rel=1e-10)


def test_logit_squared_weight():
    # int_0^1 logit(v)^2 dv = pi^2 / 3
    r = integrate_unit(lambda v, vb: (np.log(v) - np.log(vb)) ** 2)
    assert r.value == pytest.approx(math.pi**2 / 3, rel=1e-10)


def test_algebraic_singularity_uses_distance():
    r = integrate(lambda x, xa, xb: 1 / np.sqrt(xa), 1.0, 2.0)
    assert r.value == pytest.approx(2.0, rel=1e-10)


@given(st.floats(-3, 3), st.floats(0.05, 2.0), st.integers(0, 4))
@settings(max_examples=40, deadline=None)
def test_matches_scipy_on_gs_type_integrands(eta, tau, k):
    def g(v, vb):
        z = eta - tau * (np.log(v) - np.log(vb))
        dens = np.exp(-np.abs(z)) / (1 + np.exp(-np.abs(z))) ** 2
        return v**k * dens

    ours = integrate_unit(g).value
    ref, _ = sp.quad(lambda v: g(np.array(v), np.array(1 - v)), 0, 1, epsabs=1e-13,
                     epsrel=1e-12, limit=200)
    assert ours == pytest.approx(ref, rel=1e-8, abs=1e-12)


def test_subdivision_cap_raises_with_partial():
    cfg = QuadratureConfig(rel_tol=1e-15, abs_tol=1e-300, max_subdivisions=64, max_level=1)
    with pytest.raises(NumericError) as info:
        integrate(lambda x, xa, xb: np.sin(1 / (xa + 1e-9)), 0.0, 1.0, cfg)
    assert info.value.partial is not None


@pytest.mark.parametrize("kw", [{"rel_tol": 0}, {"max_subdivisions": 10}, {"max_level": 0}])
def test_config_validation(kw):
    with pytest.raises(ValueError):
        QuadratureConfig(**kw)
