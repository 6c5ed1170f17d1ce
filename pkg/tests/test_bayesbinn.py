import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from binest.bayesbinn import (BbnHyper, J_within, collapse_step, compare_dynamics,
                              deterministic_from, run_bayesbinn, run_latent_decay_st)
from binest.core.expr import Affine, X, linear_form, make_builtin, quadratic
from binest.core.rng import RngStream
from binest.errors import DomainError, NumericError, UsageError
from binest.estimators import _one_minus_tanh2, bbgs_scaling

F8 = make_builtin("quadratic_form", dim=8, seed=0)
COLLAPSE = dict(tau=1e-10, eps=1e-10, alpha=1e-4, N=5e4)


@pytest.fixture(scope="module")
def collapse_run():
    return run_bayesbinn(F8, BbnHyper(steps=600, **COLLAPSE), seed=1234)


@pytest.mark.parametrize("kw", [{"tau": 0.0}, {"eps": -1.0}, {"alpha": 1.0}, {"N": 0.0},
                                {"steps": 0}, {"steps": 2.5}, {"lam_low": 5.0, "lam_high": 5.0}])
def test_hyper_validation(kw):
    args = dict(tau=1.0, eps=0.0, alpha=0.1, N=1.0, steps=10) | kw
    with pytest.raises(DomainError):
        BbnHyper(**args)


def test_collapse_happens_early(collapse_run):
    step = collapse_step(collapse_run)
    assert step is not None and step <= 100


def test_J_near_inverse_tau_after_large_gap(collapse_run):
    frac, count = J_within(collapse_run, 0.01, 12.0)
    assert count > 0 and frac == 1.0


def test_J_lower_bound_when_eps_equals_tau(collapse_run):
    tau = COLLAPSE["tau"]
    assert np.all(collapse_run.J >= 1.0 / (1.0 + tau))


def test_collapse_regime_update_form(collapse_run):
    h = collapse_run.hyper
    lam = collapse_run.lam
    k = np.arange(200, 600)
    pred = (1 - h.alpha) * lam[k] - (h.alpha * h.N / h.tau) * F8.grad(np.sign(lam[k]))
    np.testing.assert_allclose(lam[k + 1], pred, rtol=1e-6)


def test_matches_deterministic_rule_after_burn_in(collapse_run):
    det = deterministic_from(collapse_run, F8, 100)
    rep = compare_dynamics(collapse_run, det, 100)
    assert rep.match_fraction == 1.0
    assert rep.compared_steps == 500
    assert 0.0 <= rep.J_fraction <= 1.0


def test_tau_independence_of_signs(collapse_run):
    other = run_bayesbinn(F8, BbnHyper(steps=600, **(COLLAPSE | {"tau": 1e-11})), seed=1234)
    assert np.array_equal(other.w[100:], collapse_run.w[100:])


def test_lemma_form_matches_direct_reference():
    # eps = 0: the scaling reduces to (1 - w~^2) / (tau (1 - mu^2)).
    f = quadratic(1.0, -0.4)
    h = BbnHyper(tau=1.0, eps=0.0, alpha=0.1, N=1.0, steps=50)
    t = run_bayesbinn(f, h, seed=3, lam0=np.array([0.7]))
    rng = RngStream(3, 1)
    lam = 0.7
    for k in range(h.steps):
        assert t.lam[k, 0] == pytest.approx(lam, rel=1e-14, abs=1e-15)
        d = float(rng.half_logistic())
        w = np.tanh((lam - d) / h.tau)
        J = (1 - w * w) / (h.tau * (1 - np.tanh(lam) ** 2))
        lam = (1 - h.alpha) * lam - h.alpha * h.N * J * (2 * w - 0.4)


def test_noise_matters_outside_collapse_regime():
    h = BbnHyper(tau=1.0, eps=0.0, alpha=1e-2, N=1.0, steps=2000)
    t = run_bayesbinn(F8, h, seed=5)
    rep = compare_dynamics(t, deterministic_from(t, F8, 0), 0)
    assert rep.match_fraction < 0.9


def test_compare_dimension_mismatch(collapse_run):
    other = run_latent_decay_st(quadratic(), 0.1, [1.0], 10)
    with pytest.raises(UsageError):
        compare_dynamics(collapse_run, other, 0)


def test_overflow_reports_step():
    f = Affine((X,), (1.0,), 0.0)
    h = BbnHyper(tau=1.0, eps=0.0, alpha=0.5, N=1e308, steps=5)
    with pytest.raises(NumericError) as info:
        run_bayesbinn(f, h, seed=0, lam0=np.array([0.0]))
    assert info.value.step is not None


# deterministic rule ---------------------------------------------------------------------


def test_latent_decay_geometric_without_gradient():
    f = Affine((X,), (0.0,), 1.0)
    t = run_latent_decay_st(f, 0.1, [2.0], 20)
    np.testing.assert_allclose(t.lam[:, 0], 2.0 * 0.9 ** np.arange(21), rtol=1e-14)


@given(st.floats(1e-3, 1e3))
def test_latent_decay_sign_invariance_under_joint_scaling(c):
    # Scaling lam_bar and the gradient term together leaves every sign unchanged.
    w = np.array([0.5, -1.0, 0.25])
    f = linear_form(w) * linear_form(w, -0.3)
    fc = f * c
    lam0 = np.array([0.4, -0.2, 0.05])
    a = run_latent_decay_st(f, 0.1, lam0, 200)
    b = run_latent_decay_st(fc, 0.1, c * lam0, 200)
    assert np.array_equal(a.w, b.w)


# numerics -------------------------------------------------------------------------------


def test_stable_one_minus_tanh2():
    a = np.linspace(20.5, 400, 200)  # exponent -2a < -40
    v = _one_minus_tanh2(a)
    assert np.all(v >= 0)
    np.testing.assert_allclose(v, 4 * np.exp(-2 * a), rtol=1e-6)
    assert np.all(_one_minus_tanh2(np.array([1e12, -1e12])) == 0.0)


def test_scaling_has_no_negative_or_nan_values():
    lam = np.array([-1e9, -30.0, 0.0, 30.0, 1e9])
    J = bbgs_scaling(lam, 0.3, 1e-10, 1e-10)
    assert np.all(np.isfinite(J)) and np.all(J > 0)
