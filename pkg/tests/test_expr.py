import numpy as np
import pytest

from binest.core.expr import (BUILTINS, Abs, Compose, X, abs_shift, cubic, derivative_1d,
                              eval_expr, grad_expr, linear, make_builtin, polynomial)
from binest.errors import UsageError

SMALL = {"toy_chain": {"n": 3}, "quadratic_form": {"dim": 4}, "tanh_net": {"points": 4}}


def _kink_distance(name, x):
    if name == "abs_shift":
        return np.abs(x[:, 0] + 0.9)
    return np.full(x.shape[0], np.inf)


def test_eval_examples():
    assert eval_expr(abs_shift(0.9), [1.0]) == pytest.approx(1.9)
    assert eval_expr(abs_shift(0.9), [-1.0]) == pytest.approx(0.1)
    assert eval_expr(make_builtin("bilinear"), [1.0, -1.0]) == -1.0


def test_grad_examples():
    assert grad_expr(abs_shift(0.9), [1.0]).tolist() == [1.0]
    assert grad_expr(abs_shift(0.9), [-1.0]).tolist() == [-1.0]
    assert grad_expr(cubic(), [0.5]).tolist() == pytest.approx([0.75])


def test_abs_kink_derivative_is_zero():
    assert grad_expr(Abs(X), [0.0]).tolist() == [0.0]


@pytest.mark.parametrize("name", sorted(BUILTINS))
def test_builtin_gradients_match_central_differences(name):
    params = SMALL.get(name, {})
    if name == "polynomial":
        params = {"coeffs": [0.3, -1.0, 0.5, 2.0]}
    f = make_builtin(name, **params)
    rng = np.random.default_rng(0)
    x = rng.uniform(-1.5, 1.5, size=(100, f.arity))
    keep = _kink_distance(name, x) > 1e-3
    g = f.grad(x)
    h = 1e-6
    for i in range(f.arity):
        e = np.zeros(f.arity)
        e[i] = h
        fd = (f(x + e) - f(x - e)) / (2 * h)
        assert np.max(np.abs(g[keep, i] - fd[keep])) < 1e-6


def test_batching_shapes():
    f = make_builtin("bilinear")
    x = np.ones((3, 4, 2))
    assert f(x).shape == (3, 4)
    assert f.grad(x).shape == (3, 4, 2)


def test_compose_chain_rule():
    f = Compose(cubic(), scale=0.1)
    assert eval_expr(f, [2.0]) == pytest.approx(0.008)
    assert grad_expr(f, [2.0])[0] == pytest.approx(0.1 * 3 * 0.04)


def test_operator_overloads():
    f = (linear(2.0) * X - 1.0) ** 2 + 3.0
    assert eval_expr(f, [1.5]) == pytest.approx((3.0 * 1.5 - 1.0) ** 2 + 3.0)
    assert derivative_1d(f, 1.5) == pytest.approx(2 * (4.5 - 1.0) * 6.0)


def test_polynomial_constant_only():
    f = polynomial([2.5])
    assert eval_expr(f, [9.0]) == 2.5
    assert grad_expr(f, [9.0]).tolist() == [0.0]


def test_arity_mismatch():
    with pytest.raises(UsageError):
        make_builtin("bilinear")([1.0])
    with pytest.raises(UsageError):
        derivative_1d(make_builtin("bilinear"), 0.5)


def test_unknown_builtin():
    with pytest.raises(UsageError):
        make_builtin("sine")
    with pytest.raises(UsageError):
        make_builtin("linear", slope=2.0)
