"""A small forward-mode differentiable expression library.

Expressions are trees over input variables ``x[..., 0] .. x[..., n-1]``.
Evaluation is vectorized over any leading batch shape; every node returns its
value together with the gradient with respect to all ``n`` inputs.  The
derivative of ``|.|`` at its kink is taken as 0.
"""

from __future__ import annotations

from collections.abc import Sequence

import numpy as np
from scipy.special import expit

from binest.errors import UsageError


class LossExpr:
    """Base node.  Subclasses implement :meth:`_forward`."""

    children: tuple["LossExpr", ...] = ()

    @property
    def arity(self) -> int:
        return max((c.arity for c in self.children), default=0)

    def _forward(self, x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        raise NotImplementedError

    def forward(self, x) -> tuple[np.ndarray, np.ndarray]:
        x = np.asarray(x, dtype=float)
        _check_arity(self, x)
        return self._forward(x)

    def __call__(self, x) -> np.ndarray:
        return self.forward(x)[0]

    def grad(self, x) -> np.ndarray:
        return self.forward(x)[1]

    # operator sugar ---------------------------------------------------------
    def __add__(self, other):
        return Sum((self, as_expr(other)))

    __radd__ = __add__

    def __sub__(self, other):
        return Affine((self, as_expr(other)), (1.0, -1.0))

    def __rsub__(self, other):
        return Affine((as_expr(other), self), (1.0, -1.0))

    def __mul__(self, other):
        if isinstance(other, (int, float)):
            return Affine((self,), (float(other),))
        return Prod((self, as_expr(other)))

    __rmul__ = __mul__

    def __neg__(self):
        return Affine((self,), (-1.0,))

    def __pow__(self, k):
        return Pow(self, k)


def as_expr(v) -> LossExpr:
    return v if isinstance(v, LossExpr) else Const(float(v))


def _check_arity(f: LossExpr, x: np.ndarray) -> None:
    n = x.shape[-1] if x.ndim else 0
    if n != f.arity:
        raise UsageError(f"expression takes {f.arity} inputs, got vector of length {n}")


class Const(LossExpr):
    def __init__(self, c: float):
        self.c = float(c)

    def _forward(self, x):
        shape = x.shape[:-1]
        return np.full(shape, self.c), np.zeros(x.shape)

    def __repr__(self):
        return f"{self.c:g}"


class Var(LossExpr):
    def __init__(self, index: int):
        if index < 0:
            raise UsageError("variable index must be non-negative")
        self.index = int(index)

    @property
    def arity(self) -> int:
        return self.index + 1

    def _forward(self, x):
        g = np.zeros(x.shape)
        g[..., self.index] = 1.0
        return x[..., self.index].copy(), g

    def __repr__(self):
        return f"x{self.index}"


class Sum(LossExpr):
    def __init__(self, terms: Sequence[LossExpr]):
        self.children = tuple(as_expr(t) for t in terms)

    def _forward(self, x):
        val, grad = self.children[0]._forward(x)
        for c in self.children[1:]:
            v, g = c._forward(x)
            val, grad = val + v, grad + g
        return val, grad

    def __repr__(self):
        return "(" + " + ".join(map(repr, self.children)) + ")"


class Affine(LossExpr):
    """Weighted sum ``sum_k w_k * child_k + bias``."""

    def __init__(self, terms: Sequence[LossExpr], weights: Sequence[float], bias: float = 0.0):
        self.children = tuple(as_expr(t) for t in terms)
        self.weights = tuple(float(w) for w in weights)
        if len(self.weights) != len(self.children):
            raise UsageError("one weight per term required")
        self.bias = float(bias)

    def _forward(self, x):
        val = np.full(x.shape[:-1], self.bias)
        grad = np.zeros(x.shape)
        for w, c in zip(self.weights, self.children):
            v, g = c._forward(x)
            val = val + w * v
            grad = grad + w * g
        return val, grad

    def __repr__(self):
        parts = [f"{w:g}*{c!r}" for w, c in zip(self.weights, self.children)]
        if self.bias:
            parts.append(f"{self.bias:g}")
        return "(" + " + ".join(parts) + ")"


def linear_form(weights: Sequence[float], bias: float = 0.0, offset: int = 0) -> Affine:
    """``sum_i weights[i] * x[offset + i] + bias``."""
    return Affine([Var(offset + i) for i in range(len(weights))], weights, bias)


class Prod(LossExpr):
    def __init__(self, factors: Sequence[LossExpr]):
        self.children = tuple(as_expr(t) for t in factors)

    def _forward(self, x):
        val, grad = self.children[0]._forward(x)
        for c in self.children[1:]:
            v, g = c._forward(x)
            val, grad = val * v, val[..., None] * g + v[..., None] * grad
        return val, grad

    def __repr__(self):
        return "(" + " * ".join(map(repr, self.children)) + ")"


class Pow(LossExpr):
    def __init__(self, base: LossExpr, k: int):
        if int(k) != k or k < 0:
            raise UsageError("only non-negative integer powers are supported")
        self.children = (as_expr(base),)
        self.k = int(k)

    def _forward(self, x):
        v, g = self.children[0]._forward(x)
        if self.k == 0:
            return np.ones_like(v), np.zeros_like(g)
        return v**self.k, (self.k * v ** (self.k - 1))[..., None] * g

    def __repr__(self):
        return f"{self.children[0]!r}^{self.k}"


class _Unary(LossExpr):
    name = "?"

    def __init__(self, arg: LossExpr):
        self.children = (as_expr(arg),)

    def __repr__(self):
        return f"{self.name}({self.children[0]!r})"


class Abs(_Unary):
    name = "abs"

    def _forward(self, x):
        v, g = self.children[0]._forward(x)
        return np.abs(v), np.sign(v)[..., None] * g


class Tanh(_Unary):
    name = "tanh"

    def _forward(self, x):
        v, g = self.children[0]._forward(x)
        t = np.tanh(v)
        return t, (1.0 - t * t)[..., None] * g


class Sigmoid(_Unary):
    name = "sigmoid"

    def _forward(self, x):
        v, g = self.children[0]._forward(x)
        s = expit(v)
        return s, (s * expit(-v))[..., None] * g


class Compose(LossExpr):
    """``child(scale * x + shift)`` with elementwise ``scale`` and ``shift``.

    Used for encoding adapters (``f(2x - 1)``) and representation rescaling
    (``f(x / t)``).
    """

    def __init__(self, child: LossExpr, scale=1.0, shift=0.0):
        self.children = (child,)
        self.scale = np.broadcast_to(np.asarray(scale, dtype=float), (child.arity,)).copy()
        self.shift = np.broadcast_to(np.asarray(shift, dtype=float), (child.arity,)).copy()

    def _forward(self, x):
        v, g = self.children[0]._forward(x * self.scale + self.shift)
        return v, g * self.scale

    def __repr__(self):
        return f"{self.children[0]!r}∘({self.scale.tolist()}·x + {self.shift.tolist()})"


def eval_expr(f: LossExpr, x) -> np.ndarray | float:
    """Value of ``f`` at ``x`` (a vector of length ``f.arity`` or a batch of them)."""
    out = f(x)
    return float(out) if np.ndim(out) == 0 else out


def grad_expr(f: LossExpr, x) -> np.ndarray:
    """Gradient of ``f`` at ``x``; same batching rules as :func:`eval_expr`."""
    return f.grad(x)


def derivative_1d(f: LossExpr, v) -> np.ndarray:
    """``f'(v)`` for a single-input expression, vectorized over ``v``."""
    if f.arity != 1:
        raise UsageError(f"expected a single-input expression, got arity {f.arity}")
    v = np.asarray(v, dtype=float)
    return f.grad(v[..., None])[..., 0]


def value_1d(f: LossExpr, v) -> np.ndarray:
    if f.arity != 1:
        raise UsageError(f"expected a single-input expression, got arity {f.arity}")
    v = np.asarray(v, dtype=float)
    return f(v[..., None])


# builtins -------------------------------------------------------------------

X = Var(0)


def linear(h: float = 1.0, c: float = 0.0) -> LossExpr:
    return Affine((X,), (h,), c)


def quadratic(a: float = 1.0, b: float = 0.0, c: float = 0.0) -> LossExpr:
    return Affine((Pow(X, 2), X), (a, b), c)


def cubic(a: float = 1.0, b: float = 0.0, c: float = 0.0, d: float = 0.0) -> LossExpr:
    return Affine((Pow(X, 3), Pow(X, 2), X), (a, b, c), d)


def polynomial(coeffs: Sequence[float]) -> LossExpr:
    """``sum_k coeffs[k] * x**k``."""
    coeffs = [float(c) for c in coeffs]
    if not coeffs:
        raise UsageError("polynomial needs at least one coefficient")
    terms = [Pow(X, k) for k in range(1, len(coeffs))]
    if not terms:
        return Affine((X,), (0.0,), coeffs[0])
    return Affine(terms, coeffs[1:], coeffs[0])


def abs_shift(a: float = 0.9) -> LossExpr:
    return Abs(Affine((X,), (1.0,), a))


def logistic_compose(w: float = 2.0, b: float = -1.0) -> LossExpr:
    return Sigmoid(Affine((X,), (w,), b))


def bilinear() -> LossExpr:
    return Prod((Var(0), Var(1)))


def toy_chain(n: int = 3, w: float = 1.5, b: float = -0.5) -> LossExpr:
    """Nested tanh units fed by successive inputs, squared at the output."""
    h = Tanh(Affine((Var(0),), (w,), b))
    for i in range(1, int(n)):
        h = Tanh(Affine((h, Var(i)), (w, w), b))
    return Pow(h, 2)


def quadratic_form(dim: int = 8, seed: int = 0) -> LossExpr:
    """``||A x - b||^2`` with fixed Gaussian ``A`` (scaled by 1/sqrt(dim)) and ``b``."""
    rng = np.random.default_rng(seed)
    A = rng.standard_normal((dim, dim)) / np.sqrt(dim)
    b = rng.standard_normal(dim)
    return Sum([Pow(linear_form(A[k], -b[k]), 2) for k in range(dim)])


def tanh_net(inputs: int = 3, hidden: int = 4, points: int = 16, seed: int = 0) -> LossExpr:
    """Mean squared error of a 2-layer tanh network on fixed synthetic data.

    Variables are the first-layer weights (``inputs * hidden``, row-major)
    followed by the output weights (``hidden``).
    """
    rng = np.random.default_rng(seed)
    data = rng.standard_normal((points, inputs))
    target = np.sign(data[:, 0] * data[:, -1] + 0.1)
    n_first = inputs * hidden
    losses = []
    for x_k, t_k in zip(data, target):
        units = [
            Tanh(Affine([Var(j * inputs + i) for i in range(inputs)], x_k / np.sqrt(inputs)))
            for j in range(hidden)
        ]
        out = Affine([Prod((u, Var(n_first + j))) for j, u in enumerate(units)],
                     [1.0 / np.sqrt(hidden)] * hidden, -t_k)
        losses.append(Pow(out, 2))
    return Affine(losses, [1.0 / points] * points)


BUILTINS = {
    "linear": (linear, {"h": "real", "c": "real"}, "h*x + c"),
    "quadratic": (quadratic, {"a": "real", "b": "real", "c": "real"}, "a*x^2 + b*x + c"),
    "cubic": (cubic, {"a": "real", "b": "real", "c": "real", "d": "real"},
              "a*x^3 + b*x^2 + c*x + d"),
    "polynomial": (polynomial, {"coeffs": "list[real], ascending powers"}, "sum_k c_k x^k"),
    "abs_shift": (abs_shift, {"a": "real"}, "|x + a|"),
    "logistic_compose": (logistic_compose, {"w": "real", "b": "real"}, "sigmoid(w*x + b)"),
    "bilinear": (bilinear, {}, "x0 * x1"),
    "toy_chain": (toy_chain, {"n": "int >= 1", "w": "real", "b": "real"},
                  "tanh chain over n inputs, squared"),
    "quadratic_form": (quadratic_form, {"dim": "int >= 1", "seed": "int"}, "||A x - b||^2"),
    "tanh_net": (tanh_net, {"inputs": "int", "hidden": "int", "points": "int", "seed": "int"},
                 "2-layer tanh network MSE on synthetic data"),
}


def make_builtin(name: str, **params) -> LossExpr:
    try:
        factory = BUILTINS[name][0]
    except KeyError:
        raise UsageError(f"unknown builtin function {name!r}; known: {sorted(BUILTINS)}") from None
    try:
        return factory(**params)
    except TypeError as exc:
        raise UsageError(f"bad parameters for {name}: {exc}") from None
