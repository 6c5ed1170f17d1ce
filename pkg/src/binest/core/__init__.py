"""Parametrizations, random streams and differentiable expressions."""

from binest.core.expr import (
    BUILTINS,
    Abs,
    Affine,
    Compose,
    Const,
    LossExpr,
    Pow,
    Prod,
    Sigmoid,
    Sum,
    Tanh,
    Var,
    derivative_1d,
    eval_expr,
    grad_expr,
    make_builtin,
    value_1d,
)
from binest.core.params import (
    Encoding,
    ParamKind,
    ParamPoint,
    convert_param,
    param_jacobian,
    transport_gradient,
)
from binest.core.rng import NoiseDraw, RngStream, sample_noise

__all__ = [
    "BUILTINS", "Abs", "Affine", "Compose", "Const", "Encoding", "LossExpr", "NoiseDraw",
    "ParamKind", "ParamPoint", "Pow", "Prod", "RngStream", "Sigmoid", "Sum", "Tanh", "Var",
    "convert_param", "derivative_1d", "eval_expr", "grad_expr", "make_builtin",
    "param_jacobian", "sample_noise", "transport_gradient", "value_1d",
]
