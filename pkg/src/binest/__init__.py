"""Single-sample gradient estimators for binary stochastic units, with exact oracles."""

__version__ = "0.1.0"

from binest.core import (
    Encoding,
    LossExpr,
    ParamKind,
    ParamPoint,
    RngStream,
    convert_param,
    make_builtin,
    param_jacobian,
)
from binest.errors import BinestError, DomainError, NumericError, ResourceError, UsageError
from binest.estimators import EstimatorKind, EstimatorSpec, GradSample

__all__ = [
    "BinestError", "DomainError", "Encoding", "EstimatorKind", "EstimatorSpec", "GradSample",
    "LossExpr", "NumericError", "ParamKind", "ParamPoint", "ResourceError", "RngStream",
    "UsageError", "__version__", "convert_param", "make_builtin", "param_jacobian",
]
