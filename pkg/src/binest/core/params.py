"""Bernoulli parametrizations and the exact maps between them.

A binary unit is described by one of four equivalent numbers:

* ``P``      probability of the "+" outcome, in (0, 1)
* ``MU``     mean of the {-1, 1} variable, ``mu = 2p - 1``
* ``ETA``    logit of p, ``eta = log(p / (1 - p))``
* ``LAMBDA`` natural parameter of the tanh form, ``mu = tanh(lambda)``, ``eta = 2 lambda``

Every conversion goes through the pair ``(p, 1 - p)``, where both halves are
computed directly from the source value so that the complement never suffers
cancellation near 0 or 1.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np
from scipy.special import expit

from binest.errors import DomainError


class ParamKind(enum.Enum):
    P = "p"
    MU = "mu"
    ETA = "eta"
    LAMBDA = "lambda"


class Encoding(enum.Enum):
    """Value set of the binary variable as seen by the loss function."""

    ZERO_ONE = "01"
    PLUS_MINUS = "pm1"

    def to_values(self, bits):
        """Map canonical {0, 1} bits into this encoding."""
        bits = np.asarray(bits, dtype=float)
        return bits if self is Encoding.ZERO_ONE else 2.0 * bits - 1.0


@dataclass(frozen=True, eq=False)
class ParamPoint:
    """A Bernoulli parameter (scalar or one entry per unit) of a given kind."""

    kind: ParamKind
    value: np.ndarray

    def __post_init__(self):
        kind = ParamKind(self.kind)
        value = np.array(self.value, dtype=float)
        value.setflags(write=False)
        object.__setattr__(self, "kind", kind)
        object.__setattr__(self, "value", value)
        _check_range(kind, value)

    @property
    def values(self) -> np.ndarray:
        return np.atleast_1d(self.value)

    @property
    def size(self) -> int:
        return self.values.size

    def __repr__(self):
        return f"ParamPoint({self.kind.name}, {self.value.tolist()!r})"


def _check_range(kind: ParamKind, value: np.ndarray) -> None:
    if not np.all(np.isfinite(value)):
        raise DomainError(f"non-finite {kind.name} value: {value}")
    if kind is ParamKind.P and np.any((value <= 0.0) | (value >= 1.0)):
        raise DomainError(f"p must lie in (0, 1), got {value}")
    if kind is ParamKind.MU and np.any((value <= -1.0) | (value >= 1.0)):
        raise DomainError(f"mu must lie in (-1, 1), got {value}")


def hub(x: ParamPoint) -> tuple[np.ndarray, np.ndarray]:
    """Return ``(p, 1 - p)`` with both entries accurate to full relative precision."""
    v = x.value
    if x.kind is ParamKind.P:
        return v, 1.0 - v
    if x.kind is ParamKind.MU:
        return 0.5 * (1.0 + v), 0.5 * (1.0 - v)
    if x.kind is ParamKind.ETA:
        return expit(v), expit(-v)
    return expit(2.0 * v), expit(-2.0 * v)


def _from_hub(p, q, to: ParamKind) -> np.ndarray:
    if to is ParamKind.P:
        return p
    if to is ParamKind.MU:
        return p - q
    eta = np.log(p) - np.log(q)
    return eta if to is ParamKind.ETA else 0.5 * eta


def _dkind_dp(p, q, kind: ParamKind) -> np.ndarray:
    if kind is ParamKind.P:
        return np.ones_like(p)
    if kind is ParamKind.MU:
        return np.full_like(p, 2.0)
    if kind is ParamKind.ETA:
        return 1.0 / (p * q)
    return 0.5 / (p * q)


def convert_param(x: ParamPoint, to: ParamKind) -> ParamPoint:
    """Express the distribution ``x`` in parametrization ``to``."""
    to = ParamKind(to)
    if to is x.kind:
        return x
    # eta <-> lambda is an exact scaling; skip the hub to keep full precision.
    if {x.kind, to} == {ParamKind.ETA, ParamKind.LAMBDA}:
        scale = 2.0 if to is ParamKind.ETA else 0.5
        return ParamPoint(to, scale * x.value)
    p, q = hub(x)
    with np.errstate(divide="raise"):
        try:
            out = _from_hub(p, q, to)
        except FloatingPointError as exc:
            raise DomainError(f"{x!r} is not representable as {to.name}") from exc
    return ParamPoint(to, out)


def param_jacobian(x: ParamPoint, to: ParamKind):
    """Derivative d(to)/d(x.kind) evaluated at ``x``."""
    to = ParamKind(to)
    p, q = hub(x)
    out = _dkind_dp(p, q, to) / _dkind_dp(p, q, x.kind)
    return float(out) if out.ndim == 0 else out


def transport_gradient(grad, at: ParamPoint, src: ParamKind, dst: ParamKind):
    """Re-express a gradient taken w.r.t. ``src`` as a gradient w.r.t. ``dst``.

    ``at`` locates the distribution (any kind).  Uses the chain rule
    ``dE/d dst = dE/d src * d src / d dst``.
    """
    src, dst = ParamKind(src), ParamKind(dst)
    point = convert_param(at, dst)
    return np.asarray(grad, dtype=float) * param_jacobian(point, src)
