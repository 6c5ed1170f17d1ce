"""Adaptive tanh-sinh (double exponential) quadrature.

The rule maps ``t`` in ``[-T, T]`` onto ``(a, b)`` through
``x = mid + d tanh(pi/2 sinh t)``; nodes crowd double-exponentially toward
the endpoints, so integrands with logarithmic or algebraic endpoint
singularities converge at the same rate as smooth ones.  The step ``h`` is
halved until two successive estimates agree; intervals that fail to converge
are bisected, up to ``max_subdivisions`` intervals in total.

Integrands receive ``(x, xa, xb)`` where ``xa = x - A`` and ``xb = B - x`` are
distances to the endpoints of the *original* interval ``[A, B]``, computed
without cancellation.  Integrands singular at an endpoint should use these
distances rather than ``x`` itself.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from binest.errors import NumericError

_T_MAX = 4.0
_HALF_PI = 0.5 * math.pi


@dataclass(frozen=True)
class QuadratureConfig:
    rel_tol: float = 1e-10
    abs_tol: float = 1e-13
    max_subdivisions: int = 256
    max_level: int = 8

    def __post_init__(self):
        if not (self.rel_tol > 0 and self.abs_tol > 0):
            raise ValueError("quadrature tolerances must be positive")
        if self.max_subdivisions < 64:
            raise ValueError("max_subdivisions must be at least 64")
        if self.max_level < 1:
            raise ValueError("max_level must be at least 1")


@dataclass(frozen=True)
class QuadResult:
    value: float
    abs_error: float
    intervals: int


Integrand = Callable[[np.ndarray, np.ndarray, np.ndarray], np.ndarray]


def _nodes(t: np.ndarray, d: float):
    """Endpoint distance and weight of the nodes at ``+-t`` (t >= 0) for half-width ``d``."""
    u = _HALF_PI * np.sinh(t)
    e = np.exp(-2.0 * u)
    dist = d * 2.0 * e / (1.0 + e)
    w = d * _HALF_PI * np.cosh(t) * 4.0 * e / (1.0 + e) ** 2
    return dist, w


def _rule(fun: Integrand, a: float, b: float, off_a: float, off_b: float,
          cfg: QuadratureConfig, tol_abs: float):
    d = 0.5 * (b - a)
    width = b - a

    def level_sum(t, include_center):
        dist, w = _nodes(t, d)
        keep = (dist > 0.0) & (w > 0.0)
        dist, w = dist[keep], w[keep]
        # Left nodes sit at distance ``dist`` from a, right nodes at ``dist`` from b.
        xa = np.concatenate([off_a + dist, off_a + (width - dist)])
        xb = np.concatenate([off_b + (width - dist), off_b + dist])
        x = np.concatenate([a + dist, b - dist])
        s = float(np.dot(np.concatenate([w, w]), fun(x, xa, xb)))
        if include_center:
            c = np.array([a + d])
            s += d * _HALF_PI * float(fun(c, np.array([off_a + d]), np.array([off_b + d]))[0])
        return s

    h = 1.0
    acc = level_sum(np.arange(1.0, _T_MAX + 0.5 * h, h), True)
    prev = acc * h
    for level in range(1, cfg.max_level + 1):
        h = 0.5 * h
        acc += level_sum(np.arange(h, _T_MAX, 2.0 * h), False)
        est = acc * h
        err = abs(est - prev)
        if not math.isfinite(est):
            raise NumericError("non-finite quadrature estimate", partial=est)
        if err <= max(tol_abs, cfg.rel_tol * abs(est)):
            return est, err, True
        prev = est
    return est, err, False


def integrate(fun: Integrand, a: float, b: float, cfg: QuadratureConfig | None = None) -> QuadResult:
    """Integral of ``fun`` over ``[a, b]`` (finite, ``a < b``)."""
    cfg = cfg or QuadratureConfig()
    if not a < b:
        if a == b:
            return QuadResult(0.0, 0.0, 0)
        r = integrate(lambda x, xa, xb: fun(x, xb, xa), b, a, cfg)
        return QuadResult(-r.value, r.abs_error, r.intervals)
    total_width = b - a
    pending = [(a, b)]
    value = error = 0.0
    intervals = 0
    while pending:
        lo, hi = pending.pop()
        intervals += 1
        share = (hi - lo) / total_width
        est, err, ok = _rule(fun, lo, hi, lo - a, b - hi, cfg, cfg.abs_tol * share)
        if ok:
            value += est
            error += err
            continue
        if intervals + len(pending) + 2 > cfg.max_subdivisions:
            raise NumericError(
                f"quadrature did not converge within {cfg.max_subdivisions} subdivisions",
                partial=QuadResult(value + est, error + err, intervals),
            )
        mid = 0.5 * (lo + hi)
        pending.extend([(mid, hi), (lo, mid)])
    return QuadResult(value, error, intervals)


def integrate_unit(fun: Callable[[np.ndarray, np.ndarray], np.ndarray],
                   cfg: QuadratureConfig | None = None, split: float = 0.5) -> QuadResult:
    """Integral over ``[0, 1]`` of ``fun(v, 1 - v)``, split at ``split``.

    Both arguments are accurate at their respective ends, so ``log(v)`` and
    ``log(1 - v)`` can be formed without loss near 0 and 1.
    """
    cfg = cfg or QuadratureConfig()
    left = integrate(lambda x, xa, xb: fun(xa, 1.0 - xa), 0.0, split, cfg)
    right = integrate(lambda x, xa, xb: fun(1.0 - xb, xb), split, 1.0, cfg)
    parts = [left, right]
    return QuadResult(sum(p.value for p in parts), sum(p.abs_error for p in parts),
                      sum(p.intervals for p in parts))
