"""Ground truth for the estimators: enumeration, closed forms and quadrature.

GS and ST-GS moments are computed in the relaxed coordinate
``v = sigma((eta - z) / tau)``, where the logistic noise density becomes
``p_z(eta - tau logit(v))`` and the estimator mean and second moment are
one-dimensional integrals over ``[0, 1]``:

    mean = int_0^1 f'(v) p_z(eta - tau logit v) dv
    M    = (1 / tau) int_0^1 f'(v)^2 v (1 - v) p_z(eta - tau logit v) dv

For ST-GS, ``f'(v)`` is replaced by ``f'(0)`` on ``v < 1/2`` and by ``f'(1)``
on ``v >= 1/2`` (the forward sample is 1 exactly when ``v >= 1/2``).
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import expit

from binest.core.expr import LossExpr, derivative_1d, value_1d
from binest.core.params import Encoding, ParamKind, ParamPoint, hub
from binest.errors import DomainError, NumericError, ResourceError, UsageError
from binest.estimators import EstimatorKind
from binest.quadrature import QuadratureConfig, integrate, integrate_unit

MAX_ENUM_VARS = 20
_ENUM_CHUNK = 1 << 16


@dataclass(frozen=True)
class MomentPair:
    mean: float
    second_moment: float
    variance: float
    method: str
    abs_error_bound: float = 0.0


def logistic_density(y):
    """Standard logistic density ``sigma(y) sigma(-y)``."""
    return expit(y) * expit(-y)


# enumeration ----------------------------------------------------------------


def _all_bits(n: int, start: int, stop: int) -> np.ndarray:
    k = np.arange(start, stop, dtype=np.int64)[:, None]
    shifts = np.arange(n - 1, -1, -1, dtype=np.int64)
    return ((k >> shifts) & 1).astype(float)


def _table(f: LossExpr, encoding: Encoding) -> np.ndarray:
    n = f.arity
    if n > MAX_ENUM_VARS:
        raise ResourceError(f"enumeration limited to {MAX_ENUM_VARS} variables, got {n}")
    total = 1 << n
    out = np.empty(total)
    for start in range(0, total, _ENUM_CHUNK):
        stop = min(start + _ENUM_CHUNK, total)
        out[start:stop] = f(encoding.to_values(_all_bits(n, start, stop)))
    return out.reshape((2,) * n)


def _marginalize(table: np.ndarray, p: np.ndarray, q: np.ndarray, axes) -> np.ndarray:
    # Contract from the last axis so earlier axis indices stay valid.
    for j in sorted(axes, reverse=True):
        table = np.tensordot(table, np.array([q[j], p[j]]), axes=([j], [0]))
    return table


def exact_expectation(f: LossExpr, theta: ParamPoint, encoding=Encoding.ZERO_ONE) -> float:
    """``E[f]`` under independent Bernoulli units, by full enumeration."""
    encoding = Encoding(encoding)
    p, q = (np.atleast_1d(a) for a in hub(theta))
    _check_size(f, p)
    return float(_marginalize(_table(f, encoding), p, q, range(f.arity)))


def exact_gradient_enum(f: LossExpr, theta: ParamPoint, encoding=Encoding.ZERO_ONE) -> np.ndarray:
    """``d E[f] / d p_i`` for every unit, by full enumeration of ``2^n`` outcomes."""
    encoding = Encoding(encoding)
    p, q = (np.atleast_1d(a) for a in hub(theta))
    _check_size(f, p)
    table = _table(f, encoding)
    n = f.arity
    grad = np.empty(n)
    for i in range(n):
        diff = np.take(table, 1, axis=i) - np.take(table, 0, axis=i)
        others = [j for j in range(n) if j != i]
        pi, qi = np.delete(p, i), np.delete(q, i)
        grad[i] = float(_marginalize(diff, pi, qi, range(len(others))))
    return grad


def _check_size(f: LossExpr, p: np.ndarray) -> None:
    if p.size != f.arity:
        raise UsageError(f"{p.size} parameters given for a function of {f.arity} inputs")


# closed forms ---------------------------------------------------------------


def _single_p(p) -> tuple[float, float]:
    if isinstance(p, ParamPoint):
        pp, qq = (float(np.atleast_1d(a)[0]) for a in hub(p))
        if p.size != 1:
            raise UsageError("closed forms are defined for a single unit")
        return pp, qq
    p = float(p)
    if not 0.0 <= p <= 1.0 or not math.isfinite(p):
        raise DomainError(f"p must lie in [0, 1], got {p}")
    return p, 1.0 - p


def closed_moments(kind, f: LossExpr, p, *, encoding=None, scale_mode="correct") -> MomentPair:
    """Exact mean, second moment and variance of the ST or DARN estimator.

    ST uses ``f'`` at the two encoded outcomes (times 2 for the correct
    {-1,1} form); DARN is the {-1,1} importance-weighted form with
    variance ``(f'(1) - p (f'(1) + f'(-1)))^2 / (p (1 - p))``.
    """
    kind = EstimatorKind(kind)
    pp, qq = _single_p(p)
    if kind is EstimatorKind.ST:
        enc = Encoding(encoding) if encoding is not None else Encoding.ZERO_ONE
        scale = 2.0 if enc is Encoding.PLUS_MINUS and scale_mode == "correct" else 1.0
        lo, hi = enc.to_values([0.0, 1.0])
        a0, a1 = scale * derivative_1d(f, np.array([lo, hi]))
        mean = qq * a0 + pp * a1
        second = qq * a0 * a0 + pp * a1 * a1
        return MomentPair(mean, second, pp * qq * (a1 - a0) ** 2, "closed")
    if kind is EstimatorKind.DARN:
        if encoding not in (None, Encoding.PLUS_MINUS, Encoding.PLUS_MINUS.value):
            raise DomainError("DARN is defined for the {-1,1} encoding only")
        if pp <= 0.0 or qq <= 0.0:
            raise DomainError("DARN moments need p strictly inside (0, 1)")
        b, a = derivative_1d(f, np.array([-1.0, 1.0]))
        mean = a + b
        second = a * a / pp + b * b / qq
        variance = (a - pp * (a + b)) ** 2 / (pp * qq)
        return MomentPair(mean, second, variance, "closed")
    raise UsageError(f"closed moments are available for ST and DARN, not {kind.value}")


def noise_op_variance_closed(M: float, mean: float, rho: float, S: int) -> float:
    """Variance of the average over ``S`` samples correlated through ``N_rho``.

    ``V = ((1 + (S-1) rho^2) M + ((S-1)(1 - rho^2) - S) mean^2) / S``.
    """
    _check_noise_op(M, mean, rho, S)
    return ((1.0 + (S - 1) * rho**2) * M + ((S - 1) * (1.0 - rho**2) - S) * mean**2) / S


def noise_op_variance_excess(M: float, mean: float, rho: float, S: int) -> float:
    """``V(rho) - V(0) = ((S - 1) / S) rho^2 sigma^2``."""
    _check_noise_op(M, mean, rho, S)
    return (S - 1) / S * rho**2 * (M - mean**2)


def _check_noise_op(M, mean, rho, S):
    if not 0.0 <= rho <= 1.0:
        raise DomainError(f"rho must lie in [0, 1], got {rho}")
    if int(S) != S or S < 1:
        raise DomainError(f"S must be an integer >= 1, got {S}")
    if M < mean**2 - 1e-12 * max(1.0, abs(M)):
        raise DomainError(f"inconsistent moments: M={M} < mean^2={mean**2}")


def noise_op_moments_closed(base, f: LossExpr, p, rho: float, S: int, *, encoding=None,
                            scale_mode="correct") -> MomentPair:
    """Moments of the correlated-sample estimator from the base closed moments."""
    b = closed_moments(base, f, p, encoding=encoding, scale_mode=scale_mode)
    var = noise_op_variance_closed(b.second_moment, b.mean, rho, S)
    return MomentPair(b.mean, var + b.mean**2, var, "closed")


# GS / ST-GS quadrature ------------------------------------------------------


def _fprime_on_unit(f: LossExpr, variant: str, encoding: Encoding):
    """``f'`` as seen by the estimator on the relaxed coordinate, with encoding chain factor."""
    chain = 1.0 if encoding is Encoding.ZERO_ONE else 2.0
    if variant == "GS":
        if encoding is Encoding.ZERO_ONE:
            return lambda v, vb: derivative_1d(f, v)
        return lambda v, vb: chain * derivative_1d(f, v - vb)
    if variant == "STGS":
        lo, hi = encoding.to_values([0.0, 1.0])
        d0, d1 = chain * derivative_1d(f, np.array([lo, hi]))
        return lambda v, vb: np.where(v >= 0.5, d1, d0)
    raise UsageError(f"variant must be GS or STGS, got {variant!r}")


def _logit(v, vb):
    return np.log(v) - np.log(vb)


def gs_moments_quadrature(f: LossExpr, eta: float, tau: float, variant: str = "GS",
                          cfg: QuadratureConfig | None = None, *,
                          encoding=Encoding.ZERO_ONE) -> MomentPair:
    """Mean and second moment of the GS / ST-GS estimator (gradient in ``eta``)."""
    if not tau > 0:
        raise DomainError(f"temperature must be > 0, got {tau}")
    cfg = cfg or QuadratureConfig()
    fp = _fprime_on_unit(f, variant, Encoding(encoding))
    eta = float(eta)

    def density(v, vb):
        return logistic_density(eta - tau * _logit(v, vb))

    m = integrate_unit(lambda v, vb: fp(v, vb) * density(v, vb), cfg)
    s = integrate_unit(lambda v, vb: fp(v, vb) ** 2 * v * vb * density(v, vb), cfg)
    second = s.value / tau
    err = s.abs_error / tau + (2.0 * abs(m.value) + 1.0) * m.abs_error
    return MomentPair(m.value, second, second - m.value**2, "quadrature", err)


def gs_true_gradient(f: LossExpr, eta: float, encoding=Encoding.ZERO_ONE) -> float:
    """``d E[f] / d eta = (f(1) - f(0)) p_z(eta)`` for a single unit."""
    lo, hi = Encoding(encoding).to_values([0.0, 1.0])
    f0, f1 = value_1d(f, np.array([lo, hi]))
    return float((f1 - f0) * logistic_density(float(eta)))


def taylor_c1(eta: float) -> float:
    """First-order coefficient ``(e^eta - 1) / (e^eta + 1)``."""
    return math.tanh(0.5 * eta)


def taylor_c2(eta: float) -> float:
    """Second-order coefficient ``(e^{2 eta} - 4 e^eta + 1) / (2 (e^eta + 1)^2)``.

    The expression is even in ``eta``; it is evaluated at ``-|eta|`` to avoid overflow.
    """
    e = math.exp(-abs(eta))
    return (1.0 - 4.0 * e + e * e) / (2.0 * (1.0 + e) ** 2)


@dataclass(frozen=True)
class AsymptoticTerms:
    """Small-temperature expansion terms, already multiplied by the powers of tau.

    ``bias_terms`` maps the order (0, 1, 2) to its contribution to the bias;
    ``second_moment_terms`` maps the order (-1, 0, 1).  ``integrals`` holds the
    raw v-integrals the terms are built from.
    """

    variant: str
    eta: float
    tau: float
    c1: float
    c2: float
    density: float
    bias_terms: dict = field(default_factory=dict)
    second_moment_terms: dict = field(default_factory=dict)
    integrals: dict = field(default_factory=dict)

    @property
    def bias(self) -> float:
        return sum(self.bias_terms.values())

    @property
    def second_moment(self) -> float:
        return sum(self.second_moment_terms.values())


def gs_asymptotics(f: LossExpr, eta: float, tau: float, variant: str = "GS",
                   cfg: QuadratureConfig | None = None, *,
                   encoding=Encoding.ZERO_ONE) -> AsymptoticTerms:
    cfg = cfg or QuadratureConfig()
    enc = Encoding(encoding)
    fp = _fprime_on_unit(f, variant, enc)
    eta, tau = float(eta), float(tau)
    c1, c2 = taylor_c1(eta), taylor_c2(eta)
    pz = float(logistic_density(eta))

    def quad(g):
        r = integrate_unit(g, cfg)
        if not math.isfinite(r.value):
            raise NumericError("divergent logit-weighted integral", partial=r)
        return r.value

    ints = {
        "f1": quad(lambda v, vb: fp(v, vb)),
        "f1_logit": quad(lambda v, vb: fp(v, vb) * _logit(v, vb)),
        "f1_logit2": quad(lambda v, vb: fp(v, vb) * _logit(v, vb) ** 2),
        "f2w": quad(lambda v, vb: fp(v, vb) ** 2 * v * vb),
        "f2w_logit": quad(lambda v, vb: fp(v, vb) ** 2 * v * vb * _logit(v, vb)),
        "f2w_logit2": quad(lambda v, vb: fp(v, vb) ** 2 * v * vb * _logit(v, vb) ** 2),
    }
    truth = gs_true_gradient(f, eta, enc)
    bias = {
        0: pz * ints["f1"] - truth,
        1: pz * c1 * ints["f1_logit"] * tau,
        2: pz * c2 * ints["f1_logit2"] * tau**2,
    }
    second = {
        -1: pz * ints["f2w"] / tau,
        0: pz * c1 * ints["f2w_logit"],
        1: pz * c2 * ints["f2w_logit2"] * tau,
    }
    return AsymptoticTerms(variant, eta, tau, c1, c2, pz, bias, second, ints)


# tail probability -----------------------------------------------------------


def gs_tail_prob_closed(eta: float, tau: float, eps_thr: float) -> float:
    """``Pr(s (1 - s) >= eps_thr)`` for ``s = sigma((eta - z) / tau)``, ``z ~ Logistic``.

    The factor ``s (1 - s)`` is the derivative of the relaxed sample in
    ``eta`` up to the ``1/tau`` normalization; it never exceeds 1/4, so the
    probability is 0 for ``eps_thr >= 1/4``.
    """
    if not tau > 0:
        raise DomainError(f"temperature must be > 0, got {tau}")
    if not eps_thr > 0:
        raise DomainError(f"threshold must be > 0, got {eps_thr}")
    if eps_thr >= 0.25:
        return 0.0
    s_star = 2.0 * eps_thr / (1.0 + math.sqrt(1.0 - 4.0 * eps_thr))
    half_width = -tau * (math.log(s_star) - math.log1p(-s_star))
    # sigma(eta + w) - sigma(eta - w) = sinh(w) / (cosh(eta) + cosh(w)), stable for small w
    if abs(eta) > 700 or half_width > 700:
        return float(expit(eta + half_width) - expit(eta - half_width))
    return math.sinh(half_width) / (math.cosh(eta) + math.cosh(half_width))


# relaxed DARN ---------------------------------------------------------------


def relaxed_darn_mean_exact(f: LossExpr, p: float, a_low: float = 0.0,
                            cfg: QuadratureConfig | None = None) -> float:
    """Expectation of ``f'(y u) / p(y)`` over ``y ~ Bin(p)`` and ``u ~ U[a_low, 1]``.

    The weights ``p(y)`` cancel against the outcome probabilities, leaving
    ``(1 / (1 - a_low)) int_{a_low}^1 (f'(u) + f'(-u)) du``.
    """
    pp, qq = _single_p(p)
    if pp <= 0.0 or qq <= 0.0:
        raise DomainError("relaxed DARN needs p strictly inside (0, 1)")
    if not 0.0 <= a_low < 1.0:
        raise DomainError(f"a_low must lie in [0, 1), got {a_low}")
    cfg = cfg or QuadratureConfig()
    r = integrate(lambda u, ua, ub: derivative_1d(f, u) + derivative_1d(f, -u), a_low, 1.0, cfg)
    return r.value / (1.0 - a_low)


def enumerate_outcomes(n: int):
    """All {0,1}^n outcomes in lexicographic order (used by tests and reports)."""
    return list(itertools.product((0, 1), repeat=n))
