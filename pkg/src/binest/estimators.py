"""Single-sample gradient estimators for Bernoulli parameters.

Each estimator has a vectorized kernel that draws ``n`` independent joint
samples at once (used by the Monte Carlo harness) and a single-sample public
function that returns a :class:`GradSample` with the full noise record.  A
single-sample call consumes words from the stream in exactly the same order
as a batch of size one, so the two paths agree bit-for-bit.

All estimators act coordinate-wise on one joint sample of all units: the
estimate for unit ``i`` uses the partial derivative ``df/dx_i`` at the
sampled (or relaxed) vector.

Native parametrizations:

=============  ======  =========================================
kind           native  loss encoding
=============  ======  =========================================
ST             P       {0,1} or {-1,1}
DARN           P       {-1,1}
GS, STGS       ETA     {0,1} (or {-1,1} through ``y = 2x - 1``)
BBGS           MU      {-1,1}
NOISEOP        P       that of the base estimator
RELAXED_DARN   P       {-1,1}
RESCALED_ST    P       {-1,1}
=============  ======  =========================================
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.special import expit

from binest.core.expr import LossExpr
from binest.core.params import Encoding, ParamKind, ParamPoint, convert_param, hub
from binest.core.rng import NoiseDraw, RngStream
from binest.errors import DomainError, UsageError


class EstimatorKind(enum.Enum):
    ST = "ST"
    DARN = "DARN"
    GS = "GS"
    STGS = "STGS"
    BBGS = "BBGS"
    NOISEOP = "NOISEOP"
    RELAXED_DARN = "RELAXED_DARN"
    RESCALED_ST = "RESCALED_ST"


NATIVE_KIND = {
    EstimatorKind.ST: ParamKind.P,
    EstimatorKind.DARN: ParamKind.P,
    EstimatorKind.GS: ParamKind.ETA,
    EstimatorKind.STGS: ParamKind.ETA,
    EstimatorKind.BBGS: ParamKind.MU,
    EstimatorKind.NOISEOP: ParamKind.P,
    EstimatorKind.RELAXED_DARN: ParamKind.P,
    EstimatorKind.RESCALED_ST: ParamKind.P,
}

_DEFAULT_ENCODING = {
    EstimatorKind.ST: Encoding.ZERO_ONE,
    EstimatorKind.GS: Encoding.ZERO_ONE,
    EstimatorKind.STGS: Encoding.ZERO_ONE,
}
_PM_ONLY = {EstimatorKind.DARN, EstimatorKind.BBGS, EstimatorKind.RELAXED_DARN,
            EstimatorKind.RESCALED_ST}

SCALE_MODES = ("correct", "legacy_x2")

# Hyperparameter schema used by validation and by ``binest list``.
SCHEMA = {
    EstimatorKind.ST: {"encoding": "01 | pm1", "scale_mode": "correct | legacy_x2"},
    EstimatorKind.DARN: {},
    EstimatorKind.GS: {"tau": "> 0", "encoding": "01 | pm1"},
    EstimatorKind.STGS: {"tau": "> 0", "encoding": "01 | pm1"},
    EstimatorKind.BBGS: {"tau": "> 0", "eps": ">= 0"},
    EstimatorKind.NOISEOP: {"base": "ST | DARN", "rho": "in [0, 1]", "S": "int >= 1"},
    EstimatorKind.RELAXED_DARN: {"a_low": "in [0, 1)"},
    EstimatorKind.RESCALED_ST: {"tau_scale": "> 0"},
}


@dataclass(frozen=True)
class EstimatorSpec:
    """Estimator kind plus hyperparameters; irrelevant fields are ignored."""

    kind: EstimatorKind
    tau: float = 1.0
    eps: float = 0.0
    rho: float = 0.0
    S: int = 1
    base: EstimatorKind | None = None
    a_low: float = 0.0
    tau_scale: float = 1.0
    scale_mode: str = "correct"
    encoding: Encoding | None = None

    def __post_init__(self):
        object.__setattr__(self, "kind", EstimatorKind(self.kind))
        if self.base is not None:
            object.__setattr__(self, "base", EstimatorKind(self.base))
        if self.encoding is not None:
            object.__setattr__(self, "encoding", Encoding(self.encoding))
        _validate(self)

    @property
    def native(self) -> ParamKind:
        return NATIVE_KIND[self.kind]

    @property
    def resolved_encoding(self) -> Encoding:
        if self.encoding is not None:
            return self.encoding
        if self.kind is EstimatorKind.NOISEOP:
            return self.base_spec().resolved_encoding
        return _DEFAULT_ENCODING.get(self.kind, Encoding.PLUS_MINUS)

    def base_spec(self) -> "EstimatorSpec":
        if self.kind is not EstimatorKind.NOISEOP:
            raise UsageError("base_spec is only defined for NOISEOP")
        return EstimatorSpec(self.base, scale_mode=self.scale_mode, encoding=self.encoding)

    def with_(self, **changes) -> "EstimatorSpec":
        return replace(self, **changes)

    def snapshot(self) -> dict:
        """Plain-dict view with only the fields that matter for this kind."""
        out = {"kind": self.kind.value}
        keys = {
            EstimatorKind.ST: ("scale_mode",),
            EstimatorKind.GS: ("tau",),
            EstimatorKind.STGS: ("tau",),
            EstimatorKind.BBGS: ("tau", "eps"),
            EstimatorKind.NOISEOP: ("base", "rho", "S"),
            EstimatorKind.RELAXED_DARN: ("a_low",),
            EstimatorKind.RESCALED_ST: ("tau_scale",),
        }.get(self.kind, ())
        for k in keys:
            v = getattr(self, k)
            out[k] = v.value if isinstance(v, enum.Enum) else v
        out["encoding"] = self.resolved_encoding.value
        return out


def _validate(spec: EstimatorSpec) -> None:
    k = spec.kind
    if k in (EstimatorKind.GS, EstimatorKind.STGS, EstimatorKind.BBGS) and not spec.tau > 0:
        raise DomainError(f"{k.value}: temperature must be > 0, got {spec.tau}")
    if k is EstimatorKind.BBGS and not spec.eps >= 0:
        raise DomainError(f"BBGS: eps must be >= 0, got {spec.eps}")
    if k is EstimatorKind.NOISEOP:
        if spec.base not in (EstimatorKind.ST, EstimatorKind.DARN):
            raise DomainError("NOISEOP base must be ST or DARN")
        if not 0.0 <= spec.rho <= 1.0:
            raise DomainError(f"NOISEOP: rho must be in [0, 1], got {spec.rho}")
        if int(spec.S) != spec.S or spec.S < 1:
            raise DomainError(f"NOISEOP: S must be an integer >= 1, got {spec.S}")
    if k is EstimatorKind.RELAXED_DARN and not 0.0 <= spec.a_low < 1.0:
        raise DomainError(f"RELAXED_DARN: a_low must be in [0, 1), got {spec.a_low}")
    if k is EstimatorKind.RESCALED_ST and not spec.tau_scale > 0:
        raise DomainError(f"RESCALED_ST: tau_scale must be > 0, got {spec.tau_scale}")
    if spec.scale_mode not in SCALE_MODES:
        raise DomainError(f"scale_mode must be one of {SCALE_MODES}")
    effective = spec.base if k is EstimatorKind.NOISEOP else k
    if effective in _PM_ONLY and spec.encoding not in (None, Encoding.PLUS_MINUS):
        raise DomainError(f"{effective.value} is defined for the {{-1,1}} encoding only")


@dataclass
class GradSample:
    """One single-sample gradient estimate and everything needed to reproduce it."""

    estimate: np.ndarray
    native: ParamKind
    forward_value: np.ndarray
    noise: list[NoiseDraw] = field(default_factory=list)
    relaxed: np.ndarray | None = None


@dataclass
class Batch:
    """``n`` independent estimates, one row per joint sample."""

    estimate: np.ndarray
    forward: np.ndarray
    relaxed: np.ndarray | None = None


# kernels --------------------------------------------------------------------


def _check_theta(f: LossExpr, theta: ParamPoint) -> None:
    if theta.size != f.arity:
        raise UsageError(f"{theta.size} parameters given for a function of {f.arity} inputs")


def _interior(theta: ParamPoint, what: str):
    p, q = (np.atleast_1d(a) for a in hub(theta))
    if np.any(p <= 0.0) or np.any(q <= 0.0):
        raise DomainError(f"{what}: probabilities must lie strictly inside (0, 1)")
    return p, q


def _st_scale(encoding: Encoding, mode: str) -> float:
    if encoding is Encoding.ZERO_ONE or mode == "legacy_x2":
        return 1.0
    return 2.0


def _st_at(f, bits, encoding, mode):
    return _st_scale(encoding, mode) * f.grad(encoding.to_values(bits))


def _darn_at(f, bits, p, q):
    return f.grad(2.0 * bits - 1.0) / np.where(bits > 0.5, p, q)


def _one_minus_tanh2(a):
    e = np.exp(-2.0 * np.abs(a))
    return 4.0 * e / (1.0 + e) ** 2


def _gs_factor(t, tau):
    """d sigma(t) / d eta with ``t = (eta - z) / tau``, i.e. ``s (1 - s) / tau``."""
    return expit(t) * expit(-t) / tau


def _batch_st(spec, f, theta, rng, n):
    p, _ = _interior(theta, "ST")
    bits = rng.bernoulli(p, (n, p.size))
    enc = spec.resolved_encoding
    return Batch(_st_at(f, bits, enc, spec.scale_mode), enc.to_values(bits))


def _batch_darn(spec, f, theta, rng, n):
    p, q = _interior(theta, "DARN")
    bits = rng.bernoulli(p, (n, p.size))
    return Batch(_darn_at(f, bits, p, q), 2.0 * bits - 1.0)


def _gs_common(spec, f, theta, rng, n, hard: bool):
    eta = np.atleast_1d(convert_param(theta, ParamKind.ETA).value)
    z = rng.logistic((n, eta.size))
    t = (eta - z) / spec.tau
    factor = _gs_factor(t, spec.tau)
    relaxed = expit(t)
    enc = spec.resolved_encoding
    if hard:
        bits = (eta - z >= 0.0).astype(float)
        point = enc.to_values(bits)
    elif enc is Encoding.ZERO_ONE:
        point = relaxed
    else:
        point = np.tanh(0.5 * t)
    chain = 1.0 if enc is Encoding.ZERO_ONE else 2.0
    est = chain * f.grad(point) * factor
    return Batch(est, point, relaxed)


def _batch_gs(spec, f, theta, rng, n):
    return _gs_common(spec, f, theta, rng, n, hard=False)


def _batch_stgs(spec, f, theta, rng, n):
    return _gs_common(spec, f, theta, rng, n, hard=True)


def bbgs_scaling(lam, delta, tau, eps):
    """Scaling factor ``J = (1 - w~^2 + eps) / (tau (1 - mu^2 + eps))``.

    Both ``1 - tanh^2`` terms use the form ``4 e^{-2|a|} / (1 + e^{-2|a|})^2``,
    which cannot go negative and keeps full relative accuracy in the tails.
    """
    omw = _one_minus_tanh2((lam - delta) / tau)
    omm = _one_minus_tanh2(lam)
    denom = tau * (omm + eps)
    if np.any(denom == 0.0):
        raise DomainError("BBGS scaling undefined: 1 - mu^2 + eps underflows to 0")
    return (omw + eps) / denom


def _batch_bbgs(spec, f, theta, rng, n):
    lam = np.atleast_1d(convert_param(theta, ParamKind.LAMBDA).value)
    delta = rng.half_logistic((n, lam.size))
    w = np.tanh((lam - delta) / spec.tau)
    J = bbgs_scaling(lam, delta, spec.tau, spec.eps)
    return Batch(J * f.grad(w), w, w)


def _batch_noiseop(spec, f, theta, rng, n):
    base = spec.base_spec()
    p, q = _interior(theta, "NOISEOP")
    d, S = p.size, int(spec.S)
    # Candidates first: with rho = 0 and S = 1 the draws line up with the base estimator.
    candidates = rng.bernoulli(p, (n, S, d))
    anchor = rng.bernoulli(p, (n, d))
    keep = rng.uniform((n, S, d)) < spec.rho
    samples = np.where(keep, anchor[:, None, :], candidates)
    if base.kind is EstimatorKind.ST:
        enc = base.resolved_encoding
        per = _st_at(f, samples, enc, base.scale_mode)
        fwd = enc.to_values(samples)
    else:
        per = _darn_at(f, samples, p, q)
        fwd = 2.0 * samples - 1.0
    return Batch(per.mean(axis=1), fwd)


def _batch_relaxed_darn(spec, f, theta, rng, n):
    p, q = _interior(theta, "RELAXED_DARN")
    bits = rng.bernoulli(p, (n, p.size))
    u = rng.uniform((n, p.size), low=spec.a_low, high=1.0)
    point = (2.0 * bits - 1.0) * u
    est = f.grad(point) / np.where(bits > 0.5, p, q)
    return Batch(est, point, point)


def _batch_rescaled_st(spec, f, theta, rng, n):
    p, _ = _interior(theta, "RESCALED_ST")
    bits = rng.bernoulli(p, (n, p.size))
    point = (2.0 * bits - 1.0) / spec.tau_scale
    return Batch((2.0 / spec.tau_scale) * f.grad(point), point)


_KERNELS = {
    EstimatorKind.ST: _batch_st,
    EstimatorKind.DARN: _batch_darn,
    EstimatorKind.GS: _batch_gs,
    EstimatorKind.STGS: _batch_stgs,
    EstimatorKind.BBGS: _batch_bbgs,
    EstimatorKind.NOISEOP: _batch_noiseop,
    EstimatorKind.RELAXED_DARN: _batch_relaxed_darn,
    EstimatorKind.RESCALED_ST: _batch_rescaled_st,
}


def sample_batch(spec: EstimatorSpec, f: LossExpr, theta: ParamPoint, rng: RngStream,
                 n: int) -> Batch:
    """Draw ``n`` independent single-sample estimates in the native parametrization."""
    _check_theta(f, theta)
    return _KERNELS[spec.kind](spec, f, theta, rng, int(n))


def estimate(spec: EstimatorSpec, f: LossExpr, theta: ParamPoint, rng: RngStream) -> GradSample:
    """Single-sample estimate with its noise record."""
    _check_theta(f, theta)
    with rng.recording() as tape:
        b = _KERNELS[spec.kind](spec, f, theta, rng, 1)
    relaxed = None if b.relaxed is None else b.relaxed[0]
    out = GradSample(b.estimate[0], spec.native, b.forward[0], list(tape), relaxed)
    if not np.all(np.isfinite(out.estimate)):
        raise DomainError(f"{spec.kind.value} produced a non-finite estimate")
    return out


# public single-sample API ---------------------------------------------------


def st_estimate(f, theta, rng, *, encoding=Encoding.ZERO_ONE, mode="correct") -> GradSample:
    """Straight-through: derivative of ``f`` at the sampled binary point.

    The estimate is a gradient in ``p``.  With the {-1,1} encoding the
    correct form carries the factor 2 from ``x = (y + 1) / 2``;
    ``mode="legacy_x2"`` drops it.
    """
    return estimate(EstimatorSpec(EstimatorKind.ST, encoding=encoding, scale_mode=mode),
                    f, theta, rng)


def darn_estimate(f, theta, rng) -> GradSample:
    """``f'(y) / p(y)`` on the {-1,1} encoding, gradient in ``p``."""
    return estimate(EstimatorSpec(EstimatorKind.DARN), f, theta, rng)


def gs_estimate(f, eta, tau, rng, *, encoding=Encoding.ZERO_ONE) -> GradSample:
    """Gumbel-Softmax: total derivative in ``eta`` at ``sigma((eta - z) / tau)``."""
    return estimate(EstimatorSpec(EstimatorKind.GS, tau=tau, encoding=encoding), f, eta, rng)


def stgs_estimate(f, eta, tau, rng, *, encoding=Encoding.ZERO_ONE) -> GradSample:
    """ST Gumbel-Softmax: binary forward ``[eta - z >= 0]``, relaxed derivative factor."""
    return estimate(EstimatorSpec(EstimatorKind.STGS, tau=tau, encoding=encoding), f, eta, rng)


def bayesbinn_gs_estimate(f, lam, tau, eps, rng) -> GradSample:
    """tanh-form GS estimate of the gradient in ``mu``; ``eps > 0`` is the
    regularized scaling of the published BayesBiNN code."""
    return estimate(EstimatorSpec(EstimatorKind.BBGS, tau=tau, eps=eps), f, lam, rng)


def noise_op_estimate(base: EstimatorSpec, f, theta, rho, S, rng) -> GradSample:
    """Average of base estimates over ``S`` samples correlated with one anchor.

    Each coordinate of each sample keeps the anchor value with probability
    ``rho`` and is redrawn from ``Bin(p)`` otherwise.  ``forward_value`` holds
    the ``(S, d)`` correlated samples.
    """
    base = base if isinstance(base, EstimatorSpec) else EstimatorSpec(base)
    spec = EstimatorSpec(EstimatorKind.NOISEOP, base=base.kind, rho=rho, S=S,
                         scale_mode=base.scale_mode, encoding=base.encoding)
    return estimate(spec, f, theta, rng)


def relaxed_darn_estimate(f, theta, a_low, rng) -> GradSample:
    """``f'(y u) / p(y)`` with ``u ~ U[a_low, 1]``, gradient in ``p``."""
    return estimate(EstimatorSpec(EstimatorKind.RELAXED_DARN, a_low=a_low), f, theta, rng)


def rescaled_st_estimate(f, theta, tau_scale, rng) -> GradSample:
    """ST estimate for the rescaled objective ``E[f(y / tau_scale)]``."""
    return estimate(EstimatorSpec(EstimatorKind.RESCALED_ST, tau_scale=tau_scale),
                    f, theta, rng)
