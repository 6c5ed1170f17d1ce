"""Monte Carlo measurement, bias tables and log-log rate fits.

Reproducibility: a Monte Carlo run of ``n`` draws is cut into fixed blocks of
``block`` rows.  Block ``b`` of task ``stream`` reads its noise from
``RngStream(seed, stream * 2**32 + b)``, so the numbers drawn do not depend on
how many workers process the blocks.  Each block reduces to shifted power
sums, and the partial sums are merged in block order, so results are
bit-identical for any ``jobs``.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.special import expit

from binest.core.expr import Compose, LossExpr
from binest.core.params import Encoding, ParamKind, ParamPoint, convert_param, param_jacobian
from binest.core.rng import RngStream
from binest.errors import DomainError, UsageError
from binest.estimators import EstimatorKind, EstimatorSpec, sample_batch
from binest.oracles import (closed_moments, exact_gradient_enum, gs_moments_quadrature,
                            gs_tail_prob_closed, gs_true_gradient, noise_op_variance_closed,
                            noise_op_variance_excess)

DEFAULT_BLOCK = 1 << 16
_STREAM_STRIDE = 1 << 32
DEFAULT_REPORT_KIND = ParamKind.ETA


def resolve_jobs(jobs: int | None = None) -> int:
    """Worker count: ``BINEST_JOBS`` wins over the argument; default 1."""
    env = os.environ.get("BINEST_JOBS")
    if env:
        try:
            jobs = int(env)
        except ValueError as exc:
            raise UsageError(f"BINEST_JOBS must be an integer, got {env!r}") from exc
    jobs = 1 if jobs is None else int(jobs)
    if jobs < 1:
        raise UsageError(f"jobs must be >= 1, got {jobs}")
    return jobs


# block-wise moment accumulation ---------------------------------------------


@dataclass
class _Sums:
    n: int
    s: np.ndarray  # (4, d): sum of (x - c)^k for k = 1..4

    def merge(self, other: "_Sums") -> "_Sums":
        return _Sums(self.n + other.n, self.s + other.s)


def _block_sums(draw, seed, stream, b, m, shift) -> _Sums:
    x = np.asarray(draw(RngStream(seed, stream * _STREAM_STRIDE + b), m), dtype=float)
    x = x.reshape(m, -1)
    dx = x - shift
    d2 = dx * dx
    return _Sums(m, np.stack([dx.sum(0), d2.sum(0), (d2 * dx).sum(0), (d2 * d2).sum(0)]))


def block_moments(draw: Callable[[RngStream, int], np.ndarray], n: int, seed: int,
                  stream: int = 0, jobs: int | None = None, block: int = DEFAULT_BLOCK):
    """Merged central moments of ``n`` rows produced block-wise by ``draw(rng, m)``.

    Returns ``(mean, var, m4)`` per column, with ``var`` using the ``n - 1``
    denominator and ``m4`` the biased fourth central moment.
    """
    n, block = int(n), int(block)
    if n < 2:
        raise UsageError(f"need at least 2 samples, got {n}")
    sizes = [block] * (n // block) + ([n % block] if n % block else [])
    # The shift is the first value of block 0: constant samples then give exactly 0 variance.
    first = np.asarray(draw(RngStream(seed, stream * _STREAM_STRIDE), sizes[0]), dtype=float)
    first = first.reshape(sizes[0], -1)
    shift = first[0].copy()
    head = _block_sums(lambda rng, m: first, seed, stream, 0, sizes[0], shift)
    rest = [(b, m) for b, m in enumerate(sizes) if b > 0]
    workers = resolve_jobs(jobs)
    work = lambda bm: _block_sums(draw, seed, stream, bm[0], bm[1], shift)  # noqa: E731
    if workers > 1 and len(rest) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(work, rest))
    else:
        parts = [work(bm) for bm in rest]
    total = head
    for part in parts:
        total = total.merge(part)
    s1, s2, s3, s4 = (total.s[k] / n for k in range(4))
    d = s1
    m2 = max_zero(s2 - d * d)
    m4 = max_zero(s4 - 4 * d * s3 + 6 * d * d * s2 - 3 * d**4)
    return shift + d, m2 * n / (n - 1), m4


def max_zero(a):
    return np.maximum(a, 0.0)


@dataclass(frozen=True)
class MomentEstimate:
    """Sample moments of an estimator; array fields have one entry per unit.

    ``var_stderr`` is the large-sample standard error of ``variance``,
    ``sqrt((m4 - var^2) / n)``.
    """

    mean: np.ndarray
    variance: np.ndarray
    stderr: np.ndarray
    n: int
    seed: int
    spec: dict
    var_stderr: np.ndarray

    def item(self, i: int = 0) -> "MomentEstimate":
        """Scalar view of unit ``i``."""
        pick = lambda a: float(np.atleast_1d(a)[i])  # noqa: E731
        return MomentEstimate(pick(self.mean), pick(self.variance), pick(self.stderr), self.n,
                              self.seed, self.spec, pick(self.var_stderr))


def _moment_estimate(mean, var, m4, n, seed, spec) -> MomentEstimate:
    return MomentEstimate(mean, var, np.sqrt(var / n), n, seed, spec,
                          np.sqrt(max_zero(m4 - var * var) / n))


def mc_moments(spec: EstimatorSpec, f: LossExpr, theta: ParamPoint, n: int, seed: int, *,
               stream: int = 0, jobs: int | None = None,
               block: int = DEFAULT_BLOCK) -> MomentEstimate:
    """Sample mean and variance of ``n`` independent draws of the estimator (native units)."""

    def draw(rng, m):
        return sample_batch(spec, f, theta, rng, m).estimate

    mean, var, m4 = block_moments(draw, n, seed, stream, jobs, block)
    return _moment_estimate(mean, var, m4, int(n), int(seed), spec.snapshot())


# bias / variance rows -------------------------------------------------------


@dataclass(frozen=True)
class BiasVarianceRow:
    """Measured moments against an exact gradient, all in ``param_kind`` units.

    ``alt_oracle`` and ``alt_bias`` are filled for estimators of a rescaled
    objective, where the estimate is compared with both gradients.
    """

    spec: dict
    param_kind: ParamKind
    theta: np.ndarray
    n: int
    seed: int
    mean: np.ndarray
    stderr: np.ndarray
    oracle: np.ndarray
    variance: np.ndarray
    alt_oracle: np.ndarray | None = None

    @property
    def bias(self) -> np.ndarray:
        return self.mean - self.oracle

    @property
    def mse(self) -> np.ndarray:
        return self.bias**2 + self.variance

    @property
    def alt_bias(self) -> np.ndarray | None:
        return None if self.alt_oracle is None else self.mean - self.alt_oracle


def _loss_encoding(spec: EstimatorSpec) -> Encoding:
    return spec.resolved_encoding


def transport_factor(theta: ParamPoint, src: ParamKind, dst: ParamKind) -> np.ndarray:
    """``d src / d dst`` at ``theta``: multiplies a gradient in ``src`` to give one in ``dst``."""
    return np.atleast_1d(param_jacobian(convert_param(theta, dst), src))


def true_gradient(f: LossExpr, theta: ParamPoint, kind: ParamKind,
                  encoding=Encoding.ZERO_ONE) -> np.ndarray:
    """Exact gradient of ``E[f]`` in parametrization ``kind``, by enumeration."""
    g = exact_gradient_enum(f, theta, encoding)
    return g * transport_factor(theta, ParamKind.P, kind)


def rescaled_objective(f: LossExpr, tau_scale: float) -> LossExpr:
    """``y -> f(y / tau_scale)``."""
    return Compose(f, 1.0 / tau_scale, 0.0)


def bias_report(spec: EstimatorSpec, f: LossExpr, theta: ParamPoint, n: int, seed: int, *,
                report: ParamKind = DEFAULT_REPORT_KIND, stream: int = 0,
                jobs: int | None = None) -> BiasVarianceRow:
    """Monte Carlo moments of ``spec`` against the enumeration gradient."""
    report = ParamKind(report)
    est = mc_moments(spec, f, theta, n, seed, stream=stream, jobs=jobs)
    t = transport_factor(theta, spec.native, report)
    enc = _loss_encoding(spec)
    oracle = true_gradient(f, theta, report, enc)
    alt = None
    if spec.kind is EstimatorKind.RESCALED_ST:
        alt = true_gradient(rescaled_objective(f, spec.tau_scale), theta, report, enc)
    value = np.atleast_1d(convert_param(theta, report).value).astype(float)
    return BiasVarianceRow(spec.snapshot(), report, value, int(n), int(seed),
                           np.atleast_1d(est.mean * t), np.atleast_1d(est.stderr * np.abs(t)),
                           oracle, np.atleast_1d(est.variance * t * t), alt)


# rate fitting ----------------------------------------------------------------


@dataclass(frozen=True)
class RateFit:
    """Least-squares line through ``(log|x|, log|y|)``."""

    grid: tuple
    slope: float
    intercept: float
    r_squared: float
    residuals: tuple
    excluded: tuple = ()

    def predict(self, x) -> np.ndarray:
        return np.exp(self.intercept) * np.abs(np.asarray(x, dtype=float)) ** self.slope


def check_grid(x: Sequence[float], min_points: int = 4, min_decades: float = 1.0) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.ndim != 1 or x.size < min_points:
        raise UsageError(f"rate grid needs at least {min_points} points, got {x.size}")
    if not np.all(np.isfinite(x)) or np.any(x <= 0):
        raise UsageError("rate grid values must be finite and positive")
    if np.unique(x).size != x.size:
        raise UsageError("rate grid values must be distinct")
    span = math.log10(x.max() / x.min())
    if span < min_decades - 1e-12:
        raise UsageError(f"rate grid spans {span:.2f} decades, need at least {min_decades}")
    return x


def fit_rate(x: Sequence[float], y: Sequence[float]) -> RateFit:
    """Fit ``|y| ~ C |x|^slope``; points with ``y == 0`` are excluded and listed."""
    x = np.asarray(x, dtype=float)
    y = np.abs(np.asarray(y, dtype=float))
    if x.shape != y.shape:
        raise UsageError("x and y must have the same length")
    keep = (y > 0) & np.isfinite(y)
    excluded = tuple(float(v) for v in x[~keep])
    if keep.sum() < 2:
        raise UsageError("fewer than two nonzero points left to fit")
    lx, ly = np.log(np.abs(x[keep])), np.log(y[keep])
    A = np.stack([lx, np.ones_like(lx)], axis=1)
    (slope, intercept), *_ = np.linalg.lstsq(A, ly, rcond=None)
    res = ly - (slope * lx + intercept)
    ss_tot = float(np.sum((ly - ly.mean()) ** 2))
    r2 = 1.0 if ss_tot == 0 else float(np.clip(1.0 - np.sum(res**2) / ss_tot, 0.0, 1.0))
    grid = tuple(zip(x.tolist(), y.tolist()))
    return RateFit(grid, float(slope), float(intercept), r2, tuple(res.tolist()), excluded)


QUANTITIES = ("bias", "variance", "second_moment", "tail_prob")
ORACLE_MODES = ("quadrature", "mc")


def sweep_values(spec: EstimatorSpec, param: str, grid: Sequence[float], f: LossExpr,
                 theta: ParamPoint, quantity: str, oracle_mode: str = "quadrature", *,
                 n: int = 10**6, seed: int = 0, eps_thr: float = 0.01,
                 jobs: int | None = None, stream0: int = 0) -> np.ndarray:
    """The measured quantity at every grid value of hyperparameter ``param``.

    Monte Carlo points use streams ``stream0 + k`` for grid index ``k``.
    """
    if quantity not in QUANTITIES:
        raise UsageError(f"quantity must be one of {QUANTITIES}, got {quantity!r}")
    if oracle_mode not in ORACLE_MODES:
        raise UsageError(f"oracle_mode must be one of {ORACLE_MODES}, got {oracle_mode!r}")
    if not hasattr(spec, param):
        raise UsageError(f"unknown hyperparameter {param!r}")
    eta = float(np.atleast_1d(convert_param(theta, ParamKind.ETA).value)[0])
    out = []
    for k, g in enumerate(grid):
        s = spec.with_(**{param: g})
        if quantity == "tail_prob":
            tau = s.tau
            if oracle_mode == "quadrature":
                out.append(gs_tail_prob_closed(eta, tau, eps_thr))
            else:
                out.append(tail_prob_mc(eta, tau, eps_thr, n, seed, stream=stream0 + k,
                                        jobs=jobs).p_hat)
            continue
        if oracle_mode == "quadrature":
            if s.kind not in (EstimatorKind.GS, EstimatorKind.STGS) or theta.size != 1:
                raise UsageError("quadrature mode supports single-unit GS and STGS")
            m = gs_moments_quadrature(f, eta, s.tau, s.kind.value, encoding=s.resolved_encoding)
            truth = gs_true_gradient(f, eta, s.resolved_encoding)
            value = {"bias": m.mean - truth, "variance": m.variance,
                     "second_moment": m.second_moment}[quantity]
        else:
            row = bias_report(s, f, theta, n, seed, report=s.native, stream=stream0 + k,
                              jobs=jobs)
            second = row.variance + row.mean**2
            value = {"bias": row.bias, "variance": row.variance,
                     "second_moment": second}[quantity][0]
        out.append(float(value))
    return np.asarray(out)


def sweep_rates(spec: EstimatorSpec, param: str, grid: Sequence[float], f: LossExpr,
                theta: ParamPoint, quantity: str, oracle_mode: str = "quadrature", *,
                n: int = 10**6, seed: int = 0, eps_thr: float = 0.01,
                jobs: int | None = None, stream0: int = 0) -> RateFit:
    """Log-log rate of ``quantity`` against hyperparameter ``param`` over ``grid``."""
    grid = check_grid(grid)
    y = sweep_values(spec, param, grid, f, theta, quantity, oracle_mode, n=n, seed=seed,
                     eps_thr=eps_thr, jobs=jobs, stream0=stream0)
    return fit_rate(grid, y)


# tail probabilities ----------------------------------------------------------


@dataclass(frozen=True)
class TailEstimate:
    p_hat: float
    stderr: float
    hits: int
    n: int


def _gs_slack(eta, z, tau):
    t = (eta - z) / tau
    return expit(t) * expit(-t)


def _count_hits(draw, n, seed, stream, jobs, block=DEFAULT_BLOCK):
    n, block = int(n), int(block)
    sizes = [block] * (n // block) + ([n % block] if n % block else [])
    work = lambda bm: int(draw(RngStream(seed, stream * _STREAM_STRIDE + bm[0]), bm[1]))  # noqa: E731
    workers = resolve_jobs(jobs)
    if workers > 1 and len(sizes) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            return sum(pool.map(work, enumerate(sizes)))
    return sum(work(bm) for bm in enumerate(sizes))


def _tail(hits: int, n: int) -> TailEstimate:
    p = hits / n
    return TailEstimate(p, math.sqrt(p * (1.0 - p) / n), hits, n)


def tail_prob_mc(eta: float, tau: float, eps_thr: float, n: int, seed: int, *,
                 stream: int = 0, jobs: int | None = None) -> TailEstimate:
    """Frequency of ``s (1 - s) >= eps_thr`` with ``s = sigma((eta - z) / tau)``."""
    if n < 10**4:
        raise UsageError(f"tail estimates need n >= 1e4, got {n}")
    if not tau > 0:
        raise DomainError(f"temperature must be > 0, got {tau}")

    def draw(rng, m):
        return np.count_nonzero(_gs_slack(eta, rng.logistic(m), tau) >= eps_thr)

    return _tail(_count_hits(draw, n, seed, stream, jobs), int(n))


def chain_tail_experiment(L: int, eta, tau: float, eps_thr: float, n: int, seed: int, *,
                          stream: int = 0, jobs: int | None = None) -> TailEstimate:
    """Frequency of ``prod_l s_l (1 - s_l) >= eps_thr^L`` over ``L`` independent layers."""
    if int(L) != L or not 1 <= L <= 6:
        raise UsageError(f"L must be an integer in [1, 6], got {L}")
    L = int(L)
    eta = np.broadcast_to(np.asarray(eta, dtype=float), (L,))
    if n < 10**4:
        raise UsageError(f"tail estimates need n >= 1e4, got {n}")
    # Compare in log space: the product of small factors can underflow for L = 6.
    log_thr = L * math.log(eps_thr)

    def draw(rng, m):
        z = rng.logistic((m, L))
        t = (eta - z) / tau
        logs = -np.logaddexp(0.0, t) - np.logaddexp(0.0, -t)
        return np.count_nonzero(logs.sum(axis=1) >= log_thr)

    return _tail(_count_hits(draw, n, seed, stream, jobs), int(n))


# noise operator study ---------------------------------------------------------


@dataclass(frozen=True)
class NoiseOpRow:
    rho: float
    S: int
    mc: MomentEstimate
    closed_variance: float
    base_mean: float
    base_variance: float
    ref: MomentEstimate  # rho = 0 at the same S

    @property
    def mean_gap(self) -> float:
        return self.mc.mean - self.ref.mean

    @property
    def mean_gap_stderr(self) -> float:
        return math.hypot(self.mc.stderr, self.ref.stderr)

    @property
    def var_diff(self) -> float:
        return self.mc.variance - self.ref.variance

    @property
    def var_diff_expected(self) -> float:
        return (self.S - 1) / self.S * self.rho**2 * self.base_variance

    @property
    def var_diff_stderr(self) -> float:
        return math.hypot(self.mc.var_stderr, self.ref.var_stderr)

    def mean_ok(self, k: float = 3.0) -> bool:
        return abs(self.mean_gap) <= k * self.mean_gap_stderr

    def var_diff_ok(self, k: float = 3.0) -> bool:
        return abs(self.var_diff - self.var_diff_expected) <= k * self.var_diff_stderr


def noise_op_study(base: EstimatorSpec, f: LossExpr, theta: ParamPoint, rho_grid, S_grid,
                   n: int, seed: int, *, jobs: int | None = None,
                   stream0: int = 0) -> list[NoiseOpRow]:
    """Correlated-sample averages over a (rho, S) grid against the closed variance.

    Every (rho, S) cell, including the rho = 0 reference of each S, reads its
    own stream starting from ``stream0 + 1``.
    """
    if base.kind not in (EstimatorKind.ST, EstimatorKind.DARN):
        raise UsageError("noise operator base must be ST or DARN")
    if theta.size != 1:
        raise UsageError("noise operator study is defined for a single unit")
    if len(rho_grid) == 0 or len(S_grid) == 0:
        raise UsageError("rho and S grids must be non-empty")
    p = float(np.atleast_1d(convert_param(theta, ParamKind.P).value)[0])
    cm = closed_moments(base.kind, f, p, encoding=base.resolved_encoding,
                        scale_mode=base.scale_mode)
    rows = []
    stream = stream0
    for S in S_grid:
        def run(rho):
            nonlocal stream
            spec = EstimatorSpec(EstimatorKind.NOISEOP, base=base.kind, rho=rho, S=int(S),
                                 scale_mode=base.scale_mode, encoding=base.encoding)
            stream += 1
            return mc_moments(spec, f, theta, n, seed, stream=stream, jobs=jobs).item()

        ref = run(0.0)
        for rho in rho_grid:
            mc = ref if rho == 0 else run(float(rho))
            closed = noise_op_variance_closed(cm.second_moment, cm.mean, float(rho), int(S))
            rows.append(NoiseOpRow(float(rho), int(S), mc, closed, cm.mean, cm.variance, ref))
    return rows


# small deterministic studies ---------------------------------------------------


def gs_factor(gap, tau):
    """GS derivative factor ``s (1 - s) / tau`` at ``eta - z = -gap``."""
    t = -np.asarray(gap, dtype=float) / tau
    return expit(t) * expit(-t) / tau


def lemma_max_relative_error(f: LossExpr, lam: float, tau: float, draws: int, seed: int,
                             stream: int = 0) -> float:
    """Largest relative gap between the tanh-form estimate and the transported GS estimate.

    Both estimators read the same stream position, so ``delta = z / 2`` exactly.
    """
    lam_pt = ParamPoint(ParamKind.LAMBDA, lam)
    eta_pt = convert_param(lam_pt, ParamKind.ETA)
    bb = sample_batch(EstimatorSpec(EstimatorKind.BBGS, tau=tau, eps=0.0), f, lam_pt,
                      RngStream(seed, stream), draws).estimate
    gs = sample_batch(EstimatorSpec(EstimatorKind.GS, tau=tau, encoding=Encoding.PLUS_MINUS),
                      f, eta_pt, RngStream(seed, stream), draws).estimate
    gs_mu = gs * transport_factor(eta_pt, ParamKind.ETA, ParamKind.MU)
    scale = np.maximum(np.abs(bb), np.abs(gs_mu))
    rel = np.where(scale > 0, np.abs(bb - gs_mu) / np.where(scale > 0, scale, 1.0), 0.0)
    return float(rel.max())


@dataclass(frozen=True)
class RescalingResult:
    tau_scale: float
    estimator_mean: float
    grad_original: float
    grad_rescaled: float

    @property
    def bias_original(self) -> float:
        return self.estimator_mean - self.grad_original

    @property
    def bias_rescaled(self) -> float:
        return self.estimator_mean - self.grad_rescaled


def rescaling_exact(f: LossExpr, p: float, tau_scale: float) -> RescalingResult:
    """Exact mean of the rescaled ST estimate against both objectives (gradients in ``p``).

    The estimator mean is the two-outcome expectation of ``(2 / s) f'(y / s)``.
    """
    theta = ParamPoint(ParamKind.P, p)
    est = closed_moments(EstimatorKind.ST, rescaled_objective(f, tau_scale), p,
                         encoding=Encoding.PLUS_MINUS).mean
    # d/dy f(y / s) = f'(y / s) / s, times the {-1,1} factor 2: this is exactly the estimate.
    g0 = float(exact_gradient_enum(f, theta, Encoding.PLUS_MINUS)[0])
    g1 = float(exact_gradient_enum(rescaled_objective(f, tau_scale), theta,
                                   Encoding.PLUS_MINUS)[0])
    return RescalingResult(float(tau_scale), float(est), g0, g1)


__all__ = [
    "BiasVarianceRow", "MomentEstimate", "NoiseOpRow", "RateFit", "RescalingResult",
    "TailEstimate", "bias_report", "block_moments", "chain_tail_experiment", "check_grid",
    "fit_rate", "gs_factor", "lemma_max_relative_error", "mc_moments", "noise_op_study",
    "noise_op_variance_excess", "rescaling_exact", "resolve_jobs", "sweep_rates",
    "sweep_values", "tail_prob_mc", "true_gradient",
]
