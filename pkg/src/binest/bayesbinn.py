"""BayesBiNN update dynamics and the deterministic latent-decay ST rule.

One step of the ε-perturbed update, per coordinate::

    delta ~ Logistic / 2
    w~    = tanh((lam - delta) / tau)
    J     = (1 - w~^2 + eps) / (tau (1 - mu^2 + eps)),   mu = tanh(lam)
    lam  <- (1 - alpha) lam - alpha N J f'(w~)

With ``eps = tau`` tiny, ``J`` pins to ``1 / tau`` once ``|lam|`` is large and
``w~`` saturates at ``sign(lam - delta)``, so ``lam_bar = (tau / N) lam``
follows ``lam_bar <- (1 - alpha) lam_bar - alpha f'(sign(lam_bar))``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from binest.core.expr import LossExpr
from binest.core.rng import RngStream
from binest.errors import DomainError, NumericError, UsageError
from binest.estimators import bbgs_scaling

COLLAPSE_THRESHOLD = 1e8
_INIT_STREAM = 0
_NOISE_STREAM = 1


@dataclass(frozen=True)
class BbnHyper:
    tau: float
    eps: float
    alpha: float
    N: float
    steps: int
    lam_low: float = -10.0
    lam_high: float = 10.0

    def __post_init__(self):
        if not self.tau > 0:
            raise DomainError(f"tau must be > 0, got {self.tau}")
        if not self.eps >= 0:
            raise DomainError(f"eps must be >= 0, got {self.eps}")
        if not 0 < self.alpha < 1:
            raise DomainError(f"alpha must lie in (0, 1), got {self.alpha}")
        if not self.N > 0:
            raise DomainError(f"N must be > 0, got {self.N}")
        if int(self.steps) != self.steps or self.steps < 1:
            raise DomainError(f"steps must be an integer >= 1, got {self.steps}")
        if not self.lam_low < self.lam_high:
            raise DomainError("lam_low must be below lam_high")


@dataclass(frozen=True)
class Trajectory:
    """Per-step record; row ``k`` holds the state *before* update ``k``.

    ``lam`` has shape ``(steps + 1, d)`` (the last row is the final state);
    ``w``, ``J`` and ``delta`` have shape ``(steps, d)``.  ``J`` and
    ``delta`` are ``None`` for the deterministic rule.
    """

    lam: np.ndarray
    w: np.ndarray
    J: np.ndarray | None
    delta: np.ndarray | None
    hyper: BbnHyper | None
    seed: int | None
    kind: str

    @property
    def steps(self) -> int:
        return self.w.shape[0]

    @property
    def max_abs_lam(self) -> np.ndarray:
        return np.abs(self.lam).max(axis=1)

    def J_stats(self) -> np.ndarray:
        """``(steps, 3)`` array of min / median / max of ``J`` per step."""
        if self.J is None:
            raise UsageError("deterministic trajectories carry no J")
        return np.stack([self.J.min(1), np.median(self.J, 1), self.J.max(1)], axis=1)


def _sign(a):
    return np.where(a >= 0.0, 1.0, -1.0)


def initial_lambda(d: int, hyper: BbnHyper, seed: int) -> np.ndarray:
    return RngStream(seed, _INIT_STREAM).uniform((d,), hyper.lam_low, hyper.lam_high)


def run_bayesbinn(f: LossExpr, hyper: BbnHyper, seed: int, *,
                  lam0: np.ndarray | None = None) -> Trajectory:
    """Simulate the ε-perturbed update for ``hyper.steps`` steps."""
    d, steps = f.arity, int(hyper.steps)
    lam = initial_lambda(d, hyper, seed) if lam0 is None else np.array(lam0, dtype=float)
    if lam.shape != (d,):
        raise UsageError(f"lam0 must have shape ({d},), got {lam.shape}")
    # Row k of one (steps, d) draw equals the k-th per-step draw: same words, same order.
    deltas = RngStream(seed, _NOISE_STREAM).half_logistic((steps, d))
    lams = np.empty((steps + 1, d))
    ws = np.empty((steps, d))
    Js = np.empty((steps, d))
    tau, eps, alpha, N = hyper.tau, hyper.eps, hyper.alpha, hyper.N
    with np.errstate(over="ignore", invalid="ignore"):
        for k in range(steps):
            lams[k] = lam
            delta = deltas[k]
            w_soft = np.tanh((lam - delta) / tau)
            try:
                J = bbgs_scaling(lam, delta, tau, eps)
            except DomainError as exc:
                raise NumericError(f"{exc} at step {k}", step=k, partial=lams[:k + 1]) from exc
            lam = (1.0 - alpha) * lam - alpha * N * J * f.grad(w_soft)
            if not np.all(np.isfinite(lam)):
                raise NumericError(f"non-finite lambda at step {k}", step=k, partial=lams[:k + 1])
            ws[k] = _sign(lams[k] - delta)
            Js[k] = J
    lams[steps] = lam
    return Trajectory(lams, ws, Js, deltas, hyper, int(seed), "bayesbinn")


def run_latent_decay_st(f: LossExpr, alpha: float, lam_bar0, steps: int) -> Trajectory:
    """``w = sign(lam_bar)``; ``lam_bar <- (1 - alpha) lam_bar - alpha f'(w)``."""
    if not 0 < alpha < 1:
        raise DomainError(f"alpha must lie in (0, 1), got {alpha}")
    steps = int(steps)
    lam = np.array(lam_bar0, dtype=float)
    if lam.shape != (f.arity,):
        raise UsageError(f"lam_bar0 must have shape ({f.arity},), got {lam.shape}")
    lams = np.empty((steps + 1, lam.size))
    ws = np.empty((steps, lam.size))
    for k in range(steps):
        lams[k] = lam
        w = _sign(lam)
        ws[k] = w
        lam = (1.0 - alpha) * lam - alpha * f.grad(w)
    lams[steps] = lam
    return Trajectory(lams, ws, None, None, None, None, "latent_decay_st")


def deterministic_from(t_bbn: Trajectory, f: LossExpr, burn_in: int,
                       steps: int | None = None) -> Trajectory:
    """Deterministic run started from ``(tau / N) lam`` at step ``burn_in`` of ``t_bbn``."""
    h = t_bbn.hyper
    if h is None:
        raise UsageError("need a BayesBiNN trajectory")
    if not 0 <= burn_in < t_bbn.steps:
        raise UsageError(f"burn_in must lie in [0, {t_bbn.steps}), got {burn_in}")
    steps = t_bbn.steps - burn_in if steps is None else steps
    return run_latent_decay_st(f, h.alpha, (h.tau / h.N) * t_bbn.lam[burn_in], steps)


@dataclass(frozen=True)
class CollapseReport:
    collapse_step: int | None
    J_fraction: float
    match_fraction: float
    terminal_max_abs_lam: float
    max_rel_lam_deviation: float
    compared_steps: int


def collapse_step(t: Trajectory, threshold: float = COLLAPSE_THRESHOLD) -> int | None:
    """First step index whose post-update ``max|lam|`` exceeds ``threshold``."""
    over = np.nonzero(t.max_abs_lam[1:] > threshold)[0]
    return int(over[0]) + 1 if over.size else None


def J_within(t: Trajectory, rel: float = 0.01, gap: float = 12.0) -> tuple[float, int]:
    """Fraction of entries with ``|lam - delta| > gap`` whose ``J`` is within ``rel`` of ``1/tau``.

    Returns the fraction together with the number of qualifying entries.
    """
    if t.J is None or t.hyper is None:
        raise UsageError("need a BayesBiNN trajectory")
    mask = np.abs(t.lam[:-1] - t.delta) > gap
    count = int(mask.sum())
    if count == 0:
        return 1.0, 0
    ok = np.abs(t.J[mask] * t.hyper.tau - 1.0) <= rel
    return float(ok.mean()), count


def compare_dynamics(t_bbn: Trajectory, t_det: Trajectory, burn_in: int) -> CollapseReport:
    """Compare the BayesBiNN run after ``burn_in`` with a deterministic run.

    ``t_det`` must start from ``(tau / N) lam`` at step ``burn_in`` of
    ``t_bbn`` (see :func:`deterministic_from`).
    """
    if t_bbn.w.shape[1] != t_det.w.shape[1]:
        raise UsageError("trajectories have different dimensions")
    if t_bbn.hyper is None:
        raise UsageError("first trajectory must come from run_bayesbinn")
    if not 0 <= burn_in < t_bbn.steps:
        raise UsageError(f"burn_in must lie in [0, {t_bbn.steps})")
    K = min(t_bbn.steps - burn_in, t_det.steps)
    w_b, w_d = t_bbn.w[burn_in:burn_in + K], t_det.w[:K]
    match = float(np.mean(w_b == w_d))
    h = t_bbn.hyper
    scaled = (h.tau / h.N) * t_bbn.lam[burn_in:burn_in + K]
    ref = t_det.lam[:K]
    denom = np.maximum(np.abs(ref), np.finfo(float).tiny)
    dev = float(np.max(np.abs(scaled - ref) / denom)) if K else 0.0
    frac, _ = J_within(t_bbn)
    return CollapseReport(collapse_step(t_bbn), frac, match, float(t_bbn.max_abs_lam[-1]),
                          dev, K)
