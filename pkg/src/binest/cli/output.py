"""Deterministic CSV, JSON and SVG writers with atomic replacement."""

from __future__ import annotations

import csv
import io
import json
import math
import os
import tempfile
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Sequence

import numpy as np

SUMMARY_SCHEMA = "binest.summary/1"

# Fixed CSV headers per table kind.
HEADERS = {
    "bias_table": ("estimator,param_kind,theta,n,mean,stderr,oracle,bias,variance,mse,seed"),
    "rate_sweep": "label,param,x,quantity,value,fitted",
    "tail_prob": "eta,tau,eps_thr,n,p_hat,stderr,closed",
    "noise_op_study": ("base,rho,S,n,mean,stderr,variance,var_stderr,closed_variance,"
                       "var_diff,var_diff_expected,var_diff_stderr"),
    "chain_tail": "L,eta,tau,eps_thr,n,hits,p_hat,stderr",
    "bayesbinn": "run,tau,step,max_abs_lam,J_min,J_median,J_max,w_plus_fraction",
    "gs_factor": "tau,inv_tau,factor,reference,ratio",
    "stgs_limit": "case,a,b,c,eta,mean,limit,rel_err,lead_coef,lead_ref,slope",
    "lemma_equivalence": "case,lambda,tau,coeffs,draws,max_rel_err",
    "relaxed_darn": "function,p,a_low,exact,reference,mc_mean,mc_stderr,n",
    "rescaling": "tau_scale,p,estimator_mean,grad_original,grad_rescaled,bias_original,bias_rescaled",
}


def fmt(v) -> str:
    """17 significant digits for floats; plain text otherwise."""
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        v = float(v)
        if math.isnan(v):
            return "nan"
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        return format(v, ".17g")
    if v is None:
        return ""
    return str(v)


def atomic_write_bytes(path: Path, data: bytes) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", suffix=".tmp", dir=path.parent)
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def csv_bytes(header: str, rows: Sequence[Sequence[Any]]) -> bytes:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\r\n")
    cols = header.split(",")
    w.writerow(cols)
    for row in rows:
        if len(row) != len(cols):
            raise ValueError(f"row has {len(row)} fields, header has {len(cols)}")
        w.writerow([fmt(v) for v in row])
    return buf.getvalue().encode("utf-8")


def _jsonable(v):
    if isinstance(v, dict):
        return {str(k): _jsonable(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_jsonable(x) for x in v]
    if isinstance(v, np.ndarray):
        return [_jsonable(x) for x in v.tolist()]
    if isinstance(v, (np.bool_, bool)):
        return bool(v)
    if isinstance(v, (np.integer,)):
        return int(v)
    if isinstance(v, (float, np.floating)):
        v = float(v)
        return v if math.isfinite(v) else fmt(v)
    return v


def json_bytes(obj) -> bytes:
    return (json.dumps(_jsonable(obj), indent=2, sort_keys=True) + "\n").encode("utf-8")


def svg_bytes(draw: Callable) -> bytes:
    """Render ``draw(fig)`` to a self-contained SVG with no timestamp or random ids."""
    import matplotlib

    matplotlib.use("Agg")
    from matplotlib.figure import Figure

    with matplotlib.rc_context({"svg.hashsalt": "binest", "svg.fonttype": "path"}):
        fig = Figure(figsize=(6.4, 4.4))
        draw(fig)
        buf = io.BytesIO()
        fig.savefig(buf, format="svg", metadata={"Date": None})
    return buf.getvalue()


@dataclass
class Assertion:
    id: str
    description: str
    measured: Any
    bound: Any
    op: str
    passed: bool

    def as_dict(self) -> dict:
        return {"id": self.id, "description": self.description, "measured": self.measured,
                "bound": self.bound, "op": self.op, "verdict": "pass" if self.passed else "fail"}


def check_le(aid, desc, measured, bound) -> Assertion:
    return Assertion(aid, desc, float(measured), float(bound), "<=",
                     bool(measured <= bound))


def check_ge(aid, desc, measured, bound) -> Assertion:
    return Assertion(aid, desc, float(measured), float(bound), ">=",
                     bool(measured >= bound))


def check_in(aid, desc, measured, lo, hi) -> Assertion:
    return Assertion(aid, desc, float(measured), [float(lo), float(hi)], "in",
                     bool(lo <= measured <= hi))


def check_eq(aid, desc, measured, expected) -> Assertion:
    return Assertion(aid, desc, measured, expected, "==", bool(measured == expected))


@dataclass
class Result:
    """Everything a runner produces; written out by :func:`write_bundle`."""

    tables: dict = field(default_factory=dict)   # file stem -> (header kind, rows)
    assertions: list = field(default_factory=list)
    plots: dict = field(default_factory=dict)    # file stem -> draw callable
    details: dict = field(default_factory=dict)
    error: str | None = None

    @property
    def passed(self) -> bool:
        return self.error is None and all(a.passed for a in self.assertions)


def write_bundle(out_dir: Path, cfg, result: Result, version: str) -> dict:
    """Write CSV tables, SVG plots and ``summary.json``; returns the summary."""
    out_dir = Path(out_dir)
    files = []
    for stem, (kind, rows) in sorted(result.tables.items()):
        name = f"{stem}.csv"
        atomic_write_bytes(out_dir / name, csv_bytes(HEADERS[kind], rows))
        files.append(name)
    for stem, draw in sorted(result.plots.items()):
        name = f"{stem}.svg"
        atomic_write_bytes(out_dir / name, svg_bytes(draw))
        files.append(name)
    summary = {
        "schema": SUMMARY_SCHEMA,
        "experiment": cfg.name,
        "kind": cfg.kind,
        "title": cfg.title,
        "criterion": cfg.criterion,
        "status": "error" if result.error else ("pass" if result.passed else "fail"),
        "error": result.error,
        "assertions": [a.as_dict() for a in result.assertions],
        "details": result.details,
        "outputs": files,
        "provenance": {"config": cfg.source, "config_sha256": cfg.sha256, "seed": cfg.seed,
                       "version": version},
    }
    atomic_write_bytes(out_dir / "summary.json", json_bytes(summary))
    return summary
