"""Experiment configuration files (TOML) and their validation.

Every field is checked before any computation starts; errors name the file,
the dotted field path and, when it can be found, the line.
"""

from __future__ import annotations

import hashlib
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import tomli

from binest.core.expr import BUILTINS, LossExpr, make_builtin
from binest.core.params import ParamKind, ParamPoint
from binest.errors import BinestError, UsageError
from binest.estimators import EstimatorKind, EstimatorSpec

KINDS = (
    "bias_table", "rate_sweep", "tail_prob", "noise_op_study", "chain_tail", "bayesbinn",
    "gs_factor", "stgs_limit", "lemma_equivalence", "relaxed_darn", "rescaling",
)

_MISSING = object()


class ConfigError(UsageError):
    def __init__(self, source: str, field_path: str, message: str, line: int | None = None):
        where = f"{source}:{line}" if line else source
        label = f" field '{field_path}'" if field_path else ""
        super().__init__(f"{where}:{label} {message}")
        self.source = source
        self.field = field_path
        self.line = line


@dataclass
class _Ctx:
    source: str
    text: str

    def line_of(self, dotted: str) -> int | None:
        """Best-effort line of the last key of ``dotted`` (first occurrence)."""
        if not dotted:
            return None
        key = re.sub(r"\[\d+\]", "", dotted.split(".")[-1])
        pat = re.compile(rf"^\s*(\[\[?[^\]]*\b{re.escape(key)}\]\]?|{re.escape(key)}\s*=)")
        for i, line in enumerate(self.text.splitlines(), start=1):
            if pat.search(line):
                return i
        return None

    def error(self, dotted: str, message: str) -> ConfigError:
        return ConfigError(self.source, dotted, message, self.line_of(dotted))


class Reader:
    """Typed access to one TOML table with unknown-key detection."""

    def __init__(self, data: dict, ctx: _Ctx, prefix: str = ""):
        if not isinstance(data, dict):
            raise ctx.error(prefix, "must be a table")
        self.data = data
        self.ctx = ctx
        self.prefix = prefix
        self.used: set[str] = set()

    def path(self, key: str) -> str:
        return f"{self.prefix}.{key}" if self.prefix else key

    def fail(self, key: str, message: str) -> ConfigError:
        return self.ctx.error(self.path(key), message)

    def has(self, key: str) -> bool:
        return key in self.data

    def get(self, key: str, kind: str, default: Any = _MISSING, check=None, why: str = ""):
        self.used.add(key)
        if key not in self.data:
            if default is _MISSING:
                raise self.fail(key, "is required")
            return default
        value = _coerce(self.data[key], kind)
        if value is None:
            raise self.fail(key, f"must be {kind}, got {self.data[key]!r}")
        if check is not None and not check(value):
            raise self.fail(key, f"{why or 'is out of range'} (got {value!r})")
        return value

    def grid(self, key: str, positive: bool = False, integer: bool = False, default=_MISSING):
        """Non-empty list of numbers."""
        self.used.add(key)
        if key not in self.data:
            if default is _MISSING:
                raise self.fail(key, "is required")
            return list(default)
        raw = self.data[key]
        if not isinstance(raw, list):
            raise self.fail(key, "must be a list")
        if not raw:
            raise self.fail(key, "grid must be non-empty")
        out = []
        for v in raw:
            c = _coerce(v, "int" if integer else "real")
            if c is None:
                raise self.fail(key, f"entries must be {'integers' if integer else 'numbers'}")
            if positive and not c > 0:
                raise self.fail(key, f"entries must be > 0 (got {c!r})")
            out.append(c)
        return out

    def sub(self, key: str, default=_MISSING) -> "Reader":
        self.used.add(key)
        if key not in self.data:
            if default is _MISSING:
                raise self.fail(key, "table is required")
            return Reader(dict(default), self.ctx, self.path(key))
        return Reader(self.data[key], self.ctx, self.path(key))

    def subs(self, key: str) -> list["Reader"]:
        self.used.add(key)
        raw = self.data.get(key)
        if not isinstance(raw, list) or not raw:
            raise self.fail(key, "must be a non-empty array of tables")
        return [Reader(item, self.ctx, f"{self.path(key)}[{i}]") for i, item in enumerate(raw)]

    def finish(self, extra: tuple = ()) -> None:
        unknown = sorted(set(self.data) - self.used - set(extra))
        if unknown:
            raise self.fail(unknown[0], "unknown field")


def _coerce(v, kind: str):
    if kind == "real":
        if isinstance(v, bool) or not isinstance(v, (int, float)):
            return None
        return float(v)
    if kind == "int":
        if isinstance(v, bool):
            return None
        if isinstance(v, float) and v.is_integer():
            return int(v)
        return v if isinstance(v, int) else None
    if kind == "str":
        return v if isinstance(v, str) else None
    if kind == "bool":
        return v if isinstance(v, bool) else None
    raise ValueError(kind)


# shared blocks ---------------------------------------------------------------


def read_function(r: Reader) -> dict:
    name = r.get("builtin", "str")
    if name not in BUILTINS:
        raise r.fail("builtin", f"unknown builtin function {name!r}; known: {sorted(BUILTINS)}")
    params = {k: v for k, v in r.data.items() if k != "builtin"}
    try:
        make_builtin(name, **params)
    except BinestError as exc:
        raise r.fail("builtin", str(exc)) from None
    return {"builtin": name, "params": params}


def build_function(fs: dict) -> LossExpr:
    return make_builtin(fs["builtin"], **fs["params"])


def describe_function(fs: dict) -> str:
    args = ",".join(f"{k}={v}" for k, v in sorted(fs["params"].items()))
    return f"{fs['builtin']}({args})"


_SPEC_FIELDS = {"tau": "real", "eps": "real", "rho": "real", "S": "int", "base": "str",
                "a_low": "real", "tau_scale": "real", "scale_mode": "str", "encoding": "str"}


def read_estimator(r: Reader, extra: tuple = ()) -> dict:
    kind = r.get("kind", "str")
    if kind not in EstimatorKind._value2member_map_:
        raise r.fail("kind", f"unknown estimator {kind!r}; known: "
                             f"{[k.value for k in EstimatorKind]}")
    out = {"kind": kind}
    for key, typ in _SPEC_FIELDS.items():
        if r.has(key):
            out[key] = r.get(key, typ)
    r.finish(extra)
    try:
        EstimatorSpec(**out)
    except (BinestError, ValueError) as exc:
        raise r.fail("kind", str(exc)) from None
    return out


def build_estimator(es: dict) -> EstimatorSpec:
    return EstimatorSpec(**es)


def read_theta(r: Reader) -> dict:
    kind = r.get("kind", "str")
    if kind not in ParamKind._value2member_map_:
        raise r.fail("kind", f"unknown parametrization {kind!r}; known: "
                             f"{[k.value for k in ParamKind]}")
    if isinstance(r.data.get("value"), list):
        value = r.grid("value")
    else:
        value = r.get("value", "real")
    r.finish()
    try:
        ParamPoint(ParamKind(kind), value)
    except BinestError as exc:
        raise r.fail("value", str(exc)) from None
    return {"kind": kind, "value": value}


def build_theta(ts: dict) -> ParamPoint:
    return ParamPoint(ParamKind(ts["kind"]), ts["value"])


def _pos(v):
    return v > 0


def _nonneg(v):
    return v >= 0


def _unit_open(v):
    return 0 < v < 1


def _range(r: Reader, key: str, default):
    vals = r.grid(key, default=default)
    if len(vals) != 2 or not vals[0] < vals[1]:
        raise r.fail(key, "must be [low, high] with low < high")
    return [float(v) for v in vals]


def _slope_bounds(r: Reader):
    lo = r.get("slope_min", "real")
    hi = r.get("slope_max", "real", check=lambda v: v > lo, why="must exceed slope_min")
    return lo, hi


# per-kind validators -----------------------------------------------------------


def _v_bias_table(r: Reader) -> dict:
    ests = []
    for er in r.subs("estimator"):
        e = {"spec": None}
        e["expect_bias"] = er.get("expect_bias", "real", None)
        e["expect_tol"] = er.get("expect_tol", "real", 1e-12, _pos)
        e["mc_k"] = er.get("mc_k", "real", 4.0, _pos)
        e["spec"] = read_estimator(er, extra=())
        ests.append(e)
    return {
        "function": read_function(r.sub("function")),
        "theta": read_theta(r.sub("theta")),
        "report": r.get("report", "str", "eta",
                        lambda v: v in ParamKind._value2member_map_, "unknown parametrization"),
        "n": r.get("n", "int", check=lambda v: v >= 2, why="must be >= 2"),
        "estimators": ests,
    }


def _v_rate_sweep(r: Reader) -> dict:
    from binest.harness import ORACLE_MODES, QUANTITIES, check_grid

    sweeps = []
    for sr in r.subs("sweep"):
        s = {
            "label": sr.get("label", "str"),
            "function": read_function(sr.sub("function")),
            "estimator": read_estimator(sr.sub("estimator")),
            "theta": read_theta(sr.sub("theta")),
            "param": sr.get("param", "str", "tau"),
            "grid": sr.grid("grid", positive=True),
            "quantity": sr.get("quantity", "str", check=lambda v: v in QUANTITIES,
                               why=f"must be one of {QUANTITIES}"),
            "oracle": sr.get("oracle", "str", "quadrature", lambda v: v in ORACLE_MODES,
                             f"must be one of {ORACLE_MODES}"),
            "n": sr.get("n", "int", 10**6, lambda v: v >= 2),
            "eps_thr": sr.get("eps_thr", "real", 0.01, _pos),
        }
        s["slope_min"], s["slope_max"] = _slope_bounds(sr)
        try:
            check_grid(s["grid"])
        except UsageError as exc:
            raise sr.fail("grid", str(exc)) from None
        sr.finish()
        sweeps.append(s)
    return {"sweeps": sweeps}


def _v_tail_prob(r: Reader) -> dict:
    out = {
        "eta": r.get("eta", "real"),
        "tau": r.get("tau", "real", check=_pos),
        "eps_thr": r.get("eps_thr", "real", check=_pos),
        "n": r.get("n", "int", check=lambda v: v >= 10**4, why="must be >= 1e4"),
        "mc_k": r.get("mc_k", "real", 3.0, _pos),
    }
    sr = r.sub("slope")
    out["slope_grid"] = sr.grid("grid", positive=True)
    out["slope_n"] = sr.get("n", "int", check=lambda v: v >= 10**4, why="must be >= 1e4")
    out["slope_min"], out["slope_max"] = _slope_bounds(sr)
    sr.finish()
    return out


def _v_noise_op_study(r: Reader) -> dict:
    raw = r.data.get("bases")
    r.used.add("bases")
    if not isinstance(raw, list) or not raw or not all(b in ("ST", "DARN") for b in raw):
        raise r.fail("bases", "must be a non-empty list drawn from ['ST', 'DARN']")
    return {
        "function": read_function(r.sub("function")),
        "theta": read_theta(r.sub("theta")),
        "bases": list(raw),
        "encoding": r.get("encoding", "str", "pm1", lambda v: v in ("01", "pm1")),
        "rho": r.grid("rho"),
        "S": r.grid("S", positive=True, integer=True),
        "n": r.get("n", "int", check=lambda v: v >= 2),
        "mc_k": r.get("mc_k", "real", 3.0, _pos),
    }


def _v_chain_tail(r: Reader) -> dict:
    from binest.harness import check_grid

    layers = []
    for lr in r.subs("layers"):
        L = lr.get("L", "int", check=lambda v: 1 <= v <= 6, why="must be in [1, 6]")
        lo, hi = _slope_bounds(lr)
        lr.finish()
        layers.append({"L": L, "slope_min": lo, "slope_max": hi})
    grid = r.grid("grid", positive=True)
    try:
        check_grid(grid)
    except UsageError as exc:
        raise r.fail("grid", str(exc)) from None
    return {
        "eta": r.get("eta", "real", 0.0),
        "eps_thr": r.get("eps_thr", "real", check=lambda v: 0 < v < 0.25),
        "grid": grid,
        "n": r.get("n", "int", check=lambda v: v >= 10**4, why="must be >= 1e4"),
        "layers": layers,
    }


def _v_bayesbinn(r: Reader) -> dict:
    return {
        "function": read_function(r.sub("function")),
        "tau": r.get("tau", "real", check=_pos),
        "eps": r.get("eps", "real", check=_nonneg),
        "alpha": r.get("alpha", "real", check=_unit_open),
        "N": r.get("N", "real", check=_pos),
        "burn_in": r.get("burn_in", "int", check=_nonneg),
        "steps": r.get("steps", "int", check=lambda v: v >= 1),
        "alt_tau": r.grid("alt_tau", positive=True, default=[]),
        "lam_range": _range(r, "lam_range", [-10.0, 10.0]),
        "collapse_within": r.get("collapse_within", "int", 100, _pos),
        "collapse_threshold": r.get("collapse_threshold", "real", 1e8, _pos),
        "J_rel": r.get("J_rel", "real", 0.01, _pos),
        "J_gap": r.get("J_gap", "real", 12.0, _pos),
        "match_min": r.get("match_min", "real", 1.0, lambda v: 0 <= v <= 1),
    }


def _v_gs_factor(r: Reader) -> dict:
    out = {
        "gap": r.get("gap", "real", 1.0, _pos),
        "grid": r.grid("grid", positive=True),
        "ratio_tol": r.get("ratio_tol", "real", 0.05, _pos),
    }
    if len(out["grid"]) < 2:
        raise r.fail("grid", "needs at least two temperatures")
    out["slope_min"], out["slope_max"] = _slope_bounds(r)
    return out


def _v_stgs_limit(r: Reader) -> dict:
    from binest.harness import check_grid

    out = {
        "cases": r.get("cases", "int", 5, _pos),
        "eta_range": _range(r, "eta_range", [-1.0, 1.0]),
        "coef_range": _range(r, "coef_range", [-2.0, 2.0]),
        "tau_small": r.get("tau_small", "real", 1e-4, _pos),
        "mean_rel": r.get("mean_rel", "real", 1e-3, _pos),
        "coef_rel": r.get("coef_rel", "real", 0.02, _pos),
        "grid": r.grid("grid", positive=True),
    }
    try:
        check_grid(out["grid"])
    except UsageError as exc:
        raise r.fail("grid", str(exc)) from None
    out["slope_min"], out["slope_max"] = _slope_bounds(r)
    return out


def _v_lemma_equivalence(r: Reader) -> dict:
    return {
        "cases": r.get("cases", "int", 10, _pos),
        "draws": r.get("draws", "int", 10**4, _pos),
        "lam_range": _range(r, "lam_range", [-2.0, 2.0]),
        "tau_range": _range(r, "tau_range", [0.2, 2.0]),
        "degree": r.get("degree", "int", 3, lambda v: 1 <= v <= 8),
        "rel_tol": r.get("rel_tol", "real", 1e-9, _pos),
    }


def _v_relaxed_darn(r: Reader) -> dict:
    fns = [read_function(fr) for fr in r.subs("functions")]
    ir = r.sub("interval")
    interval = {
        "function": read_function(ir.sub("function")),
        "p": ir.get("p", "real", check=_unit_open),
        "a_low": ir.get("a_low", "real", check=lambda v: 0 <= v < 1),
        "n": ir.get("n", "int", check=lambda v: v >= 2),
        "mc_k": ir.get("mc_k", "real", 3.0, _pos),
    }
    ir.finish()
    return {
        "functions": fns,
        "p": r.get("p", "real", check=_unit_open),
        "n": r.get("n", "int", check=lambda v: v >= 2),
        "mc_k": r.get("mc_k", "real", 4.0, _pos),
        "exact_tol": r.get("exact_tol", "real", 1e-8, _pos),
        "interval": interval,
    }


def _v_rescaling(r: Reader) -> dict:
    return {
        "function": read_function(r.sub("function")),
        "p": r.get("p", "real", check=_unit_open),
        "tau_scale": r.get("tau_scale", "real", check=_pos),
        "rescaled_max": r.get("rescaled_max", "real", 1e-3, _pos),
        "original_min": r.get("original_min", "real", 0.1, _pos),
        "n": r.get("n", "int", 0, _nonneg),
        "rate_grid": r.grid("rate_grid", positive=True, default=[]),
    }


_VALIDATORS = {
    "bias_table": _v_bias_table, "rate_sweep": _v_rate_sweep, "tail_prob": _v_tail_prob,
    "noise_op_study": _v_noise_op_study, "chain_tail": _v_chain_tail,
    "bayesbinn": _v_bayesbinn, "gs_factor": _v_gs_factor, "stgs_limit": _v_stgs_limit,
    "lemma_equivalence": _v_lemma_equivalence, "relaxed_darn": _v_relaxed_darn,
    "rescaling": _v_rescaling,
}


@dataclass
class ExperimentConfig:
    name: str
    kind: str
    seed: int
    params: dict
    sha256: str
    source: str
    title: str = ""
    criterion: int | None = None
    extra: dict = field(default_factory=dict)


def parse_config(text: str, source: str = "<config>", seed: int | None = None) -> ExperimentConfig:
    """Parse and fully validate one experiment description."""
    ctx = _Ctx(source, text)
    try:
        data = tomli.loads(text)
    except tomli.TOMLDecodeError as exc:
        m = re.search(r"line (\d+)", str(exc))
        raise ConfigError(source, "", f"parse error: {exc}", int(m.group(1)) if m else None)
    r = Reader(data, ctx)
    kind = r.get("kind", "str", check=lambda v: v in KINDS, why=f"must be one of {list(KINDS)}")
    name = r.get("name", "str", check=lambda v: re.fullmatch(r"[A-Za-z0-9_.-]+", v) is not None,
                 why="must use letters, digits, '.', '_' or '-'")
    cfg_seed = r.get("seed", "int", check=lambda v: 0 <= v < 2**64, why="must be in [0, 2^64)")
    title = r.get("title", "str", "")
    criterion = r.get("criterion", "int", None)
    params = _VALIDATORS[kind](r)
    r.finish()
    if seed is not None:
        if not 0 <= seed < 2**64:
            raise ConfigError(source, "seed", "override must be in [0, 2^64)")
        cfg_seed = seed
    digest = hashlib.sha256(text.encode("utf-8")).hexdigest()
    return ExperimentConfig(name, kind, int(cfg_seed), params, digest, source, title, criterion)


def load_config(path, seed: int | None = None) -> ExperimentConfig:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise UsageError(f"{path}: cannot read config: {exc.strerror}") from None
    return parse_config(text, path.name, seed)
