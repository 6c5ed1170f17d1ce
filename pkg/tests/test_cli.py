import json
import math
import textwrap

import numpy as np
import pytest
from click.testing import CliRunner
from hypothesis import given
from hypothesis import strategies as st

from binest.cli import list_builtins, main, packaged_configs
from binest.cli.config import ConfigError, parse_config
from binest.cli.output import HEADERS, csv_bytes, fmt

SWEEP = textwrap.dedent("""\
    kind = "rate_sweep"
    name = "linear_bias"
    seed = 7

    [[sweep]]
    label = "linear"
    quantity = "bias"
    grid = {grid}
    slope_min = 1.9
    slope_max = 2.1
    [sweep.function]
    builtin = "linear"
    [sweep.estimator]
    kind = "GS"
    [sweep.theta]
    kind = "eta"
    value = 0.3
    """)

BIAS = textwrap.dedent("""\
    kind = "bias_table"
    name = "abs_small"
    seed = 3
    n = 20000
    report = "p"
    [function]
    builtin = "abs_shift"
    a = 0.9
    [theta]
    kind = "p"
    value = 0.95
    [[estimator]]
    kind = "ST"
    encoding = "pm1"
    expect_bias = 0.0
    [[estimator]]
    kind = "DARN"
    expect_bias = -1.8
    """)


def _write(tmp_path, text, name="cfg.toml"):
    p = tmp_path / name
    p.write_text(text)
    return p


def _run(*args):
    return CliRunner().invoke(main, [str(a) for a in args])


# list ------------------------------------------------------------------------------------


def test_list_contents():
    out = _run("list").output
    assert "abs_shift(a)" in out
    for kind in ("ST", "DARN", "GS", "STGS", "BBGS", "NOISEOP", "RELAXED_DARN", "RESCALED_ST"):
        assert f"  {kind} " in out
    gs_row = next(line for line in out.splitlines() if line.strip().startswith("GS "))
    assert "tau > 0" in gs_row
    assert out.strip() == list_builtins().strip()


# run ---------------------------------------------------------------------------------------


def test_rate_sweep_outputs(tmp_path):
    cfg = _write(tmp_path, SWEEP.format(grid="[0.004, 0.002, 0.001, 0.0005, 0.00025]"))
    r = _run("run", cfg, "--out", tmp_path / "out")
    assert r.exit_code == 0, r.output
    d = tmp_path / "out" / "linear_bias"
    assert sorted(p.name for p in d.iterdir()) == ["linear_bias.csv", "linear_bias.svg",
                                                       "summary.json"]
    head = (d / "linear_bias.csv").read_bytes().split(b"\r\n")[0].decode()
    assert head == HEADERS["rate_sweep"]
    summary = json.loads((d / "summary.json").read_text())
    assert summary["schema"] == "binest.summary/1"
    assert summary["status"] == "pass"
    assert summary["provenance"]["seed"] == 7
    assert summary["details"]["linear"]["slope"] == pytest.approx(2.0, abs=0.05)
    svg = (d / "linear_bias.svg").read_text()
    assert "<svg" in svg and "xlink:href=\"http" not in svg


def test_failing_assertion_exits_one(tmp_path):
    cfg = _write(tmp_path, SWEEP.format(grid="[0.4, 0.2, 0.1, 0.05, 0.025]").replace(
        "slope_min = 1.9", "slope_min = 2.05"))
    r = _run("run", cfg, "--out", tmp_path / "out")
    assert r.exit_code == 1
    assert "FAIL" in r.output


def test_empty_grid_is_usage_error_without_outputs(tmp_path):
    cfg = _write(tmp_path, SWEEP.format(grid="[]"))
    r = _run("run", cfg, "--out", tmp_path / "out")
    assert r.exit_code == 2
    assert "grid" in r.output and "empty" in r.output
    assert not (tmp_path / "out").exists()


def test_parse_error_reports_line_and_field(tmp_path):
    text = SWEEP.format(grid="[0.4, 0.2, 0.1, 0.05]").replace('builtin = "linear"',
                                                              'builtin = "sine"')
    with pytest.raises(ConfigError) as info:
        parse_config(text, "x.toml")
    msg = str(info.value)
    assert "x.toml:" in msg and "sweep[0].function.builtin" in msg
    line = text.splitlines().index('builtin = "sine"') + 1
    assert f":{line}" in msg


def test_toml_syntax_error(tmp_path):
    cfg = _write(tmp_path, "kind = \n")
    r = _run("run", cfg, "--out", tmp_path / "out")
    assert r.exit_code == 2


@pytest.mark.parametrize("mutation", [("seed = 7", "seed = 7\nbogus = 1"),
                                      ('kind = "GS"', 'kind = "GS"\ntau = -1.0'),
                                      ('kind = "rate_sweep"', 'kind = "histogram"')])
def test_invalid_configs(mutation):
    text = SWEEP.format(grid="[0.4, 0.2, 0.1, 0.05, 0.025]").replace(*mutation)
    with pytest.raises(ConfigError):
        parse_config(text, "x.toml")


def test_bias_table_header_and_rerun_identical(tmp_path):
    cfg = _write(tmp_path, BIAS)
    for out in ("a", "b"):
        assert _run("run", cfg, "--out", tmp_path / out).exit_code == 0
    a, b = tmp_path / "a" / "abs_small", tmp_path / "b" / "abs_small"
    csv = (a / "abs_small.csv").read_bytes()
    assert csv.split(b"\r\n")[0].decode() == \
        "estimator,param_kind,theta,n,mean,stderr,oracle,bias,variance,mse,seed"
    for name in ("abs_small.csv", "abs_small.svg", "summary.json"):
        assert (a / name).read_bytes() == (b / name).read_bytes()
    assert not [p for p in a.iterdir() if p.name.endswith(".tmp")]


def test_seed_override_changes_provenance(tmp_path):
    cfg = _write(tmp_path, BIAS)
    _run("run", cfg, "--out", tmp_path / "o", "--seed", 99)
    s = json.loads((tmp_path / "o" / "abs_small" / "summary.json").read_text())
    assert s["provenance"]["seed"] == 99


def test_numeric_failure_is_recorded(tmp_path):
    text = textwrap.dedent("""\
        kind = "bayesbinn"
        name = "blowup"
        seed = 1
        tau = 1.0
        eps = 0.0
        alpha = 0.5
        N = 1e308
        burn_in = 10
        steps = 200
        [function]
        builtin = "quadratic_form"
        dim = 4
        """)
    r = _run("run", _write(tmp_path, text), "--out", tmp_path / "o")
    assert r.exit_code == 1
    s = json.loads((tmp_path / "o" / "blowup" / "summary.json").read_text())
    assert s["status"] == "error"
    assert "NumericError" in s["error"]


def test_suite_flag(tmp_path):
    d = tmp_path / "suite"
    d.mkdir()
    _write(d, BIAS, "one.toml")
    r = _run("run", d, "--out", tmp_path / "o")
    assert r.exit_code == 2 and "--suite" in r.output
    r = _run("run", d, "--suite", "--out", tmp_path / "o")
    assert r.exit_code == 0
    assert (tmp_path / "o" / "abs_small" / "summary.json").exists()


def test_packaged_configs_all_validate():
    files = sorted(packaged_configs().glob("*.toml"))
    assert len(files) == 12
    crit = sorted(parse_config(f.read_text(), f.name).criterion for f in files)
    assert crit == list(range(1, 13))


# serialization -----------------------------------------------------------------------------


@given(st.floats(allow_nan=False, allow_infinity=False))
def test_fmt_round_trips(x):
    assert float(fmt(x)) == x


def test_fmt_special_values():
    assert fmt(math.inf) == "inf" and fmt(-math.inf) == "-inf" and fmt(math.nan) == "nan"
    assert fmt(np.int64(3)) == "3" and fmt(True) == "true" and fmt(None) == ""


def test_csv_row_width_checked():
    with pytest.raises(ValueError):
        csv_bytes("a,b", [(1,)])
