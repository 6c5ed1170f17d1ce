"""Acceptance suite: criteria 1-12 from the packaged configs, plus the infrastructure check.

Each test prints one ``PASS``/``FAIL`` line for its criterion before asserting.
"""

import time

import pytest

from binest.cli import VERIFY_BUDGET_S, _tree_identical, packaged_configs, run_suite


@pytest.fixture(scope="module")
def suite(tmp_path_factory):
    root = tmp_path_factory.mktemp("acceptance")
    files = sorted(packaged_configs().glob("*.toml"))
    t0 = time.perf_counter()
    results, _ = run_suite(files, root / "run1", echo=lambda *_: None)
    elapsed = time.perf_counter() - t0
    run_suite(files, root / "run2", echo=lambda *_: None)
    by_crit = {cfg.criterion: (cfg, summary) for cfg, summary, _ in results}
    return by_crit, elapsed, _tree_identical(root / "run1", root / "run2")


def _report(capsys, crit: int, ok: bool, what: str, extra: str = "") -> None:
    with capsys.disabled():
        print(f"\n{'PASS' if ok else 'FAIL'} criterion {crit:>2}  {what}{extra}")


@pytest.mark.parametrize("crit", range(1, 13))
def test_criterion(suite, crit, capsys):
    by_crit, _, _ = suite
    cfg, summary = by_crit[crit]
    failed = [f"{a['id']} (measured {a['measured']}, bound {a['bound']})"
              for a in summary["assertions"] if a["verdict"] == "fail"]
    extra = f"  error: {summary['error']}" if summary["error"] else ""
    if failed:
        extra += "  failed: " + "; ".join(failed)
    ok = summary["status"] == "pass"
    _report(capsys, crit, ok, cfg.name, extra)
    assert summary["assertions"] or summary["error"]
    assert ok, extra


def test_criterion_13_infrastructure(suite, capsys):
    by_crit, elapsed, identical = suite
    all_pass = all(s["status"] == "pass" for _, s in by_crit.values())
    ok = sorted(by_crit) == list(range(1, 13)) and all_pass and identical and \
        elapsed < VERIFY_BUDGET_S
    _report(capsys, 13, ok, "infrastructure",
            f"  (all pass: {all_pass}; run {elapsed:.1f}s < {VERIFY_BUDGET_S:.0f}s; "
            f"byte-identical rerun: {identical})")
    assert ok
