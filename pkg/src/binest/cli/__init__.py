"""Command-line runner: ``binest run``, ``binest list`` and ``binest verify``."""

from __future__ import annotations

import filecmp
import sys
import tempfile
import time
from importlib import resources
from pathlib import Path

import click

from binest import __version__
from binest.cli.config import ExperimentConfig, load_config
from binest.cli.output import Result, write_bundle
from binest.cli.runners import RUNNERS
from binest.core.expr import BUILTINS
from binest.errors import BinestError, UsageError
from binest.estimators import SCHEMA, EstimatorKind
from binest.harness import resolve_jobs

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2
VERIFY_BUDGET_S = 360.0


def packaged_configs() -> Path:
    return Path(str(resources.files("binest.cli") / "configs"))


def execute(cfg: ExperimentConfig, out_dir: Path, jobs: int | None = None) -> dict:
    """Run one validated experiment and write its bundle under ``out_dir / cfg.name``."""
    try:
        result = RUNNERS[cfg.kind](cfg, jobs)
    except UsageError:
        raise
    except (BinestError, ArithmeticError, ValueError) as exc:
        result = Result(error=f"{type(exc).__name__}: {exc}")
    return write_bundle(Path(out_dir) / cfg.name, cfg, result, __version__)


def run_experiment(config_path, out_dir, seed: int | None = None,
                   jobs: int | None = None) -> dict:
    """Parse, validate, run and write one experiment; returns the JSON summary."""
    return execute(load_config(config_path, seed), Path(out_dir), jobs)


def _collect(path: Path, suite: bool) -> list[Path]:
    if suite:
        if not path.is_dir():
            raise UsageError(f"{path}: --suite expects a directory of configs")
        files = sorted(path.glob("*.toml"))
        if not files:
            raise UsageError(f"{path}: no *.toml configs found")
        return files
    if path.is_dir():
        raise UsageError(f"{path} is a directory; pass --suite to run every config in it")
    return [path]


def run_suite(files, out_dir: Path, seed=None, jobs=None, echo=print) -> tuple[list, float]:
    """Validate every config first, then run them in order."""
    cfgs = [load_config(p, seed) for p in files]
    names = [c.name for c in cfgs]
    if len(set(names)) != len(names):
        raise UsageError("experiment names within a suite must be unique")
    out = []
    t_all = time.perf_counter()
    for cfg in cfgs:
        t0 = time.perf_counter()
        summary = execute(cfg, out_dir, jobs)
        dt = time.perf_counter() - t0
        out.append((cfg, summary, dt))
        echo(_status_line(cfg, summary, dt))
    return out, time.perf_counter() - t_all


def _status_line(cfg, summary, dt) -> str:
    status = summary["status"].upper()
    crit = f"criterion {cfg.criterion:>2}" if cfg.criterion is not None else "experiment"
    failed = [a["id"] for a in summary["assertions"] if a["verdict"] == "fail"]
    tail = f"  failed: {', '.join(failed)}" if failed else ""
    if summary["error"]:
        tail = f"  error: {summary['error']}"
    return f"{status:5} {crit}  {cfg.name}  ({dt:.1f}s){tail}"


@click.group()
@click.version_option(__version__, prog_name="binest")
def main():
    """Binary gradient estimator laboratory."""


@main.command()
@click.argument("config", type=click.Path(exists=True, path_type=Path))
@click.option("--suite", is_flag=True, help="CONFIG is a directory; run every *.toml in it.")
@click.option("--out", "out_dir", type=click.Path(path_type=Path), default=Path("binest-out"),
              show_default=True, help="Output directory.")
@click.option("--seed", type=int, default=None, help="Override the seed of every config.")
@click.option("--jobs", type=int, default=None,
              help="Worker threads (BINEST_JOBS overrides this).")
def run(config, suite, out_dir, seed, jobs):
    """Run one experiment config (or a suite directory)."""
    try:
        resolve_jobs(jobs)
        results, _ = run_suite(_collect(config, suite), out_dir, seed, jobs, click.echo)
    except UsageError as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(EXIT_USAGE)
    sys.exit(EXIT_OK if all(s["status"] == "pass" for _, s, _ in results) else EXIT_FAIL)


@main.command(name="list")
def list_cmd():
    """List builtin functions and estimator kinds with their hyperparameters."""
    click.echo(list_builtins())


def list_builtins() -> str:
    lines = ["Functions:"]
    for name, (_, schema, desc) in BUILTINS.items():
        sig = f"{name}({', '.join(schema)})"
        lines.append(f"  {sig:<40} {desc}")
        for k, v in schema.items():
            lines.append(f"      {k}: {v}")
    lines.append("")
    lines.append("Estimators:")
    for kind in EstimatorKind:
        schema = SCHEMA[kind]
        params = "; ".join(f"{k} {v}" for k, v in schema.items()) or "(no hyperparameters)"
        lines.append(f"  {kind.value:<14} {params}")
    return "\n".join(lines)


def _tree_identical(a: Path, b: Path) -> bool:
    fa = sorted(p.relative_to(a) for p in a.rglob("*") if p.is_file())
    fb = sorted(p.relative_to(b) for p in b.rglob("*") if p.is_file())
    if fa != fb:
        return False
    return all(filecmp.cmp(a / p, b / p, shallow=False) for p in fa)


def verify_suite(out_dir: Path | None = None, jobs: int | None = None,
                 configs: Path | None = None, echo=print) -> bool:
    """Run the packaged suite twice; report every criterion and the infrastructure check."""
    configs = configs or packaged_configs()
    files = _collect(configs, True)
    with tempfile.TemporaryDirectory(prefix="binest-verify-") as tmp:
        root = Path(out_dir) if out_dir is not None else Path(tmp)
        results, elapsed = run_suite(files, root / "run1", None, jobs, echo)
        echo("rerunning to check byte-identical outputs ...")
        run_suite(files, root / "run2", None, jobs, lambda *_: None)
        identical = _tree_identical(root / "run1", root / "run2")
    ok_all = all(s["status"] == "pass" for _, s, _ in results)
    infra = ok_all and elapsed < VERIFY_BUDGET_S and identical
    echo(f"{'PASS' if infra else 'FAIL':5} criterion 13  infrastructure  "
         f"(all pass: {ok_all}; first run {elapsed:.1f}s < {VERIFY_BUDGET_S:.0f}s: "
         f"{elapsed < VERIFY_BUDGET_S}; byte-identical rerun: {identical})")
    return infra


@main.command()
@click.option("--out", "out_dir", type=click.Path(path_type=Path), default=None,
              help="Keep outputs here (default: a temporary directory).")
@click.option("--jobs", type=int, default=None,
              help="Worker threads (BINEST_JOBS overrides this).")
@click.option("--configs", type=click.Path(exists=True, file_okay=False, path_type=Path),
              default=None, help="Config directory (default: the packaged suite).")
def verify(out_dir, jobs, configs):
    """Run the full acceptance suite from the checked-in configs."""
    try:
        resolve_jobs(jobs)
        ok = verify_suite(out_dir, jobs, configs, click.echo)
    except UsageError as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(EXIT_USAGE)
    sys.exit(EXIT_OK if ok else EXIT_FAIL)
