"""Command-line interface.

    ehrenfest run CONFIG
    ehrenfest compare-closures CONFIG
    ehrenfest cross-validate CONFIG
    ehrenfest verify-brackets [--samples N] [--seed S]

Exit codes: 0 success, 1 a verification check failed, 2 invalid
configuration, 3 runtime abort.  EHRENFEST_OUTPUT_DIR overrides the output
directory named in the configuration.
"""
from __future__ import annotations

import argparse
import logging
import os
import sys
from pathlib import Path

from .brackets import bracket_axiom_suite
from .config import ConfigError, ScenarioConfig, load_config
from .core import SimulationAbort
from .scenarios import (
    compare_closures,
    cross_validate,
    dump_json,
    run_scenario,
    write_observables,
    write_snapshots,
)
from .svg import line_chart, plots_from_csv, read_csv_columns

EXIT_OK, EXIT_CHECK_FAILED, EXIT_CONFIG, EXIT_ABORT = 0, 1, 2, 3
OUTPUT_ENV = "EHRENFEST_OUTPUT_DIR"

log = logging.getLogger("ehrenfest")


def _output_dir(cfg: ScenarioConfig) -> Path:
    path = Path(os.environ.get(OUTPUT_ENV) or cfg.output.directory)
    path.mkdir(parents=True, exist_ok=True)
    return path


def _cmd_run(cfg: ScenarioConfig) -> int:
    out = _output_dir(cfg)
    try:
        result = run_scenario(cfg)
    except SimulationAbort as exc:
        print(f"run aborted: {exc}", file=sys.stderr)
        if exc.record is not None and exc.record.times and "obs" in exc.record.monitors:
            from .scenarios import RunResult, observable_labels

            partial = RunResult(exc.record, observable_labels(
                cfg.z0.size // 2, grid=cfg.model.startswith("wigner")))
            path = write_observables(partial, out / f"partial_{cfg.output.trajectory}")
            print(f"partial trajectory written to {path}", file=sys.stderr)
        return EXIT_ABORT
    csv_path = write_observables(result, out / cfg.output.trajectory)
    print(f"trajectory: {csv_path} ({len(result.record.times)} rows)")
    if result.template is not None:
        snaps = write_snapshots(result, cfg, out)
        print(f"grid snapshots: {len(snaps)} files in {out}")
    if cfg.output.svg:
        for p in plots_from_csv(csv_path, out):
            print(f"plot: {p}")
    return EXIT_OK


def _cmd_compare(cfg: ScenarioConfig) -> int:
    out = _output_dir(cfg)
    try:
        res = compare_closures(cfg)
    except SimulationAbort as exc:
        print(f"comparison aborted: {exc}", file=sys.stderr)
        return EXIT_ABORT
    report = res["report"]
    paths = {}
    for name, run in res["runs"].items():
        paths[name] = write_observables(run, out / f"closure_{name}.csv")
    dump_json(report, out / "closure_comparison.json")
    if cfg.output.svg:
        cols = {k: read_csv_columns(p) for k, p in paths.items()}
        series = {}
        for k, c in cols.items():
            E = c["energy"]
            series[k] = (E - E[0]) / abs(E[0]) if E[0] else E - E[0]
        # runs may take different steps; plot each against its own times
        for k, c in cols.items():
            (out / f"closure_{k}_energy.svg").write_text(
                line_chart(c["t"], {k: series[k]}, f"Energy drift ({k})", "t", "(E - E0) / |E0|"))
    for name in ("conservative", "nonconservative"):
        print(f"{name:>16s}: max relative energy drift "
              f"{report[name]['max_relative_energy_drift']:.3e}")
    print(f"drift ratio (nonconservative / conservative): {report['drift_ratio']:.3e}")
    if report["max_state_difference"] is not None:
        print(f"max state difference: {report['max_state_difference']:.3e}")
    return EXIT_OK


def _cmd_cross(cfg: ScenarioConfig) -> int:
    out = _output_dir(cfg)
    try:
        res = cross_validate(cfg)
    except SimulationAbort as exc:
        print(f"cross-validation aborted: {exc}", file=sys.stderr)
        return EXIT_ABORT
    report = res["report"]
    write_observables(res["grid"], out / "cross_validation_grid.csv")
    dump_json(report, out / "cross_validation.json")
    print(f"max mean deviation:       {report['max_mean_deviation']:.3e}")
    print(f"max covariance deviation: {report['max_covariance_deviation']:.3e}")
    if report["quadratic"]:
        verdict = "PASS" if report["passed"] else "FAIL"
        print(f"quadratic exactness (< {report['tolerance']:g}): {verdict}")
        return EXIT_OK if report["passed"] else EXIT_CHECK_FAILED
    print("non-quadratic potential: deviation reported as closure error")
    return EXIT_OK


def _cmd_verify(samples: int, seed: int) -> int:
    ok = True
    limits = {"analytic": 1e-10, "finite_difference": 1e-6}
    for bracket in ("canonical", "moment", "covariance"):
        for method, limit in limits.items():
            rep = bracket_axiom_suite(bracket, samples=samples, seed=seed, method=method)
            passed = rep.max_defect() < limit
            ok &= passed
            print(f"{'PASS' if passed else 'FAIL'} {rep}  (limit {limit:g})")
    return EXIT_OK if ok else EXIT_CHECK_FAILED


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ehrenfest", description=__doc__.split("\n\n")[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_ in (("run", "run a configured scenario"),
                        ("compare-closures", "conservative vs non-conservative fourth-order closure"),
                        ("cross-validate", "grid Wigner evolution vs Gaussian moment model")):
        p = sub.add_parser(name, help=help_)
        p.add_argument("config", help="JSON configuration file")
    p = sub.add_parser("verify-brackets", help="antisymmetry, Leibniz and Jacobi checks")
    p.add_argument("--samples", type=int, default=50)
    p.add_argument("--seed", type=int, default=0)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    if args.command == "verify-brackets":
        if args.samples < 1:
            print("--samples must be positive", file=sys.stderr)
            return EXIT_CONFIG
        return _cmd_verify(args.samples, args.seed)
    try:
        cfg = load_config(args.config)
    except ConfigError as exc:
        print(str(exc), file=sys.stderr)
        return EXIT_CONFIG
    handler = {"run": _cmd_run, "compare-closures": _cmd_compare,
               "cross-validate": _cmd_cross}[args.command]
    try:
        return handler(cfg)
    except ValueError as exc:
        print(f"invalid configuration: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
