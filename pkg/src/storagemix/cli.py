"""Command-line entry point: one subcommand per stage plus the full pipeline.

Exit codes: 0 success, 1 error, 2 validation gap above threshold.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path

from . import __version__
from .pipeline import (
    DEFAULT_GAP_THRESHOLD,
    MANIFEST,
    STAGES,
    RunManifest,
    Run,
    Seeds,
    Settings,
    StageError,
    ValidationReport,
    compare_runs,
    settings_from_dict,
    run_pipeline,
    verify,
)

EXIT_OK, EXIT_ERROR, EXIT_BREACH = 0, 1, 2
SEED_NAMES = ("design", "profiles", "hpo", "ga", "shap")


def _add_run_args(p: argparse.ArgumentParser, stage: str | None = None) -> None:
    p.add_argument("--scenario", help="scenario file or bundled name (woest, west); "
                                      "defaults to the copy stored in the run directory")
    p.add_argument("--out", required=True, type=Path, help="run directory")
    for name in SEED_NAMES:
        p.add_argument(f"--seed-{name}", type=int, default=None)
    p.add_argument("--jobs", type=int, default=None, help="worker processes for simulation")
    p.add_argument("--ledger", type=Path, default=None, help="decisions file copied into the run directory")
    if stage in (None, "tune"):
        p.add_argument("--trials", type=int, default=None, help="TPE trials per (output, family)")
    if stage in (None, "optimize"):
        p.add_argument("--generations", type=int, default=None)
        p.add_argument("--population", type=int, default=None)
        p.add_argument("--mode", choices=("pareto", "weighted"), default=None)
    if stage in (None, "validate", "refine"):
        p.add_argument("--gap-threshold", type=float, default=DEFAULT_GAP_THRESHOLD,
                       help="max allowed validation gap in percent (default %(default)s)")
    if stage in (None, "refine"):
        p.add_argument("--refine-rounds", type=int, default=None,
                       help="max infill rounds when a validation gap exceeds the threshold (0 disables)")
        p.add_argument("--infill-points", type=int, default=None,
                       help="simulated front members added to the training rows per infill round")
    if stage in (None, "explain"):
        p.add_argument("--background", type=int, default=None, help="background rows for Shapley values")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="storagemix", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-q", "--quiet", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    for stage in ("design", "simulate", "tune", "fit", "optimize", "validate", "refine", "explain"):
        _add_run_args(sub.add_parser(stage, help=f"run the {stage} stage"), stage)

    p = sub.add_parser("pipeline", help="run every stage for one or more scenarios")
    _add_run_args(p)
    p.set_defaults(scenarios=None)

    p = sub.add_parser("report", help="compare two completed runs")
    p.add_argument("base", type=Path, help="run directory without storage")
    p.add_argument("alt", type=Path, help="run directory with storage")
    p.add_argument("--out", required=True, type=Path)

    p = sub.add_parser("verify", help="re-hash a run directory against its manifest")
    p.add_argument("run_dir", type=Path)
    return parser


def _seeds(args, stored: Seeds) -> Seeds:
    given = {n: getattr(args, f"seed_{n}") for n in SEED_NAMES if getattr(args, f"seed_{n}") is not None}
    return replace(stored, **given)


def _settings(args, stored: Settings) -> Settings:
    given = {}
    for key in ("trials", "generations", "population", "mode", "background", "refine_rounds", "infill_points", "jobs"):
        v = getattr(args, key, None)
        if v is not None:
            given[key] = v
    return replace(stored, **given)


def _open_run(args) -> Run:
    out: Path = args.out
    if (out / MANIFEST).exists():
        man = RunManifest.load(out)
        seeds, settings = Seeds(**man.seeds), settings_from_dict(man.settings)
    else:
        seeds, settings = Seeds(), Settings()
    return Run.open(out, args.scenario, _seeds(args, seeds), _settings(args, settings), ledger=args.ledger)


def _print_validation(rep) -> None:
    for r in rep.rows:
        print(f"{r['output']:<20} predicted {r['predicted']:>14.6g}  simulated {r['simulated']:>14.6g}  "
              f"gap {r['gap_pct']:6.2f}%")


def _scenario_dirs(args) -> list[tuple[str, Path]]:
    scenarios = args.scenario.split(",") if args.scenario else []
    if len(scenarios) <= 1:
        return [(scenarios[0] if scenarios else None, args.out)]
    return [(s, args.out / Path(s).stem.lower()) for s in scenarios]


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING if args.quiet else logging.INFO, format="%(message)s")
    try:
        return _dispatch(args)
    except StageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR
    except (OSError, ValueError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR


def _dispatch(args) -> int:
    if args.command == "verify":
        problems = verify(args.run_dir)
        for p in problems:
            print(p)
        if not problems:
            print(f"{args.run_dir}: all hashes match")
        return EXIT_ERROR if problems else EXIT_OK

    if args.command == "report":
        table = compare_runs(args.base, args.alt, args.out)
        print(table.to_string(index=False))
        return EXIT_OK

    if args.command == "pipeline":
        code = EXIT_OK
        dirs = _scenario_dirs(args)
        for scenario, out in dirs:
            args.scenario, args.out = scenario, out
            run = _open_run(args)
            _, rep = run_pipeline(scenario, out, run.seeds, run.settings, args.gap_threshold)
            first = ValidationReport(**json.loads((out / "validation.json").read_text()))
            print(f"[{run.cfg.name}] validation, first pass")
            _print_validation(first)
            if rep.rows != first.rows:
                print(f"[{run.cfg.name}] validation after refinement")
                _print_validation(rep)
            if not rep.passed:
                code = EXIT_BREACH
        if len(dirs) == 2:
            table = compare_runs(dirs[0][1], dirs[1][1], dirs[0][1].parent)
            print(table.to_string(index=False))
        return code

    run = _open_run(args)
    if args.command in ("validate", "refine"):
        rep = run.stage(args.command, STAGES[args.command], args.gap_threshold)
        _print_validation(rep)
        return EXIT_OK if rep.passed else EXIT_BREACH
    result = run.stage(args.command, STAGES[args.command])
    if args.command == "fit":
        print(result.to_string(index=False))
    if args.command == "design":
        print(f"{len(result)} runs written to {run.path('design.csv')}")
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
