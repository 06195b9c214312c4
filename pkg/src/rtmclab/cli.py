"""Batch front-end: validate configs, run experiments, emit JSON + CSV artifacts.

Exit codes: 0 all invariants passed, 1 an invariant or bound failed,
2 the config did not validate.  Outputs are a pure function of (config, seed);
every table carries the config hash and seed in a comment header.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

from .config import load_config, validate_config
from .errors import ConfigError, ConvergenceError, InvariantViolation
from .experiments import EXPERIMENTS, RUNNERS


def _write_csv(path: Path, header_note: str, columns, rows) -> None:
    lines = [header_note, ",".join(columns)]
    for row in rows:
        lines.append(",".join(repr(x) if isinstance(x, float) else str(x) for x in row))
    path.write_text("\n".join(lines) + "\n")


def _json_default(obj):
    if hasattr(obj, "tolist"):
        return obj.tolist()
    if isinstance(obj, (set, frozenset, tuple)):
        return sorted(obj) if isinstance(obj, (set, frozenset)) else list(obj)
    return str(obj)


def _run_one(args_tuple):
    config_path, experiment, seed, out_dir, overrides = args_tuple
    cfg = load_config(config_path)
    if overrides.get("depth") is not None:
        cfg.depths["working"] = overrides["depth"]
    if overrides.get("horizon") is not None:
        cfg.horizons["solve"] = overrides["horizon"]
    names = EXPERIMENTS if experiment == "all" else (experiment,)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    note = f"# config={cfg.config_hash} seed={seed}"
    summary = {"config": cfg.config_hash, "name": cfg.name, "seed": seed}
    failed = False
    for name in names:
        try:
            report, tables = RUNNERS[name](cfg, seed)
        except (InvariantViolation, ConvergenceError) as exc:
            summary[name] = {"passed": False, "error": str(exc)}
            failed = True
            continue
        except ConfigError as exc:
            # the experiment's preconditions do not apply to this instance
            summary[name] = {"skipped": str(exc)}
            continue
        summary[name] = report
        failed = failed or not report.get("passed", True)
        for fname, text in tables.pop("_files", {}).items():
            (out / f"{fname}_seed{seed}.json").write_text(text + "\n")
        for table_name, (columns, rows) in tables.items():
            _write_csv(out / f"{table_name}_seed{seed}.csv", note, columns, rows)
    (out / f"report_seed{seed}.json").write_text(
        json.dumps(summary, sort_keys=True, indent=2, default=_json_default) + "\n"
    )
    return seed, summary, failed


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="rtmclab",
        description="fibered transfer-operator laboratory: solve, certify, report",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_val = sub.add_parser("validate", help="check a config without running experiments")
    p_val.add_argument("config", nargs="?", help="config JSON path")
    p_val.add_argument("--config", dest="config_flag", help="config JSON path")

    p_run = sub.add_parser("run", help="run one experiment (or all) from a config")
    p_run.add_argument("config", nargs="?", help="config JSON path")
    p_run.add_argument("experiment", choices=EXPERIMENTS + ("all",))
    p_run.add_argument("--config", dest="config_flag", help="config JSON path")
    p_run.add_argument("--seed", type=int, default=None,
                       help="override the config seeds with a single seed")
    p_run.add_argument("--out-dir", default="out")
    p_run.add_argument("--jobs", type=int, default=1)
    p_run.add_argument("--depth", type=int, default=None,
                       help="override the working depth")
    p_run.add_argument("--horizon", type=int, default=None,
                       help="override the solver horizon")

    args = parser.parse_args(argv)
    config_path = args.config_flag or args.config
    if not config_path:
        parser.error("a config path is required (positional or --config)")

    if "RR_MAX_WINDOW" in os.environ:
        import rtmclab.driver as _driver

        _driver.DEFAULT_MAX_RADIUS = int(os.environ["RR_MAX_WINDOW"])

    try:
        cfg = load_config(config_path)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2

    if args.command == "validate":
        report = validate_config(cfg)
        print(json.dumps(report, sort_keys=True, indent=2, default=_json_default))
        return 0 if report["ok"] else 2

    report = validate_config(cfg)
    if not report["ok"]:
        for v in report["violations"]:
            print(f"config violation: {v}", file=sys.stderr)
        return 2

    seeds = [args.seed] if args.seed is not None else cfg.seeds
    overrides = {"depth": args.depth, "horizon": args.horizon}
    work = [(config_path, args.experiment, s, args.out_dir, overrides) for s in seeds]
    failed = False
    results = []
    if args.jobs > 1 and len(work) > 1:
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            results = list(pool.map(_run_one, work))
    else:
        results = [_run_one(w) for w in work]
    results.sort(key=lambda r: r[0])
    combined = {"config": cfg.config_hash, "name": cfg.name,
                "seeds": {str(seed): summary for seed, summary, _ in results}}
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "summary.json").write_text(
        json.dumps(combined, sort_keys=True, indent=2, default=_json_default) + "\n"
    )
    failed = any(f for _, _, f in results)
    return 1 if failed else 0


if __name__ == "__main__":
    sys.exit(main())
