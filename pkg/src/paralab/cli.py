"""Command-line entry point.

    paralab run <config.json> [--suite NAME] [--seed K] [--out DIR]
    paralab refine <config.json> --axis {N|q|trunc} --steps S [--out DIR]
    paralab report <dir>

Exit codes: 0 all checks passed, 1 some check failed, 2 configuration or
infrastructure error.  The PARALAB_THREADS environment variable requests a
worker count for outer loops; numerical reductions stay pinned for
reproducibility.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .harness import (ConfigError, emit_plot_data, load_config,
                      refinement_study, run_suite, write_refinement_csv)
from .plots import render_report


def _cmd_run(args) -> int:
    config = load_config(args.config)
    if args.suite:
        config["suite"] = args.suite
    if args.seed is not None:
        config["seed"] = args.seed
    outdir = Path(args.out or config.get("output", {}).get("dir", "out"))
    report = run_suite(config)
    report.write(outdir)
    emit_plot_data(report, outdir)
    for r in report.records:
        status = "PASS" if r.passed else "FAIL"
        print(f"[{status}] {r.name}: value={r.value} {r.cmp} {r.threshold} "
              f"({r.anchor})")
    print(f"report written to {outdir}")
    return report.exit_status


def _cmd_refine(args) -> int:
    config = load_config(args.config)
    rows = refinement_study(config, args.axis, args.steps)
    outdir = Path(args.out or config.get("output", {}).get("dir", "out"))
    path = write_refinement_csv(rows, outdir)
    print(f"refinement table written to {path}")
    return 0


def _cmd_report(args) -> int:
    report_dir = Path(args.dir)
    if not (report_dir / "report.jsonl").exists():
        print(f"no report.jsonl under {report_dir}", file=sys.stderr)
        return 2
    written = render_report(report_dir)
    print(json.dumps({"figures": written}, indent=2))
    return 0


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="paralab",
                                     description="verification suite runner")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run a verification suite")
    p_run.add_argument("config")
    p_run.add_argument("--suite")
    p_run.add_argument("--seed", type=int)
    p_run.add_argument("--out")
    p_run.set_defaults(fn=_cmd_run)

    p_ref = sub.add_parser("refine", help="refinement study along one axis")
    p_ref.add_argument("config")
    p_ref.add_argument("--axis", required=True, choices=["N", "q", "trunc"])
    p_ref.add_argument("--steps", required=True, type=int)
    p_ref.add_argument("--out")
    p_ref.set_defaults(fn=_cmd_refine)

    p_rep = sub.add_parser("report", help="render figures for a report dir")
    p_rep.add_argument("dir")
    p_rep.set_defaults(fn=_cmd_report)

    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except (ConfigError, FileNotFoundError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
