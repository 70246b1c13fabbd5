"""Command-line entry point.

Exit status: 0 on success, 1 when some project or fit failed but outputs were
written, 2 when a stage could not run at all.
"""

from __future__ import annotations

import argparse
import logging
import sys
from typing import Optional, Sequence

from . import __version__
from .config import ConfigError, RunConfig, load_config
from .pipeline import STAGES, PipelineError, StageReport, run_pipeline, run_stage

logger = logging.getLogger("sustainq.cli")

_HELP = {
    "ingest": "assemble per-project datasets from the corpus exports",
    "metrics": "compute the sustainability metrics (metrics.csv)",
    "quality": "compute the code-quality metrics (quality.csv)",
    "analyze": "fit every model and write results.csv",
    "report": "render the impact matrix, plot data and figures",
    "run": "run all stages in order",
}


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--corpus", metavar="DIR", help="corpus root with one directory per project")
    p.add_argument("--out", metavar="DIR", help="output directory for stage artifacts")
    p.add_argument("--config", metavar="FILE", help="JSON file of configuration keys")
    p.add_argument("--seed", metavar="N", type=int, help="base random seed")
    p.add_argument("--jobs", metavar="N", type=int, help="worker processes")
    p.add_argument("-v", "--verbose", action="store_true")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="sustainq", description="Sustainability versus code-quality analysis.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in STAGES + ("run",):
        p = sub.add_parser(name, help=_HELP[name])
        _common(p)
        if name == "run":
            p.add_argument("--resume", action="store_true", help="skip stages whose outputs already exist")
    return parser


def resolve_config(args: argparse.Namespace) -> RunConfig:
    base = load_config(args.config) if args.config else RunConfig()
    return base.with_overrides(corpus=args.corpus, out=args.out, seed=args.seed, jobs=args.jobs)


def _summarize(report: StageReport) -> None:
    if report.skipped:
        logger.info("%s: skipped (outputs present)", report.stage)
        return
    logger.info("%s: %d ok, %d failed", report.stage, report.n_ok, len(report.failures))
    for key, msg in sorted(report.failures.items()):
        logger.warning("%s: %s failed: %s", report.stage, key, msg)


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    logger.setLevel(logging.INFO)
    try:
        config = resolve_config(args)
        if args.command == "run":
            reports = run_pipeline(config, resume=args.resume).stages
        else:
            reports = [run_stage(args.command, config)]
    except (ConfigError, PipelineError) as exc:
        print(f"sustainq: error: {exc}", file=sys.stderr)
        return 2
    for report in reports:
        _summarize(report)
    return 1 if any(r.failures for r in reports) else 0


if __name__ == "__main__":
    sys.exit(main())
