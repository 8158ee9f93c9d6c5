"""Command-line entry point: ``mul <stage> --config <path> [--seed N] [--out DIR]``."""

from __future__ import annotations

import argparse
import logging
import sys

from .config import ConfigError, load_config
from .corpus import CorpusError
from .persist import ModelFormatError
from .pipeline import PIPELINE, STAGES, MissingInputError, run_all, run_stage

EXIT_OK, EXIT_VALIDATION, EXIT_RUNTIME = 0, 1, 2


class _Parser(argparse.ArgumentParser):
    # usage errors are validation failures, not argparse's default status 2
    def error(self, message: str):
        self.print_usage(sys.stderr)
        self.exit(EXIT_VALIDATION, f"mul: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="mul", description="Universal-symbol pipeline on a synthetic corpus.")
    ap.add_argument("stage", choices=STAGES + ("all",),
                    help="stage to run; 'all' runs " + " -> ".join(PIPELINE) + " -> ablate")
    ap.add_argument("--config", default=None, help="flat key = value config file (defaults when omitted)")
    ap.add_argument("--seed", type=int, default=None, help="master seed; overrides the config and MUL_SEED")
    ap.add_argument("--out", default="out", help="run directory (default: out)")
    ap.add_argument("-v", "--verbose", action="store_true")
    return ap


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_config(args.config, args.seed)
    except ConfigError as exc:
        print(f"mul: invalid config: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    try:
        results = run_all(cfg, args.out) if args.stage == "all" else [run_stage(cfg, args.stage, args.out)]
    except (MissingInputError, ModelFormatError, CorpusError) as exc:
        print(f"mul: {args.stage}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    except (ValueError, OSError) as exc:
        print(f"mul: {args.stage} failed: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    for res in results:
        print(f"{res.stage}: report in {res.report_dir}")
        for k, v in res.summary.items():
            print(f"  {k} = {v:.4f}" if isinstance(v, float) else f"  {k} = {v}")
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
