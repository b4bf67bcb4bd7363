import argparse
import logging
import sys
from typing import List, Optional

from app.cli.commands import evaluate, experiment, refine, selfcheck, synth, train
from app.utils.config import configure_logging
from app.utils.errors import SapError

logger = logging.getLogger(__name__)

COMMANDS = (train, evaluate, synth, refine, selfcheck, experiment)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="sap-bpl", description="Inductive zero-shot learning with SAP+BPL")
    parser.add_argument("--log-level", default=None, help="Overrides SAP_LOG_LEVEL")
    subparsers = parser.add_subparsers(dest="command", required=True)
    for module in COMMANDS:
        module.register(subparsers)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    configure_logging(args.log_level)
    try:
        return args.func(args)
    except SapError as e:
        logger.error("%s failed: %s", args.command, e)
        return e.exit_code


if __name__ == "__main__":
    sys.exit(main())
