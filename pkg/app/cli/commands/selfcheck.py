import argparse

import pandas as pd

from app.cli.common import add_common_arguments, run_config, write_json
from app.services.selfcheck import run_selfcheck
from app.utils.errors import CheckFailure


def cmd_selfcheck(args: argparse.Namespace) -> int:
    cfg = run_config(args)
    report = run_selfcheck(seed=cfg.seed, lambda4=args.inject_lambda4, inject_nonmonotone=args.inject_nonmonotone)

    table = pd.DataFrame(
        [{"status": "PASS" if c.passed else "FAIL", "check": c.name, "detail": c.detail} for c in report.checks]
    )
    print(table.to_string(index=False))
    write_json(cfg.output_dir / "selfcheck.json", {"passed": report.passed, **report.model_dump()})
    print(f"selfcheck: {'PASS' if report.passed else 'FAIL'}")
    if not report.passed:
        failed = [c.name for c in report.checks if not c.passed]
        raise CheckFailure(f"{len(failed)} check(s) failed: {', '.join(failed)}")
    return 0


def register(subparsers) -> None:
    parser = subparsers.add_parser("selfcheck", help="Run the seeded invariant suite")
    add_common_arguments(parser, manifest=False)
    parser.add_argument("--inject-lambda4", type=float, default=0.01, help="lambda4 used by the checks")
    parser.add_argument("--inject-nonmonotone", action="store_true", help=argparse.SUPPRESS)
    parser.set_defaults(func=cmd_selfcheck)
