import argparse
import asyncio
import json

from app.cli.common import add_common_arguments, run_config
from app.pipeline.pipeline import main as run_suite
from app.utils import config


def cmd_experiment(args: argparse.Namespace) -> int:
    cfg = run_config(args)
    seeds = config.parse_int_list(args.seeds) if args.seeds else config.EXPERIMENT_SEEDS
    summary = asyncio.run(
        run_suite(suite=args.suite, seeds=seeds, output_dir=str(cfg.output_dir / "experiments"), concurrency=args.workers)
    )
    print(json.dumps(summary, indent=2))
    return 0


def register(subparsers) -> None:
    parser = subparsers.add_parser("experiment", help="Run a synthetic experiment suite")
    add_common_arguments(parser, manifest=False)
    parser.add_argument("--suite", choices=["ablation", "trend", "propagation", "scaling"], default="ablation")
    parser.add_argument("--seeds", help='Seed list, e.g. "1,2,3" (default: SAP_EXPERIMENT_SEEDS)')
    parser.set_defaults(func=cmd_experiment)
