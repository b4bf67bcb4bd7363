import argparse
import logging
from pathlib import Path

import numpy as np

from app.cli.common import add_common_arguments, load_normalized, run_config, write_json
from app.services.dataio import split_generalized
from app.services.zsleval import evaluate_generalized, evaluate_standard, predict
from app.utils.errors import DataError
from app.utils.matrix_io import load_matrix

logger = logging.getLogger(__name__)

DEFAULT_HOLDOUT_FRACTION = 0.2


def _weights(args: argparse.Namespace, output_dir: Path) -> np.ndarray:
    return load_matrix(args.weights or output_dir / "W.txt")


def cmd_eval(args: argparse.Namespace) -> int:
    cfg = run_config(args)
    data, test = load_normalized(cfg.manifest)
    if test is None:
        raise DataError(f"{cfg.manifest}: eval needs test_features and test_labels")
    if data.Z_u is None:
        raise DataError(f"{cfg.manifest}: eval needs prototypes_unseen")

    labels = predict(_weights(args, cfg.output_dir), test.X, data.Z_u)
    report = evaluate_standard(labels, test.truth, data.q)
    write_json(cfg.output_dir / "metrics_eval.json", report)
    print(report.model_dump_json(indent=2))
    return 0


def cmd_gzsl_eval(args: argparse.Namespace) -> int:
    cfg = run_config(args)
    data, test = load_normalized(cfg.manifest)
    if test is None or data.Z_u is None:
        raise DataError(f"{cfg.manifest}: gzsl-eval needs test_features, test_labels and prototypes_unseen")

    _, joint = split_generalized(data, args.holdout_fraction, cfg.seed, unseen=test)
    Z_joint = np.hstack([data.Z_s, data.Z_u])
    report = evaluate_generalized(_weights(args, cfg.output_dir), joint.X, joint.truth, Z_joint, range(data.p))
    write_json(cfg.output_dir / "metrics_gzsl.json", report)
    print(report.model_dump_json(indent=2))
    return 0


def register(subparsers) -> None:
    parser = subparsers.add_parser("eval", help="Standard zero-shot evaluation on the unseen test set")
    add_common_arguments(parser)
    parser.add_argument("--weights", type=Path, help="W matrix file (default: <output-dir>/W.txt)")
    parser.set_defaults(func=cmd_eval)

    parser = subparsers.add_parser("gzsl-eval", help="Generalized evaluation over seen + unseen classes")
    add_common_arguments(parser)
    parser.add_argument("--weights", type=Path, help="W matrix file (default: <output-dir>/W.txt)")
    parser.add_argument("--holdout-fraction", type=float, default=DEFAULT_HOLDOUT_FRACTION)
    parser.set_defaults(func=cmd_gzsl_eval)
