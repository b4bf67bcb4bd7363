import argparse
import logging

import numpy as np
import pandas as pd

from app.cli.common import add_common_arguments, add_solver_arguments, load_normalized, run_config, write_json
from app.services.dataio import split_generalized
from app.services.matcore import w_norm_bound
from app.services.solver import train
from app.utils.errors import NonConvergenceError
from app.utils.matrix_io import atomic_write_text, save_matrix
from app.utils.models import TrainMetrics

logger = logging.getLogger(__name__)


def cmd_train(args: argparse.Namespace) -> int:
    cfg = run_config(args)
    params = cfg.solver_params()
    data, _ = load_normalized(cfg.manifest)
    if args.holdout_fraction is not None:
        data, held = split_generalized(data, args.holdout_fraction, cfg.seed)
        logger.info("held out %d seen images for generalized evaluation", held.n)

    W, state = train(data, params)

    out = cfg.output_dir
    save_matrix(out / "W.txt", W)
    save_matrix(out / "Y_star.txt", state.Y)
    trace = pd.DataFrame({"iteration": range(len(state.objective_trace)), "objective": state.objective_trace})
    atomic_write_text(out / "trace.csv", trace.to_csv(index=False))
    steps = pd.DataFrame(state.step_trace, columns=["iteration", "step", "objective"])
    atomic_write_text(out / "steps.csv", steps.to_csv(index=False))

    metrics = TrainMetrics(
        iterations=state.iterations,
        converged=state.converged,
        final_objective=state.objective_trace[-1] if state.objective_trace else float("nan"),
        objective_trace=state.objective_trace,
        w_frobenius=float(np.linalg.norm(W)),
        w_norm_bound=w_norm_bound(state.Y, data.X, params.lambda4),
        n_samples=data.n_samples,
        n_annotated=data.r,
        variant=params.variant,
        descent_violations=state.descent_violations,
    )
    write_json(out / "metrics.json", metrics)
    print(metrics.model_dump_json(indent=2))

    if not state.converged:
        raise NonConvergenceError(f"sparse denoising did not converge; best iterate written to {out}")
    return 0


def register(subparsers) -> None:
    parser = subparsers.add_parser("train", help="Fit W (and Y*) on a manifest dataset")
    add_common_arguments(parser)
    add_solver_arguments(parser)
    parser.add_argument(
        "--holdout-fraction",
        type=float,
        default=None,
        help="Hold out this fraction of each seen class before training (pair with gzsl-eval)",
    )
    parser.set_defaults(func=cmd_train)
