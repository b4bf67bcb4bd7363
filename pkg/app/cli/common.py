import argparse
import json
import logging
from pathlib import Path
from typing import Any, Dict, Optional, Tuple

from pydantic import BaseModel

from app.services.dataio import Dataset, TestSet, load_dataset, normalize, normalize_features
from app.utils import config
from app.utils.matrix_io import atomic_write_text
from app.utils.models import RunConfig, build_run_config

logger = logging.getLogger(__name__)

SOLVER_FLAGS = ("lambda1", "lambda2", "lambda3", "lambda4", "k_g", "sigma", "m", "dense", "eig_method",
                "max_iters", "rel_tol", "lasso_tol", "lasso_max_sweeps", "workers", "variant", "verbose")


def add_common_arguments(parser: argparse.ArgumentParser, manifest: bool = True) -> None:
    if manifest:
        parser.add_argument("--manifest", type=Path, required=True, help="Dataset manifest (key=value file)")
    parser.add_argument("--output-dir", type=Path, default=Path(config.OUTPUT_DIR))
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--workers", type=int, default=config.WORKERS, help="Cap on worker threads")


def add_solver_arguments(parser: argparse.ArgumentParser) -> None:
    g = parser.add_argument_group("solver parameters")
    g.add_argument("--lambda1", type=float)
    g.add_argument("--lambda2", type=float)
    g.add_argument("--lambda3", type=float)
    g.add_argument("--lambda4", type=float)
    g.add_argument("--k-g", dest="k_g", type=int)
    g.add_argument("--sigma", type=float)
    g.add_argument("--m", type=int)
    g.add_argument("--dense-graph", dest="dense", action="store_true", default=None)
    g.add_argument("--eig-method", choices=["dense", "lanczos", "auto"])
    g.add_argument("--max-iters", type=int)
    g.add_argument("--rel-tol", type=float)
    g.add_argument("--lasso-tol", type=float, help="KKT tolerance of the SAP-II coordinate descent")
    g.add_argument("--lasso-max-sweeps", type=int)
    g.add_argument("--variant", choices=["full", "sap_i_bpl", "bpl", "nn_bpl", "single_l1", "no_l1"])
    g.add_argument("--verbose", action="store_true", default=None, help="Progress bar over outer iterations")


def run_config(args: argparse.Namespace) -> RunConfig:
    overrides = {k: getattr(args, k) for k in SOLVER_FLAGS if getattr(args, k, None) is not None}
    return build_run_config(
        command=args.command,
        manifest=getattr(args, "manifest", None),
        output_dir=args.output_dir,
        overrides=overrides,
        seed=args.seed,
    )


def load_normalized(manifest: Path) -> Tuple[Dataset, Optional[TestSet]]:
    data, test = load_dataset(manifest)
    data = normalize(data)
    if test is not None:
        test = TestSet(X=normalize_features(test.X), truth=test.truth)
    logger.info("loaded %s: N_s=%d, r=%d, d=%d, k=%d", manifest, data.n_samples, data.r, data.d, data.k)
    return data, test


def write_json(path: Path, payload: BaseModel | Dict[str, Any]) -> Path:
    text = payload.model_dump_json(indent=2) if isinstance(payload, BaseModel) else json.dumps(payload, indent=2)
    return atomic_write_text(path, text + "\n")
