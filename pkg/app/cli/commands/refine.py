import argparse

from app.cli.common import add_common_arguments, add_solver_arguments, load_normalized, run_config
from app.services.solver import refine_tags
from app.utils.matrix_io import save_matrix


def cmd_refine_tags(args: argparse.Namespace) -> int:
    """Tag refinement: the manifest's initial_attributes are the noisy tags."""
    cfg = run_config(args)
    data, _ = load_normalized(cfg.manifest)
    Y = refine_tags(data, cfg.solver_params())
    print(save_matrix(cfg.output_dir / "Y_refined.txt", Y))
    return 0


def register(subparsers) -> None:
    parser = subparsers.add_parser("refine-tags", help="Denoise and propagate noisy image tags")
    add_common_arguments(parser)
    add_solver_arguments(parser)
    parser.set_defaults(func=cmd_refine_tags)
