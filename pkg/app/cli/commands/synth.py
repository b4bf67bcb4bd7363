import argparse

from pydantic import ValidationError

from app.cli.common import add_common_arguments, run_config
from app.services.dataio import make_synthetic, write_dataset
from app.utils.errors import ConfigError
from app.utils.matrix_io import save_matrix
from app.utils.models import SyntheticSpec


def cmd_synth(args: argparse.Namespace) -> int:
    cfg = run_config(args)
    try:
        spec = SyntheticSpec(
            d=args.d,
            k=args.k,
            p=args.p,
            q=args.q,
            images_per_class=args.images_per_class,
            K_annotated=args.k_annotated,
            noise_std=args.noise_std,
            seed=cfg.seed,
            pool_size=args.pool_size,
        )
    except ValidationError as e:
        raise ConfigError(f"invalid synthetic spec: {e}") from e

    data, test, W_true = make_synthetic(spec)
    manifest = write_dataset(cfg.output_dir, data, test)
    save_matrix(cfg.output_dir / "W_true.txt", W_true)
    print(manifest)
    return 0


def register(subparsers) -> None:
    parser = subparsers.add_parser("synth", help="Write a seeded synthetic dataset and its manifest")
    add_common_arguments(parser, manifest=False)
    defaults = SyntheticSpec()
    parser.add_argument("--d", type=int, default=defaults.d, help="Feature dimension")
    parser.add_argument("--k", type=int, default=defaults.k, help="Attribute dimension")
    parser.add_argument("--p", type=int, default=defaults.p, help="Seen classes")
    parser.add_argument("--q", type=int, default=defaults.q, help="Unseen classes")
    parser.add_argument("--images-per-class", type=int, default=defaults.images_per_class)
    parser.add_argument("--k-annotated", type=int, default=defaults.K_annotated, help="Annotated images per seen class")
    parser.add_argument("--noise-std", type=float, default=defaults.noise_std)
    parser.add_argument("--pool-size", type=int, default=defaults.pool_size)
    parser.set_defaults(func=cmd_synth)
