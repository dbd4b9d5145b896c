import argparse
import logging
import sys

from cli.handler import Handler
from softsensor.Models import MODEL_KINDS
from softsensor.config import Config
from softsensor.exceptions import ConfigError


class CliParser(argparse.ArgumentParser):
    """Argument parser that raises instead of printing usage and exiting."""

    def error(self, message):
        raise ConfigError(f"{self.prog}: {message}")


def main(argv=None) -> int:
    """
    Entry point of the ``softsensor`` command line.

    Configures logging from ``Config().log_level``, parses the subcommand and
    hands it to :class:`Handler`.

    Args:
        argv: Arguments without the program name; ``sys.argv[1:]`` when None

    Returns:
        int: 0 on success, 2 for configuration errors and missing files,
        1 for runtime failures

    Usage:
        ```bash
        python -m cli.main train --config configs/synthetic.ini --seed 1 --out runs/synthetic
        python -m cli.main evaluate --checkpoint runs/synthetic/checkpoint.npz --split test
        python -m cli.main sweep --config configs/debutanizer.ini --kinds ssvaer,svaer,fcnn
        ```
    """
    try:
        config = Config()
    except ValueError as e:
        logging.basicConfig(format='%(asctime)s - %(name)s - %(levelname)s - %(message)s')
        return Handler.error_handler(ConfigError(str(e)), 2)

    logging.basicConfig(
        format='%(asctime)s - %(name)s - %(levelname)s - %(message)s',
        level=config.log_level
    )

    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except ConfigError as e:
        return Handler.error_handler(e, 2)
    return Handler().handle(args)


def build_parser() -> argparse.ArgumentParser:
    """Create the parser with every subcommand registered."""
    parser = CliParser(prog="softsensor", description="Semi-supervised VAE regression soft sensor")
    subparsers = parser.add_subparsers(dest="command", required=True, parser_class=CliParser)
    register_train_command(subparsers)
    register_evaluate_command(subparsers)
    register_sweep_command(subparsers)
    register_predict_command(subparsers)
    register_export_latent_command(subparsers)
    register_inspect_data_command(subparsers)
    return parser


def register_overrides(parser):
    """Flags that replace values of the experiment config file."""
    parser.add_argument("--config", required=True, help="INI experiment config")
    parser.add_argument("--seed", type=int, help="Random seed")
    parser.add_argument("--fraction", type=float, help="Label fraction in (0, 1]")
    parser.add_argument("--epochs", type=int, help="Number of training epochs")
    parser.add_argument("--model", choices=MODEL_KINDS, help="Model kind")
    parser.add_argument("--out", help="Output directory for artifacts")


def register_checkpoint_arguments(parser):
    parser.add_argument("--checkpoint", required=True, help="Checkpoint written by train")
    parser.add_argument("--split", choices=("train", "validation", "test"), default="test")


def register_train_command(subparsers):
    parser = subparsers.add_parser("train", help="Train one model and keep the best validation checkpoint")
    register_overrides(parser)


def register_evaluate_command(subparsers):
    parser = subparsers.add_parser("evaluate", help="RMSE of a checkpoint on a split")
    register_checkpoint_arguments(parser)
    parser.add_argument("--batch-size", type=int, default=None, help="Rows per evaluation chunk")


def register_sweep_command(subparsers):
    parser = subparsers.add_parser("sweep", help="Test RMSE over label fractions, model kinds and seeds")
    register_overrides(parser)
    parser.add_argument("--fractions", help="Comma-separated label fractions (default: the ten benchmark fractions)")
    parser.add_argument("--seeds", help="Comma-separated seeds")
    parser.add_argument("--kinds", help="Comma-separated model kinds")


def register_predict_command(subparsers):
    parser = subparsers.add_parser("predict", help="Write the confidence-interval trace of a split")
    register_checkpoint_arguments(parser)
    parser.add_argument("--level", type=float, default=0.95, help="Confidence level in (0, 1)")
    parser.add_argument("--out", help="Output directory (default: the checkpoint's directory)")


def register_export_latent_command(subparsers):
    parser = subparsers.add_parser("export-latent", help="Write latent means and predictive spread of a split")
    register_checkpoint_arguments(parser)
    parser.add_argument("--out", help="Output directory (default: the checkpoint's directory)")


def register_inspect_data_command(subparsers):
    parser = subparsers.add_parser("inspect-data", help="Summarize the dataset of a config")
    parser.add_argument("--config", required=True, help="INI experiment config")
    parser.add_argument("--out", help="Directory for data_summary.csv")


if __name__ == '__main__':
    sys.exit(main())
