import json
import logging
import sys
from pathlib import Path
from typing import List, Optional

from cli.config import apply_overrides, dump_experiment_config, format_experiment_config, load_experiment_config
from cli.reports.ci_report import write_ci_report
from cli.reports.data_report import format_data_report, write_data_report
from cli.reports.latent_report import write_latent_report
from cli.reports.sweep_report import write_sweep_report
from softsensor.ExperimentService import BENCHMARK_FRACTIONS, ExperimentConfig, get_experiment_service, load_checkpoint
from softsensor.config import Config
from softsensor.exceptions import ConfigError

logger = logging.getLogger(__name__)


def parse_list(text: Optional[str], cast, name: str) -> Optional[List]:
    """Split a comma-separated flag value; None stays None."""
    if text is None:
        return None
    try:
        return [cast(part) for part in text.split(",") if part.strip()]
    except ValueError as e:
        raise ConfigError(f"--{name} expects a comma-separated list, got {text!r}") from e


class Handler:
    """
    Routes parsed command-line invocations to the experiment service.

    Each subcommand has one method returning the process exit status; results
    go to stdout, logs to stderr. Failures are turned into a single error line
    by :meth:`error_handler`: configuration problems and missing files exit
    with 2, everything else with 1.

    The class implements the singleton pattern.

    Example:
        >>> handler = Handler()
        >>> handler.handle(build_parser().parse_args(["train", "--config", "configs/synthetic.ini"]))
        0
    """
    _instance = None

    def __new__(cls):
        if cls._instance is None:
            cls._instance = super().__new__(cls)
            cls._instance._initialized = False
        return cls._instance

    def __init__(self):
        if not self._initialized:
            self.config = Config()
            self.experiments = get_experiment_service()
            self._initialized = True

    @staticmethod
    def error_handler(error: BaseException, status: int) -> int:
        """
        Log an error and print it as ``error kind=<type> message=<json string>``.

        Returns:
            int: ``status``, for the caller to exit with
        """
        logger.error(f"{type(error).__name__}: {error}")
        if status == 1:
            logger.debug("Traceback of the failure", exc_info=error)
        print(f"error kind={type(error).__name__} message={json.dumps(str(error))}", file=sys.stderr)
        return status

    def handle(self, args) -> int:
        """Run the subcommand named by ``args.command`` and map failures to exit codes."""
        try:
            match args.command:
                case "train":
                    return self.train(args)
                case "evaluate":
                    return self.evaluate(args)
                case "sweep":
                    return self.sweep(args)
                case "predict":
                    return self.predict(args)
                case "export-latent":
                    return self.export_latent(args)
                case "inspect-data":
                    return self.inspect_data(args)
                case _:
                    raise ConfigError(f"unknown command '{args.command}'")
        except (ConfigError, FileNotFoundError) as e:
            return self.error_handler(e, 2)
        except Exception as e:
            return self.error_handler(e, 1)

    def _resolved_config(self, args) -> ExperimentConfig:
        config = load_experiment_config(args.config)
        config = apply_overrides(
            config,
            seed=getattr(args, "seed", None),
            fraction=getattr(args, "fraction", None),
            epochs=getattr(args, "epochs", None),
            model=getattr(args, "model", None),
            out=getattr(args, "out", None),
        )
        print(format_experiment_config(config), end="")
        return config

    def train(self, args) -> int:
        config = self._resolved_config(args)
        output_dir = Path(config.output_dir)
        dump_experiment_config(config, output_dir / "config.ini")
        result = self.experiments.train(config, output_dir=output_dir)
        print(f"test_rmse={result.test_rmse:.6f} best_epoch={result.checkpoint.epoch} output={output_dir}")
        return 0

    def evaluate(self, args) -> int:
        checkpoint = load_checkpoint(args.checkpoint)
        value = self.experiments.evaluate_rmse(checkpoint, args.split, args.batch_size)
        print(f"split={args.split} rmse={value:.6f}")
        return 0

    def sweep(self, args) -> int:
        config = self._resolved_config(args)
        fractions = parse_list(args.fractions, float, "fractions") if args.fractions else list(BENCHMARK_FRACTIONS)
        seeds = parse_list(args.seeds, int, "seeds")
        kinds = parse_list(args.kinds, str.strip, "kinds")
        output_dir = Path(config.output_dir)
        dump_experiment_config(config, output_dir / "config.ini")
        result = self.experiments.sweep(config, fractions, kinds=kinds, seeds=seeds, output_dir=output_dir)
        paths = write_sweep_report(result, output_dir)
        print(result.table.to_string(float_format=lambda v: f"{v:.4f}"))
        print(f"table={paths['table']} points={paths['points']}")
        return 0

    def predict(self, args) -> int:
        checkpoint = load_checkpoint(args.checkpoint)
        trace = self.experiments.predict_split(checkpoint, args.split, args.level)
        path = write_ci_report(trace, args.out or Path(args.checkpoint).parent, args.split, args.level)
        print(f"rows={len(trace)} level={args.level} output={path}")
        return 0

    def export_latent(self, args) -> int:
        checkpoint = load_checkpoint(args.checkpoint)
        latent = self.experiments.export_latent(checkpoint, args.split)
        path = write_latent_report(latent, args.out or Path(args.checkpoint).parent, args.split)
        print(f"rows={len(latent)} columns={latent.shape[1]} output={path}")
        return 0

    def inspect_data(self, args) -> int:
        config = load_experiment_config(args.config)
        datasets = self.experiments.datasets
        summary = datasets.describe(config.dataset)
        lagged = datasets.lagged(config.dataset)
        sizes = datasets.split_sizes(config.dataset, len(lagged.x))
        print(format_data_report(summary, lagged.x.shape[1], lagged.offset, sizes))
        path = write_data_report(summary, args.out)
        if path is not None:
            print(f"output={path}")
        return 0
