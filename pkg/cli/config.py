import configparser
import io
import logging
from pathlib import Path
from typing import Callable, Dict, Optional

from softsensor.DatasetService import DatasetSettings
from softsensor.ExperimentService import ExperimentConfig
from softsensor.Models import NetworkSizes, TermWeights
from softsensor.Optimizer import LrSchedule
from softsensor.config import Config
from softsensor.exceptions import ConfigError

logger = logging.getLogger(__name__)


def _optional(parse: Callable[[str], object]) -> Callable[[str], object]:
    return lambda text: None if text.strip() in ("", "none") else parse(text)


def _bool(text: str) -> bool:
    lowered = text.strip().lower()
    if lowered in ("1", "true", "yes", "on"):
        return True
    if lowered in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"'{text}' is not a boolean")


def _header(text: str) -> Optional[bool]:
    return None if text.strip().lower() == "auto" else _bool(text)


def _sizes(text: str) -> tuple:
    return tuple(int(part) for part in text.replace(" ", "").split(",") if part)


# Section -> key -> parser. Every key an experiment file may contain.
SCHEMA: Dict[str, Dict[str, Callable[[str], object]]] = {
    "dataset": {
        "name": str,
        "path": _optional(str),
        "header": _header,
        "label_column": _optional(str),
        "lags": str,
        "train_rows": _optional(int),
        "val_rows": _optional(int),
        "test_rows": _optional(int),
        "train_fraction": float,
        "val_fraction": float,
        "synthetic_rows": int,
        "synthetic_variables": int,
        "synthetic_noise": float,
        "synthetic_seed": int,
    },
    "model": {
        "kind": str,
        "shared": _sizes,
        "latent": _sizes,
        "regressor": _sizes,
        "generator": _sizes,
        "decoder": _optional(_sizes),
        "activation": str,
    },
    "optimizer": {
        "lr_max": float,
        "lr_min": float,
        "warmup_epochs": int,
        "epochs": int,
        "batch_size": int,
        "clip_norm": _optional(float),
    },
    "weights": {
        "rec": float,
        "kl": float,
        "pv": float,
        "label": float,
        "entropy": float,
        "recon_reg": float,
        "entropy_minimising": _bool,
    },
    "experiment": {
        "fraction": float,
        "seed": int,
        "select_by": str,
        "output_dir": str,
    },
}


def parse_sections(parser: configparser.ConfigParser, source: str) -> Dict[str, Dict[str, object]]:
    """
    Convert every value of a parsed INI file with the parser of its key.

    Raises:
        ConfigError: On an unknown section or key, or a value that does not parse
    """
    values: Dict[str, Dict[str, object]] = {}
    for section in parser.sections():
        if section not in SCHEMA:
            raise ConfigError(f"{source}: unknown section [{section}], expected one of {list(SCHEMA)}")
        values[section] = {}
        for key, text in parser.items(section):
            if key not in SCHEMA[section]:
                raise ConfigError(f"{source}: unknown key '{key}' in [{section}]")
            try:
                values[section][key] = SCHEMA[section][key](text)
            except ValueError as e:
                raise ConfigError(f"{source}: [{section}] {key} = {text!r} is invalid ({e})") from e
    return values


def build_experiment_config(values: Dict[str, Dict[str, object]]) -> ExperimentConfig:
    """Assemble an :class:`ExperimentConfig` from parsed sections, defaults filling the gaps."""
    dataset = values.get("dataset", {})
    model = dict(values.get("model", {}))
    optimizer = dict(values.get("optimizer", {}))
    weights = values.get("weights", {})
    experiment = values.get("experiment", {})

    kind = model.pop("kind", "ssvaer")
    defaults = LrSchedule()
    schedule = LrSchedule(
        lr_max=optimizer.get("lr_max", defaults.lr_max),
        lr_min=optimizer.get("lr_min", defaults.lr_min),
        warmup_epochs=optimizer.get("warmup_epochs", defaults.warmup_epochs),
        total_epochs=optimizer.get("epochs", defaults.total_epochs),
    )
    return ExperimentConfig(
        dataset=DatasetSettings(**dataset),
        model=kind,
        sizes=NetworkSizes(**model),
        schedule=schedule,
        weights=TermWeights(**weights),
        fraction=experiment.get("fraction", 0.2),
        seed=experiment.get("seed", 0),
        batch_size=optimizer.get("batch_size", 200),
        clip_norm=optimizer.get("clip_norm"),
        select_by=experiment.get("select_by", "loss"),
        output_dir=experiment.get("output_dir", Config().output_dir),
    )


def load_experiment_config(path) -> ExperimentConfig:
    """
    Read an INI experiment file.

    Args:
        path: File with optional sections ``[dataset]``, ``[model]``,
            ``[optimizer]``, ``[weights]`` and ``[experiment]``

    Returns:
        ExperimentConfig: The validated configuration

    Raises:
        FileNotFoundError: If the file does not exist
        ConfigError: On unknown sections or keys and invalid values

    Example:
        >>> config = load_experiment_config("configs/synthetic.ini")
        >>> config.model
        'ssvaer'
    """
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"Config file not found: {path}")
    parser = configparser.ConfigParser(interpolation=None)
    try:
        parser.read(path, encoding="utf-8")
    except configparser.Error as e:
        raise ConfigError(f"{path}: {e}") from e
    config = build_experiment_config(parse_sections(parser, str(path)))
    config.validate()
    logger.info(f"Loaded experiment config {path}")
    return config


def apply_overrides(config: ExperimentConfig, seed: Optional[int] = None, fraction: Optional[float] = None,
                    epochs: Optional[int] = None, model: Optional[str] = None,
                    out: Optional[str] = None) -> ExperimentConfig:
    """
    Replace config values with command-line flags that were given.

    An ``epochs`` override shorter than the warmup shrinks the warmup to a
    fifth of the new epoch count.
    """
    changes = {}
    if seed is not None:
        changes["seed"] = seed
    if fraction is not None:
        changes["fraction"] = fraction
    if model is not None:
        changes["model"] = model
    if out is not None:
        changes["output_dir"] = out
    if epochs is not None:
        schedule = config.schedule
        warmup = schedule.warmup_epochs
        if warmup >= epochs:
            warmup = epochs // 5
            logger.warning(f"Warmup of {schedule.warmup_epochs} epochs does not fit {epochs} epochs; using {warmup}")
        changes["schedule"] = LrSchedule(schedule.lr_max, schedule.lr_min, warmup, epochs)
    updated = config.replace(**changes) if changes else config
    updated.validate()
    return updated


def _format(value) -> str:
    if value is None:
        return ""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, tuple):
        return ", ".join(str(v) for v in value)
    if isinstance(value, float):
        return repr(value)
    return str(value)


def to_parser(config: ExperimentConfig) -> configparser.ConfigParser:
    """Every setting of ``config`` as INI sections, readable by :func:`load_experiment_config`."""
    parser = configparser.ConfigParser(interpolation=None)
    dataset = config.dataset
    parser["dataset"] = {key: _format(getattr(dataset, key)) for key in SCHEMA["dataset"]}
    parser["dataset"]["header"] = "auto" if dataset.header is None else _format(dataset.header)
    sizes = config.sizes
    parser["model"] = {"kind": config.model}
    parser["model"].update({key: _format(getattr(sizes, key)) for key in SCHEMA["model"] if key != "kind"})
    parser["optimizer"] = {
        "lr_max": _format(config.schedule.lr_max),
        "lr_min": _format(config.schedule.lr_min),
        "warmup_epochs": _format(config.schedule.warmup_epochs),
        "epochs": _format(config.schedule.total_epochs),
        "batch_size": _format(config.batch_size),
        "clip_norm": _format(config.clip_norm),
    }
    parser["weights"] = {key: _format(getattr(config.weights, key)) for key in SCHEMA["weights"]}
    parser["experiment"] = {
        "fraction": _format(config.fraction),
        "seed": _format(config.seed),
        "select_by": config.select_by,
        "output_dir": config.output_dir,
    }
    return parser


def format_experiment_config(config: ExperimentConfig) -> str:
    buffer = io.StringIO()
    to_parser(config).write(buffer)
    return buffer.getvalue()


def dump_experiment_config(config: ExperimentConfig, path) -> Path:
    """Write the resolved config as ``path``; loading it yields an equal config."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(format_experiment_config(config), encoding="utf-8")
    return path
