import asyncio
import dataclasses
import json
import logging
import math
import zipfile
from collections import defaultdict
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from scipy.stats import norm

from softsensor.Autodiff import Graph
from softsensor.DatasetService import (
    DatasetSettings,
    PreparedData,
    SampleBatch,
    Standardizer,
    get_dataset_service,
    label_step,
    make_labelled_batches,
    make_pairs,
    split,
)
from softsensor.Models import MODEL_KINDS, NetworkSizes, NoiseSource, RegressionModel, TermWeights, build_model
from softsensor.Optimizer import AdamState, LrSchedule, adam_step, lr_at
from softsensor.config import Config
from softsensor.exceptions import (
    CheckpointError,
    ConfigError,
    DataError,
    NumericOverflowError,
    ShapeError,
    TrainingError,
)

logger = logging.getLogger(__name__)

CHECKPOINT_VERSION = 1
BENCHMARK_FRACTIONS = (0.01, 0.02, 0.05, 0.10, 0.142, 0.20, 0.25, 0.333, 0.50, 1.0)
SELECT_BY = ("loss", "rmse")
SPLITS = ("train", "validation", "test")

# Sub-seeds of the per-run generators, next to the model's own sub-seeds.
_SHUFFLE_STREAM = 20
_NOISE_STREAM = 21
_VALIDATION_STREAM = 22

ProgressCallback = Callable[[str, Optional[float]], None]


@dataclass(frozen=True)
class ExperimentConfig:
    """
    Everything that determines one training run.

    Attributes:
        dataset (DatasetSettings): Data source, lags and split
        model (str): ``ssvaer``, ``svaer`` or ``fcnn``
        sizes (NetworkSizes): Subnetwork widths and activation
        schedule (LrSchedule): Learning-rate schedule; its total is the epoch count
        weights (TermWeights): Loss-term multipliers and the entropy sign
        fraction (float): Share of train/validation rows that keep their label
        seed (int): Seed of initialization, shuffling and reparameterization noise
        batch_size (int): Pairs per batch
        clip_norm (Optional[float]): Global gradient-norm clip, off when None
        select_by (str): Checkpoint selection on validation ``loss`` or ``rmse``
        output_dir (str): Directory receiving the run's artifacts
    """
    dataset: DatasetSettings = field(default_factory=DatasetSettings)
    model: str = "ssvaer"
    sizes: NetworkSizes = field(default_factory=NetworkSizes)
    schedule: LrSchedule = field(default_factory=LrSchedule)
    weights: TermWeights = field(default_factory=TermWeights)
    fraction: float = 0.2
    seed: int = 0
    batch_size: int = 200
    clip_norm: Optional[float] = None
    select_by: str = "loss"
    output_dir: str = "runs"

    @property
    def epochs(self) -> int:
        return self.schedule.total_epochs

    def validate(self) -> None:
        """
        Check cross-field consistency.

        Raises:
            ConfigError: On an unknown model kind or selection mode, sizes that
                do not chain, an invalid fraction, batch size or clip norm
        """
        if self.model not in MODEL_KINDS:
            raise ConfigError(f"unknown model kind '{self.model}', expected one of {MODEL_KINDS}")
        if self.select_by not in SELECT_BY:
            raise ConfigError(f"select_by must be one of {SELECT_BY}, got '{self.select_by}'")
        if self.batch_size < 1:
            raise ConfigError(f"batch size must be positive, got {self.batch_size}")
        if self.clip_norm is not None and not self.clip_norm > 0:
            raise ConfigError(f"clip_norm must be positive, got {self.clip_norm}")
        label_step(self.fraction)
        self.sizes.validate(self.model)
        self.dataset.validate()

    def replace(self, **changes) -> "ExperimentConfig":
        return dataclasses.replace(self, **changes)

    def to_dict(self) -> Dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, data: Dict) -> "ExperimentConfig":
        sizes = {key: (tuple(value) if isinstance(value, list) else value)
                 for key, value in data["sizes"].items()}
        return cls(
            dataset=DatasetSettings(**data["dataset"]),
            model=data["model"],
            sizes=NetworkSizes(**sizes),
            schedule=LrSchedule(**data["schedule"]),
            weights=TermWeights(**data["weights"]),
            fraction=data["fraction"],
            seed=data["seed"],
            batch_size=data["batch_size"],
            clip_norm=data["clip_norm"],
            select_by=data["select_by"],
            output_dir=data["output_dir"],
        )


@dataclass
class Checkpoint:
    """
    Selected parameters of a run plus what is needed to use them.

    Attributes:
        config (ExperimentConfig): Configuration the run was trained with
        state (Dict[str, np.ndarray]): Parameter arrays by name
        standardizer (Standardizer): Training-split statistics
        input_width (int): Number of lagged input columns
        feature_names (List[str]): Lagged column names
        best_val_loss (float): Selection score of the kept parameters
        epoch (int): Zero-based epoch the parameters come from
        version (int): Checkpoint format version
    """
    config: ExperimentConfig
    state: Dict[str, np.ndarray]
    standardizer: Standardizer
    input_width: int
    feature_names: List[str]
    best_val_loss: float
    epoch: int
    version: int = CHECKPOINT_VERSION

    def build_model(self) -> RegressionModel:
        """Rebuild the model described by the embedded config and load the parameters."""
        model = build_model(self.config.model, self.input_width, self.config.sizes, self.config.seed)
        model.load_state_dict(self.state)
        model.set_label_scaling(self.standardizer.y_mean, self.standardizer.y_scale)
        return model


def save_checkpoint(checkpoint: Checkpoint, path) -> Path:
    """
    Write a checkpoint as one ``.npz`` file: raw parameter arrays plus a JSON header.

    Returns:
        Path: The written file
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    meta = {
        "version": checkpoint.version,
        "config": checkpoint.config.to_dict(),
        "standardizer": checkpoint.standardizer.to_dict(),
        "input_width": checkpoint.input_width,
        "feature_names": checkpoint.feature_names,
        "best_val_loss": checkpoint.best_val_loss,
        "epoch": checkpoint.epoch,
        "parameters": sorted(checkpoint.state),
    }
    arrays = {f"param/{name}": values for name, values in checkpoint.state.items()}
    with open(path, "wb") as handle:
        np.savez(handle, __meta__=np.array(json.dumps(meta)), **arrays)
    logger.info(f"Saved checkpoint (epoch {checkpoint.epoch}) to {path}")
    return path


def load_checkpoint(path) -> Checkpoint:
    """
    Read and validate a checkpoint written by :func:`save_checkpoint`.

    Raises:
        FileNotFoundError: If the file does not exist
        CheckpointError: If the file is corrupt, has another format version, or
            its parameters do not fit the layer sizes of the embedded config
    """
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"Checkpoint not found: {path}")
    try:
        with np.load(path, allow_pickle=False) as archive:
            meta = json.loads(str(archive["__meta__"]))
            state = {name: archive[f"param/{name}"].astype(np.float64) for name in meta["parameters"]}
    except (zipfile.BadZipFile, ValueError, KeyError, OSError, EOFError) as e:
        raise CheckpointError(f"{path}: corrupt checkpoint ({type(e).__name__}: {e})") from e

    if meta.get("version") != CHECKPOINT_VERSION:
        raise CheckpointError(
            f"{path}: checkpoint version {meta.get('version')} is not supported (expected {CHECKPOINT_VERSION})")
    try:
        checkpoint = Checkpoint(
            config=ExperimentConfig.from_dict(meta["config"]),
            state=state,
            standardizer=Standardizer.from_dict(meta["standardizer"]),
            input_width=int(meta["input_width"]),
            feature_names=list(meta["feature_names"]),
            best_val_loss=float(meta["best_val_loss"]),
            epoch=int(meta["epoch"]),
        )
    except (KeyError, TypeError, ValueError) as e:
        raise CheckpointError(f"{path}: invalid checkpoint header ({e})") from e
    try:
        checkpoint.build_model()
    except (ShapeError, ConfigError) as e:
        raise CheckpointError(f"{path}: parameters do not match the embedded config: {e}") from e
    logger.info(f"Loaded checkpoint {path} ({checkpoint.config.model}, epoch {checkpoint.epoch})")
    return checkpoint


@dataclass
class MetricsLog:
    """
    One row per completed epoch with a stable column order.

    Columns are ``epoch``, ``lr``, ``train_<term>`` for every loss term of the
    model kind, ``val_total``, ``val_rmse`` and ``best`` (1 on epochs that
    improved the selection score).
    """
    columns: List[str]
    rows: List[Dict[str, float]] = field(default_factory=list)
    test_rmse: Optional[float] = None

    @classmethod
    def for_terms(cls, term_names: Sequence[str]) -> "MetricsLog":
        """
        Create an empty log for a model kind.

        Args:
            term_names: Loss-term names of the model, ``total`` last

        Returns:
            MetricsLog: Log with the column order fixed
        """
        return cls(columns=["epoch", "lr"] + [f"train_{name}" for name in term_names]
                   + ["val_total", "val_rmse", "best"])

    def append(self, row: Dict[str, float]) -> None:
        """
        Record one epoch.

        Raises:
            ValueError: If ``row`` lacks one of the log's columns
        """
        missing = [column for column in self.columns if column not in row]
        if missing:
            raise ValueError(f"metrics row lacks columns {missing}")
        self.rows.append({column: row[column] for column in self.columns})

    def to_frame(self) -> pd.DataFrame:
        """One row per epoch, columns in log order."""
        return pd.DataFrame(self.rows, columns=self.columns)

    def best_epoch(self) -> int:
        """
        Epoch of the last improvement of the selection score.

        Raises:
            ValueError: If no epoch has been recorded
        """
        marked = [int(row["epoch"]) for row in self.rows if row["best"]]
        if not marked:
            raise ValueError("no epoch recorded")
        return marked[-1]

    def save(self, path) -> Path:
        """
        Write the log as CSV with full float precision.

        Returns:
            Path: The written file
        """
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        self.to_frame().to_csv(path, index=False, float_format="%.17g")
        return path


@dataclass
class TrainingResult:
    """Outcome of :meth:`ExperimentService.train`."""
    checkpoint: Checkpoint
    metrics: MetricsLog
    model: RegressionModel
    test_rmse: float
    output_dir: Optional[Path] = None


@dataclass
class SweepResult:
    """
    Outcome of :meth:`ExperimentService.sweep`.

    Attributes:
        runs (pd.DataFrame): One row per (kind, fraction, seed) with test RMSE and best epoch
        points (pd.DataFrame): Mean, standard deviation and count per (kind, fraction)
        table (pd.DataFrame): Mean test RMSE, methods as rows and fractions as columns
        metrics (Dict[Tuple[str, float, int], MetricsLog]): Per-cell metrics logs
    """
    runs: pd.DataFrame
    points: pd.DataFrame
    table: pd.DataFrame
    metrics: Dict[Tuple[str, float, int], MetricsLog] = field(default_factory=dict)


def rmse(prediction: np.ndarray, truth: np.ndarray) -> float:
    """
    Root mean squared error.

    Raises:
        DataError: If there are no values or the lengths differ
    """
    prediction = np.asarray(prediction, dtype=np.float64).reshape(-1)
    truth = np.asarray(truth, dtype=np.float64).reshape(-1)
    if truth.size == 0:
        raise DataError("cannot compute RMSE of an empty split")
    if prediction.shape != truth.shape:
        raise DataError(f"{prediction.size} predictions for {truth.size} labels")
    return float(np.sqrt(np.mean((prediction - truth) ** 2)))


def confidence_bounds(mean, std, level: float = 0.95) -> Tuple[np.ndarray, np.ndarray]:
    """
    Two-sided normal interval ``mean -/+ z * std`` with ``z`` the ``(1 + level) / 2`` quantile.

    Example:
        >>> lower, upper = confidence_bounds([0.5], [0.1])
        >>> round(float(lower[0]), 5), round(float(upper[0]), 5)
        (0.304, 0.696)
    """
    if not 0 < level < 1:
        raise ConfigError(f"confidence level must be in (0, 1), got {level}")
    mean = np.asarray(mean, dtype=np.float64)
    std = np.asarray(std, dtype=np.float64)
    z = norm.ppf(0.5 + level / 2.0)
    return mean - z * std, mean + z * std


def fraction_label(fraction: float) -> str:
    """Column label of a fraction in sweep tables, e.g. ``14.2%``."""
    return f"{round(fraction * 100, 6):g}%"


class ExperimentService:
    """
    Service running training, evaluation, prediction, sweeps and latent export.

    This service implements the singleton pattern. Each run owns its model,
    optimizer state and random generators, so several runs may execute in
    worker threads at once.

    Attributes:
        config (Config): Process-level settings
        datasets (DatasetService): Source of prepared splits

    Example:
        >>> service = get_experiment_service()
        >>> result = service.train(ExperimentConfig(schedule=LrSchedule(warmup_epochs=1, total_epochs=3)))
        >>> len(result.metrics.rows)
        3
    """
    _instance = None

    def __new__(cls):
        """
        Create or return the singleton instance of the ExperimentService class.

        Returns:
            ExperimentService: The single instance of the ExperimentService class

        Example:
            >>> service1 = ExperimentService()
            >>> service2 = ExperimentService()
            >>> assert service1 is service2
        """
        if cls._instance is None:
            cls._instance = super().__new__(cls)
            cls._instance._initialized = False
        return cls._instance

    def __init__(self):
        """
        Initialize the ExperimentService instance with configuration and the dataset service.

        Note:
            This method is part of the singleton pattern implementation and
            should not be called directly. Use the class constructor instead.
        """
        if not self._initialized:
            self.config = Config()
            self.datasets = get_dataset_service()
            self._initialized = True

    def train(self, config: ExperimentConfig, data: Optional[PreparedData] = None,
              output_dir=None, progress_callback: Optional[ProgressCallback] = None) -> TrainingResult:
        """
        Train one model and keep the parameters with the best validation score.

        Every epoch shuffles the training batches (consecutive-record pairs, or
        the labelled rows alone for fcnn), runs forward, backward and an
        Adam step per batch at ``lr_at(epoch)``, then scores the model on the
        validation split. With ``select_by = loss`` the score is the total
        training objective on validation pairs; with ``rmse`` it is the RMSE on
        labelled validation rows. An empty validation split falls back to the
        training score.

        Args:
            config: Run configuration
            data: Prepared splits; loaded from ``config.dataset`` when omitted
            output_dir: When given, ``checkpoint.npz``, ``metrics.csv`` and
                ``summary.csv`` are written there
            progress_callback: Called after every epoch with a status line and
                the completed percentage

        Returns:
            TrainingResult: Checkpoint, metrics and the model holding the selected parameters

        Raises:
            ConfigError: If the config is invalid
            DataError: If an fcnn run has no labelled training row
            TrainingError: If a loss or gradient becomes non-finite
        """
        config.validate()
        if data is None:
            data = self.datasets.prepare(config.dataset, config.fraction)
        train_split = data.splits["train"]
        if config.model == "fcnn" and train_split.labelled_count == 0:
            raise DataError("fcnn training needs at least one labelled training row")

        model = build_model(config.model, data.input_width, config.sizes, config.seed)
        model.set_label_scaling(data.standardizer.y_mean, data.standardizer.y_scale)
        params = model.parameters()
        state = AdamState.for_params(params)
        shuffle_rng = np.random.default_rng([config.seed, _SHUFFLE_STREAM])
        noise = NoiseSource(seed=[config.seed, _NOISE_STREAM])

        validation = data.splits["validation"]
        has_validation = validation.labelled_count > 0 if config.model == "fcnn" else validation.rows >= 2
        if not has_validation:
            logger.warning("Validation split has no usable rows; selecting on the training score")

        metrics = MetricsLog.for_terms(model.TERM_NAMES)
        best_score, best_state, best_epoch = math.inf, None, -1
        for epoch in range(config.epochs):
            lr = lr_at(config.schedule, epoch)
            batches = self.epoch_batches(train_split, config, shuffle_rng)
            train_terms = self._train_epoch(model, params, state, batches, noise, config, lr, epoch)

            if has_validation:
                val_total = self.validation_loss(model, data, config)
                val_rmse = self._labelled_rmse(model, validation)
            else:
                val_total, val_rmse = train_terms["total"], self._labelled_rmse(model, train_split)
            score = val_total if config.select_by == "loss" else val_rmse

            improved = score < best_score
            if improved:
                best_score, best_state, best_epoch = score, model.state_dict(), epoch
            row = {"epoch": epoch, "lr": lr, "val_total": val_total, "val_rmse": val_rmse, "best": int(improved)}
            row.update({f"train_{name}": train_terms[name] for name in model.TERM_NAMES})
            metrics.append(row)

            status = (f"Epoch {epoch + 1}/{config.epochs} lr={lr:.6f} train={train_terms['total']:.6f} "
                      f"val={val_total:.6f}{' *' if improved else ''}")
            logger.info(status)
            if progress_callback:
                progress_callback(status, (epoch + 1) / config.epochs * 100)

        model.load_state_dict(best_state)
        checkpoint = Checkpoint(
            config=config,
            state=best_state,
            standardizer=data.standardizer,
            input_width=data.input_width,
            feature_names=list(data.feature_names),
            best_val_loss=float(best_score),
            epoch=best_epoch,
        )
        test = data.splits["test"]
        test_rmse = rmse(model.predict_y(test.x, config.batch_size)[0], test.y_raw)
        metrics.test_rmse = test_rmse
        logger.info(f"Selected epoch {best_epoch + 1} ({config.select_by} {best_score:.6f}); test RMSE {test_rmse:.6f}")

        result = TrainingResult(checkpoint=checkpoint, metrics=metrics, model=model, test_rmse=test_rmse)
        if output_dir is not None:
            result.output_dir = self.write_run(result, output_dir)
        return result

    @staticmethod
    def epoch_batches(split_data, config: ExperimentConfig,
                      rng: Optional[np.random.Generator] = None) -> List[SampleBatch]:
        """
        Batches of one split for the configured model kind.

        The variational models see every consecutive-record pair; the
        supervised fcnn sees the labelled rows only.

        Args:
            split_data: Standardized split with its labelled mask
            config: Run configuration (model kind and batch size)
            rng: Shuffles the batch contents when given

        Returns:
            List[SampleBatch]: Batches of at most ``config.batch_size`` rows
        """
        if config.model == "fcnn":
            return make_labelled_batches(split_data.x, split_data.y, split_data.mask, config.batch_size, rng=rng)
        return make_pairs(split_data.x, split_data.y, split_data.mask, config.batch_size, rng=rng)

    def _train_epoch(self, model: RegressionModel, params, state: AdamState, batches, noise: NoiseSource,
                     config: ExperimentConfig, lr: float, epoch: int) -> Dict[str, float]:
        sums: Dict[str, float] = defaultdict(float)
        weight = 0
        for index, batch in enumerate(batches):
            try:
                with Graph() as graph:
                    terms = model.loss_terms(batch, noise, config.weights)
                    if not math.isfinite(terms.total.item()):
                        raise NumericOverflowError(f"loss is {terms.total.item()}")
                    grads = graph.backward(terms.total)
                adam_step(params, {name: grads.get(p.id, np.zeros_like(p.values)) for name, p in params.items()},
                          state, lr, config.clip_norm)
            except NumericOverflowError as e:
                raise TrainingError(f"non-finite value at epoch {epoch}, batch {index}: {e}") from e
            model.apply_constraints()

            for name, value in terms.to_dict().items():
                sums[name] += value * batch.size
            weight += batch.size
        if weight == 0:
            raise DataError(f"epoch {epoch} had no usable batch")
        return {name: total / weight for name, total in sums.items()}

    def validation_loss(self, model: RegressionModel, data: PreparedData, config: ExperimentConfig) -> float:
        """
        Total training objective on validation batches, averaged over rows.

        The reparameterization noise is drawn from a fixed stream, so scores of
        different epochs are comparable.
        """
        validation = data.splits["validation"]
        noise = NoiseSource(seed=[config.seed, _VALIDATION_STREAM])
        total, weight = 0.0, 0
        for batch in self.epoch_batches(validation, config):
            total += model.loss_terms(batch, noise, config.weights).total.item() * batch.size
            weight += batch.size
        if weight == 0:
            raise DataError("validation split has no usable batch")
        return total / weight

    @staticmethod
    def _labelled_rmse(model: RegressionModel, split_data) -> float:
        rows = np.flatnonzero(split_data.mask)
        return rmse(model.predict_y(split_data.x[rows])[0], split_data.y_raw[rows])

    def write_run(self, result: TrainingResult, output_dir) -> Path:
        """Write checkpoint, metrics and a one-row summary into ``output_dir``."""
        output_dir = Path(output_dir)
        output_dir.mkdir(parents=True, exist_ok=True)
        save_checkpoint(result.checkpoint, output_dir / "checkpoint.npz")
        result.metrics.save(output_dir / "metrics.csv")
        config = result.checkpoint.config
        pd.DataFrame([{
            "model": config.model,
            "fraction": config.fraction,
            "seed": config.seed,
            "best_epoch": result.checkpoint.epoch,
            "best_score": result.checkpoint.best_val_loss,
            "test_rmse": result.test_rmse,
        }]).to_csv(output_dir / "summary.csv", index=False, float_format="%.17g")
        return output_dir

    def split_inputs(self, checkpoint: Checkpoint, split_name: str) -> Tuple[np.ndarray, np.ndarray]:
        """
        Raw lagged inputs and labels of one split of the checkpoint's dataset.

        Raises:
            ConfigError: On an unknown split name
            DataError: If the split is empty or the data width differs from the checkpoint
        """
        if split_name not in SPLITS:
            raise ConfigError(f"unknown split '{split_name}', expected one of {SPLITS}")
        settings = checkpoint.config.dataset
        lagged = self.datasets.lagged(settings)
        if lagged.x.shape[1] != checkpoint.input_width:
            raise DataError(f"dataset has {lagged.x.shape[1]} lagged columns, checkpoint expects "
                            f"{checkpoint.input_width}")
        sizes = self.datasets.split_sizes(settings, len(lagged.x))
        x = getattr(split(lagged.x, *sizes), split_name)
        y = getattr(split(lagged.y, *sizes), split_name)
        if len(x) == 0:
            raise DataError(f"split '{split_name}' is empty")
        return x, y

    def evaluate_rmse(self, checkpoint: Checkpoint, split_name: str = "test",
                      batch_size: Optional[int] = None) -> float:
        """
        RMSE of the regressor mean on every row of a split, in label units.

        Example:
            >>> service.evaluate_rmse(load_checkpoint("runs/checkpoint.npz"), "test")
            0.0471...
        """
        x, y = self.split_inputs(checkpoint, split_name)
        model = checkpoint.build_model()
        prediction, _ = model.predict_y(checkpoint.standardizer.transform_x(x), batch_size)
        value = rmse(prediction, y)
        logger.info(f"RMSE on {split_name} ({len(y)} rows): {value:.6f}")
        return value

    def predict_ci(self, checkpoint: Checkpoint, rows, level: float = 0.95) -> pd.DataFrame:
        """
        Predictive mean and confidence interval for raw lagged input rows.

        Args:
            checkpoint: Trained checkpoint
            rows: Unstandardized lagged input rows
            level: Confidence level in (0, 1)

        Returns:
            pd.DataFrame: Columns ``prediction``, ``std``, ``lower``, ``upper``
        """
        if not 0 < level < 1:
            raise ConfigError(f"confidence level must be in (0, 1), got {level}")
        model = checkpoint.build_model()
        mean, variance = model.predict_y(checkpoint.standardizer.transform_x(rows))
        std = np.sqrt(variance)
        lower, upper = confidence_bounds(mean, std, level)
        return pd.DataFrame({"prediction": mean, "std": std, "lower": lower, "upper": upper})

    def predict_split(self, checkpoint: Checkpoint, split_name: str = "test", level: float = 0.95) -> pd.DataFrame:
        """CI trace of one split: ``index``, ``truth``, ``prediction``, ``lower``, ``upper``."""
        x, y = self.split_inputs(checkpoint, split_name)
        frame = self.predict_ci(checkpoint, x, level)
        frame.insert(0, "truth", y)
        frame.insert(0, "index", np.arange(len(y)))
        inside = ((frame["truth"] >= frame["lower"]) & (frame["truth"] <= frame["upper"])).mean()
        logger.info(f"{len(frame)} {split_name} rows, {inside:.1%} inside the {level:.0%} interval")
        return frame[["index", "truth", "prediction", "lower", "upper", "std"]]

    def export_latent(self, checkpoint: Checkpoint, split_name: str = "test") -> pd.DataFrame:
        """
        Latent means of every row of a split with the predicted label spread.

        Returns:
            pd.DataFrame: ``z1 .. zN`` latent means, ``y_std`` (predictive
            standard deviation in label units) and ``y`` (true label)

        Raises:
            ConfigError: For fcnn checkpoints, which have no latent space
        """
        if checkpoint.config.model == "fcnn":
            raise ConfigError("fcnn models have no latent space to export")
        x, y = self.split_inputs(checkpoint, split_name)
        model = checkpoint.build_model()
        standardized = checkpoint.standardizer.transform_x(x)
        latent = model.latent_means(standardized)
        _, variance = model.predict_y(standardized)
        frame = pd.DataFrame(latent, columns=[f"z{i + 1}" for i in range(latent.shape[1])])
        frame["y_std"] = np.sqrt(variance)
        frame["y"] = y
        return frame

    def sweep(self, config: ExperimentConfig, fractions: Sequence[float], kinds: Optional[Sequence[str]] = None,
              seeds: Optional[Sequence[int]] = None, output_dir=None) -> SweepResult:
        """
        Train one model per (kind, fraction, seed) and tabulate test RMSE.

        Cells run in worker threads, at most ``Config().sweep_workers`` at a
        time; results are ordered by (kind, fraction, seed) regardless of
        completion order.

        Args:
            config: Template configuration; model, fraction and seed are overridden per cell
            fractions: Label fractions, each in (0, 1]
            kinds: Model kinds; defaults to the template's kind
            seeds: Seeds; defaults to the template's seed
            output_dir: When given, each cell's metrics go to
                ``cells/<kind>_f<fraction>_s<seed>/metrics.csv``

        Raises:
            ConfigError: On an empty fraction list or an invalid fraction or kind
        """
        if not fractions:
            raise ConfigError("sweep needs at least one label fraction")
        kinds = list(kinds or [config.model])
        seeds = list(seeds if seeds is not None and len(seeds) else [config.seed])
        for fraction in fractions:
            label_step(fraction)
        cells = [config.replace(model=kind, fraction=float(fraction), seed=int(seed))
                 for kind in kinds for fraction in fractions for seed in seeds]
        for cell in cells:
            cell.validate()

        prepared = {fraction: self.datasets.prepare(config.dataset, float(fraction)) for fraction in set(fractions)}
        outcomes = asyncio.run(self._run_cells(cells, prepared, output_dir))

        runs = pd.DataFrame([
            {"kind": cell.model, "fraction": cell.fraction, "seed": cell.seed,
             "test_rmse": result.test_rmse, "best_epoch": result.checkpoint.epoch}
            for cell, result in outcomes
        ])
        points = (runs.groupby(["kind", "fraction"], sort=False)["test_rmse"]
                  .agg(mean_rmse="mean", std_rmse=lambda s: float(s.std(ddof=0)), runs="count")
                  .reset_index())
        table = points.pivot(index="kind", columns="fraction", values="mean_rmse")
        table = table.reindex(index=kinds, columns=sorted(set(float(f) for f in fractions)))
        table.columns = [fraction_label(f) for f in table.columns]
        table.index = [kind.upper() for kind in table.index]
        table.index.name = "method"
        metrics = {(cell.model, cell.fraction, cell.seed): result.metrics for cell, result in outcomes}
        return SweepResult(runs=runs, points=points, table=table, metrics=metrics)

    async def _run_cells(self, cells: List[ExperimentConfig], prepared: Dict[float, PreparedData],
                         output_dir) -> List[Tuple[ExperimentConfig, TrainingResult]]:
        semaphore = asyncio.Semaphore(self.config.sweep_workers)

        async def run_cell(cell: ExperimentConfig) -> Tuple[ExperimentConfig, TrainingResult]:
            async with semaphore:
                name = f"{cell.model}_f{cell.fraction:g}_s{cell.seed}"
                logger.info(f"Sweep cell {name} started")
                result = await asyncio.to_thread(self.train, cell, prepared[cell.fraction])
                if output_dir is not None:
                    result.metrics.save(Path(output_dir) / "cells" / name / "metrics.csv")
                logger.info(f"Sweep cell {name} finished: test RMSE {result.test_rmse:.6f}")
                return cell, result

        outcomes = await asyncio.gather(*(run_cell(cell) for cell in cells))
        return sorted(outcomes, key=lambda item: (item[0].model, item[0].fraction, item[0].seed))


def get_experiment_service() -> ExperimentService:
    """
    Returns the singleton :class:`ExperimentService`.
    """
    return ExperimentService()
