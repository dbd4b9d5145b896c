import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from softsensor.config import Config
from softsensor.exceptions import ConfigError, DataError

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class DatasetSchema:
    """Column layout of a benchmark file: default names and which columns are labels."""
    name: str
    columns: Optional[Tuple[str, ...]]
    label_columns: Tuple[str, ...]


SCHEMAS: Dict[str, DatasetSchema] = {
    "debutanizer": DatasetSchema("debutanizer", ("u1", "u2", "u3", "u4", "u5", "u6", "u7", "y"), ("y",)),
    "sru": DatasetSchema("sru", ("u1", "u2", "u3", "u4", "u5", "y1", "y2"), ("y1", "y2")),
    "generic": DatasetSchema("generic", None, ()),
    "synthetic": DatasetSchema("synthetic", None, ("y",)),
}

# Lags apply to process variables only; past quality values are never inputs.
LAG_PRESETS: Dict[str, Tuple[int, ...]] = {
    "sru": tuple(range(10)),
    "debutanizer": (0, 5, 7, 9),
    "none": (0,),
}

SPLIT_NAMES = ("train", "validation", "test")


@dataclass(frozen=True)
class DatasetSettings:
    """
    Where a dataset comes from and how it is lagged and split.

    Attributes:
        name (str): Schema name: ``debutanizer``, ``sru``, ``generic`` or ``synthetic``
        path (Optional[str]): Data file; relative paths resolve against ``Config().data_dir``
        header (Optional[bool]): First line is a header; None detects it
        label_column (Optional[str]): Quality column; defaults to the schema's first label
        lags (str): Lag preset name, ``auto`` (preset named after the dataset), or
            explicit ``var=0,1,2; var2=0`` pairs
        train_rows, val_rows, test_rows (Optional[int]): Explicit contiguous split sizes
        train_fraction, val_fraction (float): Split fractions used when sizes are not given
        synthetic_rows, synthetic_variables, synthetic_noise, synthetic_seed: Generator settings
    """
    name: str = "synthetic"
    path: Optional[str] = None
    header: Optional[bool] = None
    label_column: Optional[str] = None
    lags: str = "auto"
    train_rows: Optional[int] = None
    val_rows: Optional[int] = None
    test_rows: Optional[int] = None
    train_fraction: float = 0.6
    val_fraction: float = 0.2
    synthetic_rows: int = 400
    synthetic_variables: int = 4
    synthetic_noise: float = 0.05
    synthetic_seed: int = 0

    def validate(self) -> None:
        if self.name not in SCHEMAS:
            raise ConfigError(f"unknown dataset '{self.name}', expected one of {sorted(SCHEMAS)}")
        if self.name != "synthetic" and not self.path:
            raise ConfigError(f"dataset '{self.name}' needs a path")
        sizes = (self.train_rows, self.val_rows, self.test_rows)
        if any(size is not None for size in sizes) and any(size is None for size in sizes):
            raise ConfigError("train_rows, val_rows and test_rows must be given together")
        if not (0 < self.train_fraction < 1 and 0 <= self.val_fraction < 1
                and self.train_fraction + self.val_fraction < 1):
            raise ConfigError(
                f"split fractions {self.train_fraction}/{self.val_fraction} leave no test rows")
        if self.name == "synthetic" and (self.synthetic_rows < 20 or self.synthetic_variables < 1):
            raise ConfigError("synthetic dataset needs at least 20 rows and one variable")


@dataclass
class RawSeries:
    """
    An ordered table of process variables and quality variables.

    Attributes:
        frame (pd.DataFrame): Float64 table in sampling order
        process_columns (List[str]): Input variables
        label_column (str): The quality variable used as the target
        schema (str): Schema the file was read with
        source (str): File path or generator description
    """
    frame: pd.DataFrame
    process_columns: List[str]
    label_column: str
    schema: str = "generic"
    source: str = ""

    @property
    def rows(self) -> int:
        return len(self.frame)

    @property
    def columns(self) -> List[str]:
        return list(self.frame.columns)


@dataclass
class LaggedData:
    """Lagged input matrix aligned with labels; row i comes from source row ``offset + i``."""
    x: np.ndarray
    y: np.ndarray
    feature_names: List[str]
    offset: int


@dataclass(frozen=True)
class Partitions:
    """Contiguous train, validation and test partitions (validation may be empty)."""
    train: object
    validation: object
    test: object


def _read_cells(path: Path) -> Tuple[pd.DataFrame, np.ndarray]:
    """
    Read a delimited file as text cells, one frame row per non-blank line.

    The file is read as comma-separated first; when cells still hold
    whitespace it is read again as whitespace-separated.

    Returns:
        Tuple[pd.DataFrame, np.ndarray]: Stripped text cells (missing trailing
        cells are NaN or empty) and the 1-based file line of every row

    Raises:
        DataError: If the file is empty or a line has more cells than the first one
    """
    options = dict(header=None, dtype=str, keep_default_na=False, skip_blank_lines=False)
    try:
        cells = pd.read_csv(path, sep=",", skipinitialspace=True, **options)
        cells = cells.apply(lambda column: column.str.strip())
        if cells.apply(lambda column: column.str.contains(r"\s", na=False)).to_numpy().any():
            cells = pd.read_csv(path, sep=r"\s+", **options)
    except pd.errors.EmptyDataError:
        raise DataError(f"{path}: no data rows")
    except pd.errors.ParserError as e:
        raise DataError(f"{path}: {e}") from e

    blank = (cells.isna() | (cells == "")).all(axis=1)
    cells = cells[~blank]
    return cells.reset_index(drop=True), cells.index.to_numpy() + 1


def load_csv(path, schema: str = "generic", header: Optional[bool] = None,
             label_column: Optional[str] = None) -> RawSeries:
    """
    Read a comma- or whitespace-separated numeric table.

    Args:
        path: File to read
        schema: ``debutanizer`` (7 process columns + y), ``sru`` (5 process
            columns + y1, y2) or ``generic`` (last column is the label)
        header: True if the first line holds column names, False if not,
            None to treat a first line without any number as a header
        label_column: Name of the quality column, overriding the schema default

    Returns:
        RawSeries: The parsed table in file order

    Raises:
        FileNotFoundError: If the file does not exist
        DataError: On ragged rows, unparsable or non-finite cells, or a column
            count that does not match the schema

    Example:
        >>> series = load_csv("data/debutanizer_data.txt", "debutanizer")
        >>> series.rows
        2394
    """
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"Data file not found: {path}")
    if schema not in SCHEMAS or schema == "synthetic":
        raise DataError(f"schema '{schema}' cannot be read from a file")

    cells, lines = _read_cells(path)
    if cells.empty:
        raise DataError(f"{path}: no data rows")
    width = cells.shape[1]
    counts = (cells.notna() & (cells != "")).sum(axis=1).to_numpy()
    short = np.flatnonzero(counts != width)
    if short.size:
        row = short[0]
        raise DataError(f"{path}: line {lines[row]} has {counts[row]} cells, expected {width}")

    names: Optional[List[str]] = None
    first = cells.iloc[0]
    is_header = header if header is not None else pd.to_numeric(first, errors="coerce").isna().all()
    if is_header:
        names = first.tolist()
        cells, lines = cells.iloc[1:].reset_index(drop=True), lines[1:]
        if cells.empty:
            raise DataError(f"{path}: no data rows")

    layout = SCHEMAS[schema]
    if layout.columns is not None and width != len(layout.columns):
        raise DataError(f"{path}: schema '{schema}' expects {len(layout.columns)} columns, found {width}")
    if layout.columns is None and width < 2:
        raise DataError(f"{path}: need at least one process column and one label column")
    if names is None:
        names = list(layout.columns) if layout.columns else [f"x{i + 1}" for i in range(width - 1)] + ["y"]

    cells.columns = names
    frame = cells.apply(pd.to_numeric, errors="coerce").astype(np.float64)
    bad = ~np.isfinite(frame.to_numpy())
    if bad.any():
        row, col = np.argwhere(bad)[0]
        raise DataError(
            f"{path}: line {lines[row]}, column {col + 1} ('{names[col]}'): "
            f"cannot read '{cells.iat[row, col]}' as a finite number")

    label_positions = [names.index(c) if c in names else layout.columns.index(c)
                       for c in layout.label_columns] if layout.label_columns else [width - 1]
    label_names = [names[i] for i in label_positions]
    target = label_column if label_column is not None else label_names[0]
    if target not in names:
        raise DataError(f"{path}: label column '{target}' not among {names}")
    if target not in label_names:
        label_names.append(target)
    process = [name for name in names if name not in label_names]

    logger.info(f"Loaded {len(frame)} rows x {width} columns from {path} (schema {schema})")
    return RawSeries(frame=frame, process_columns=process, label_column=target, schema=schema, source=str(path))


def generate_synthetic(rows: int = 400, variables: int = 4, noise: float = 0.05, seed: int = 0) -> RawSeries:
    """
    Generate a smooth, correlated process series with ``y = sum(x) + noise``.

    Each variable is a stationary AR(1) process; a random mixing matrix
    correlates them.
    """
    rng = np.random.default_rng(seed)
    innovations = rng.standard_normal((rows, variables)) * math.sqrt(1.0 - 0.9 ** 2)
    latent = np.zeros((rows, variables))
    latent[0] = rng.standard_normal(variables)
    for t in range(1, rows):
        latent[t] = 0.9 * latent[t - 1] + innovations[t]
    mixing = np.eye(variables) + 0.3 * rng.standard_normal((variables, variables))
    x = latent @ mixing
    y = x.sum(axis=1) + noise * rng.standard_normal(rows)
    names = [f"x{i + 1}" for i in range(variables)]
    frame = pd.DataFrame(np.column_stack([x, y]), columns=names + ["y"])
    return RawSeries(frame=frame, process_columns=names, label_column="y", schema="synthetic",
                     source=f"synthetic(rows={rows}, variables={variables}, seed={seed})")


def resolve_lags(spec: str, series: RawSeries) -> Dict[str, Tuple[int, ...]]:
    """
    Turn a lag description into per-variable lag tuples.

    ``auto`` picks the preset named after the schema (``none`` when there is
    no such preset); a preset name applies its lags to every process
    variable; ``u1=0,5; u2=0`` lists lags per variable, and variables left out
    are not used.
    """
    spec = (spec or "auto").strip()
    if spec == "auto":
        spec = series.schema if series.schema in LAG_PRESETS else "none"
    if spec in LAG_PRESETS:
        return {column: LAG_PRESETS[spec] for column in series.process_columns}

    lags: Dict[str, Tuple[int, ...]] = {}
    for part in filter(None, (p.strip() for p in spec.split(";"))):
        if "=" not in part:
            raise ConfigError(f"lag entry '{part}' must look like 'variable=0,1,2'")
        name, values = (s.strip() for s in part.split("=", 1))
        try:
            lags[name] = tuple(int(v) for v in values.split(",") if v.strip())
        except ValueError:
            raise ConfigError(f"lag entry '{part}' has a non-integer lag")
    if not lags:
        raise ConfigError(f"lag description '{spec}' names no variables")
    return lags


def build_lagged(series: RawSeries, lags: Mapping[str, Sequence[int]]) -> LaggedData:
    """
    Concatenate lagged copies of the process variables.

    Row ``t`` of the result holds, for each variable in order, its value at
    ``t - lag`` for each configured lag. The first ``max lag`` rows are dropped
    and labels are aligned to time ``t``.

    Raises:
        DataError: If a variable is unknown, a lag is negative, or the largest
            lag leaves no rows
    """
    if not lags:
        raise DataError("no lagged variables configured")
    max_lag = 0
    for name, values in lags.items():
        if name not in series.frame.columns:
            raise DataError(f"lagged variable '{name}' not in columns {series.columns}")
        if not values or any(lag < 0 for lag in values):
            raise DataError(f"lags for '{name}' must be a non-empty list of non-negative integers")
        max_lag = max(max_lag, max(values))
    if max_lag >= series.rows:
        raise DataError(f"largest lag {max_lag} needs more than {series.rows} rows")

    features = {}
    for name, values in lags.items():
        for lag in values:
            label = f"{name}(t)" if lag == 0 else f"{name}(t-{lag})"
            features[label] = series.frame[name].shift(lag)
    lagged = pd.DataFrame(features).iloc[max_lag:]
    labels = series.frame[series.label_column].iloc[max_lag:]
    return LaggedData(
        x=lagged.to_numpy(dtype=np.float64),
        y=labels.to_numpy(dtype=np.float64),
        feature_names=list(lagged.columns),
        offset=max_lag,
    )


def _take(data, start: int, stop: int):
    if isinstance(data, (pd.DataFrame, pd.Series)):
        return data.iloc[start:stop]
    return data[start:stop]


def split(data, train_n: int, val_n: int, test_n: int) -> Partitions:
    """
    Cut ordered rows into contiguous train, validation and test partitions.

    Raises:
        DataError: If a size is negative or the sizes do not add up to the row count
    """
    total = len(data)
    if min(train_n, val_n, test_n) < 0:
        raise DataError(f"split sizes must be non-negative, got {train_n}/{val_n}/{test_n}")
    if train_n + val_n + test_n != total:
        raise DataError(
            f"split sizes {train_n}/{val_n}/{test_n} sum to {train_n + val_n + test_n}, data has {total} rows")
    return Partitions(
        train=_take(data, 0, train_n),
        validation=_take(data, train_n, train_n + val_n),
        test=_take(data, train_n + val_n, total),
    )


def label_step(fraction: float) -> int:
    """Spacing between labelled rows: ``1 / fraction`` rounded half up."""
    if not 0 < fraction <= 1:
        raise ConfigError(f"label fraction must be in (0, 1], got {fraction}")
    return max(1, int(math.floor(1.0 / fraction + 0.5)))


def mask_labels(n_rows: int, fraction: float) -> np.ndarray:
    """
    Indices of the rows that keep their label: ``0, step, 2*step, ...``.

    Example:
        >>> mask_labels(20, 0.10)
        array([ 0, 10])
    """
    return np.arange(0, max(n_rows, 0), label_step(fraction))


@dataclass
class Standardizer:
    """
    Z-score statistics fitted on training rows.

    Attributes:
        x_mean, x_scale (np.ndarray): Per-column input mean and standard deviation
        y_mean, y_scale (float): Label mean and standard deviation
    """
    x_mean: np.ndarray
    x_scale: np.ndarray
    y_mean: float
    y_scale: float

    @classmethod
    def fit(cls, x: np.ndarray, y: np.ndarray, feature_names: Optional[Sequence[str]] = None) -> "Standardizer":
        """
        Fit per-column input statistics and scalar label statistics.

        Args:
            x: Training inputs (rows x columns)
            y: Labels of the labelled training rows
            feature_names: Column names used in error messages

        Returns:
            Standardizer: Population means and standard deviations

        Raises:
            DataError: With fewer than two rows or labels, or a constant column
        """
        x = np.asarray(x, dtype=np.float64)
        y = np.asarray(y, dtype=np.float64)
        if len(x) < 2 or len(y) < 2:
            raise DataError("standardization needs at least two training rows and two labels")
        x_scale = x.std(axis=0)
        constant = np.flatnonzero(x_scale == 0)
        if constant.size:
            names = [feature_names[i] for i in constant] if feature_names else constant.tolist()
            raise DataError(f"constant input columns cannot be standardized: {names}")
        y_scale = float(y.std())
        if y_scale == 0:
            raise DataError("labelled training values are constant; cannot standardize labels")
        return cls(x_mean=x.mean(axis=0), x_scale=x_scale, y_mean=float(y.mean()), y_scale=y_scale)

    def transform_x(self, x: np.ndarray) -> np.ndarray:
        """Standardize input rows with the training statistics."""
        return (np.asarray(x, dtype=np.float64) - self.x_mean) / self.x_scale

    def inverse_x(self, x: np.ndarray) -> np.ndarray:
        """Map standardized input rows back to process units."""
        return np.asarray(x, dtype=np.float64) * self.x_scale + self.x_mean

    def transform_y(self, y: np.ndarray) -> np.ndarray:
        """Standardize labels with the labelled-training statistics."""
        return (np.asarray(y, dtype=np.float64) - self.y_mean) / self.y_scale

    def inverse_y(self, y: np.ndarray) -> np.ndarray:
        """Map standardized labels back to quality units."""
        return np.asarray(y, dtype=np.float64) * self.y_scale + self.y_mean

    def to_dict(self) -> Dict[str, object]:
        """JSON-ready statistics, as stored in checkpoint headers."""
        return {
            "x_mean": self.x_mean.tolist(),
            "x_scale": self.x_scale.tolist(),
            "y_mean": self.y_mean,
            "y_scale": self.y_scale,
        }

    @classmethod
    def from_dict(cls, data: Mapping[str, object]) -> "Standardizer":
        """Rebuild a standardizer from :meth:`to_dict` output."""
        return cls(
            x_mean=np.asarray(data["x_mean"], dtype=np.float64),
            x_scale=np.asarray(data["x_scale"], dtype=np.float64),
            y_mean=float(data["y_mean"]),
            y_scale=float(data["y_scale"]),
        )


@dataclass(frozen=True)
class SampleBatch:
    """
    Consecutive-record pairs ``(x_t, x_{t+1})`` with the labels of ``x_t``.

    Attributes:
        x_t (np.ndarray): Current records (batch x width)
        x_next (np.ndarray): Successor of each current record
        y (np.ndarray): Standardized labels of the labelled rows only, in row order
        mask (np.ndarray): Boolean labelled flag per row
        rows (np.ndarray): Index of each ``x_t`` row within its split
    """
    x_t: np.ndarray
    x_next: np.ndarray
    y: np.ndarray
    mask: np.ndarray
    rows: np.ndarray

    def __post_init__(self):
        if self.x_t.shape != self.x_next.shape:
            raise DataError(f"x_t shape {self.x_t.shape} differs from x_next shape {self.x_next.shape}")
        if len(self.mask) != len(self.x_t) or int(self.mask.sum()) != len(self.y):
            raise DataError("mask length must match the rows and count the labels")
        for array in (self.x_t, self.x_next, self.y, self.mask, self.rows):
            array.flags.writeable = False

    @property
    def size(self) -> int:
        return len(self.x_t)

    @property
    def labelled(self) -> int:
        return int(self.mask.sum())


def make_pairs(matrix: np.ndarray, labels: np.ndarray, mask: np.ndarray, batch_size: int = 200,
               rng: Optional[np.random.Generator] = None) -> List[SampleBatch]:
    """
    Pair each row with its successor and cut the pairs into batches.

    Args:
        matrix: Rows of one split, in time order
        labels: One label per row; values of unlabelled rows are ignored
        mask: Boolean labelled flag per row
        batch_size: Pairs per batch; the last batch may be smaller
        rng: When given, the pair order is shuffled with it

    Returns:
        List[SampleBatch]: ``len(matrix) - 1`` pairs in total

    Raises:
        DataError: If there are fewer than two rows or the batch size is not positive
    """
    matrix = np.asarray(matrix, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.float64)
    mask = np.asarray(mask, dtype=bool)
    if len(matrix) < 2:
        raise DataError(f"pairing needs at least two rows, got {len(matrix)}")
    if batch_size < 1:
        raise DataError(f"batch size must be positive, got {batch_size}")
    if len(labels) != len(matrix) or len(mask) != len(matrix):
        raise DataError("labels and mask must have one entry per row")

    order = np.arange(len(matrix) - 1)
    if rng is not None:
        order = rng.permutation(order)

    batches = []
    for start in range(0, len(order), batch_size):
        rows = np.sort(order[start:start + batch_size]) if rng is None else order[start:start + batch_size]
        row_mask = mask[rows]
        batches.append(SampleBatch(
            x_t=matrix[rows].copy(),
            x_next=matrix[rows + 1].copy(),
            y=labels[rows][row_mask].copy(),
            mask=row_mask.copy(),
            rows=rows.copy(),
        ))
    return batches


def make_labelled_batches(matrix: np.ndarray, labels: np.ndarray, mask: np.ndarray, batch_size: int = 200,
                          rng: Optional[np.random.Generator] = None) -> List[SampleBatch]:
    """
    Cut the labelled rows alone into batches, for supervised training.

    Every row of a batch is labelled. ``x_next`` repeats ``x_t``: supervised
    models do not read the successor record.

    Args:
        matrix: Rows of one split, in time order
        labels: One label per row
        mask: Boolean labelled flag per row
        batch_size: Rows per batch; the last batch may be smaller
        rng: When given, the labelled rows are shuffled with it

    Returns:
        List[SampleBatch]: ``ceil(labelled / batch_size)`` batches

    Raises:
        DataError: If no row is labelled or the batch size is not positive
    """
    matrix = np.asarray(matrix, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.float64)
    order = np.flatnonzero(np.asarray(mask, dtype=bool))
    if order.size == 0:
        raise DataError("supervised batches need at least one labelled row")
    if batch_size < 1:
        raise DataError(f"batch size must be positive, got {batch_size}")
    if rng is not None:
        order = rng.permutation(order)

    batches = []
    for start in range(0, len(order), batch_size):
        rows = order[start:start + batch_size]
        batches.append(SampleBatch(
            x_t=matrix[rows].copy(),
            x_next=matrix[rows].copy(),
            y=labels[rows].copy(),
            mask=np.ones(len(rows), dtype=bool),
            rows=rows.copy(),
        ))
    return batches


@dataclass
class SplitData:
    """One partition: raw and standardized inputs, labels and the labelled mask."""
    x_raw: np.ndarray
    y_raw: np.ndarray
    x: np.ndarray
    y: np.ndarray
    mask: np.ndarray

    @property
    def rows(self) -> int:
        return len(self.x)

    @property
    def labelled_count(self) -> int:
        return int(self.mask.sum())


@dataclass
class PreparedData:
    """Everything training needs from a dataset: standardized splits and their statistics."""
    feature_names: List[str]
    standardizer: Standardizer
    splits: Dict[str, SplitData] = field(default_factory=dict)

    @property
    def input_width(self) -> int:
        return len(self.feature_names)


class DatasetService:
    """
    Service that turns dataset settings into standardized, masked splits.

    The service implements the same singleton pattern as the other services;
    it is stateless apart from the process configuration.

    Example:
        >>> service = DatasetService()
        >>> data = service.prepare(DatasetSettings(), fraction=0.5)
        >>> data.splits["train"].rows
        239
    """
    _instance = None

    def __new__(cls):
        """
        Create or return the singleton instance of the DatasetService class.

        Returns:
            DatasetService: The single instance of the DatasetService class

        Example:
            >>> assert DatasetService() is get_dataset_service()
        """
        if cls._instance is None:
            cls._instance = super().__new__(cls)
            cls._instance._initialized = False
        return cls._instance

    def __init__(self):
        """
        Initialize the DatasetService instance with the process configuration.

        Note:
            This method is part of the singleton pattern implementation and
            should not be called directly. Use the class constructor instead.
        """
        if not self._initialized:
            self.config = Config()
            self._initialized = True

    def resolve_path(self, path: str) -> Path:
        """Relative dataset paths are read from the configured data directory."""
        candidate = Path(path)
        return candidate if candidate.is_absolute() else Path(self.config.data_dir) / candidate

    def load_series(self, settings: DatasetSettings) -> RawSeries:
        """Read (or generate) the raw series described by ``settings``."""
        settings.validate()
        if settings.name == "synthetic":
            return generate_synthetic(settings.synthetic_rows, settings.synthetic_variables,
                                      settings.synthetic_noise, settings.synthetic_seed)
        return load_csv(self.resolve_path(settings.path), settings.name, settings.header, settings.label_column)

    def split_sizes(self, settings: DatasetSettings, rows: int) -> Tuple[int, int, int]:
        """Train, validation and test row counts: explicit counts when set, else fractions of ``rows``."""
        if settings.train_rows is not None:
            return settings.train_rows, settings.val_rows, settings.test_rows
        train_n = int(rows * settings.train_fraction)
        val_n = int(rows * settings.val_fraction)
        return train_n, val_n, rows - train_n - val_n

    def lagged(self, settings: DatasetSettings) -> LaggedData:
        """Load the series and apply its resolved lag set."""
        series = self.load_series(settings)
        return build_lagged(series, resolve_lags(settings.lags, series))

    def prepare(self, settings: DatasetSettings, fraction: float) -> PreparedData:
        """
        Load, lag, split, mask and standardize a dataset.

        Train and validation rows keep labels on the regular ``mask_labels``
        pattern; test rows keep every label. Statistics come from the training
        split only, labels from its labelled rows only.

        Args:
            settings: Dataset description
            fraction: Label fraction in (0, 1]

        Returns:
            PreparedData: Standardizer and the three standardized splits
        """
        lagged = self.lagged(settings)
        sizes = self.split_sizes(settings, len(lagged.x))
        x_parts = split(lagged.x, *sizes)
        y_parts = split(lagged.y, *sizes)
        logger.info(f"Split {len(lagged.x)} lagged rows into {sizes[0]}/{sizes[1]}/{sizes[2]} "
                    f"(width {len(lagged.feature_names)})")

        masks = {}
        for name in SPLIT_NAMES:
            rows = len(getattr(x_parts, name))
            mask = np.zeros(rows, dtype=bool)
            mask[mask_labels(rows, 1.0 if name == "test" else fraction)] = True
            masks[name] = mask

        standardizer = Standardizer.fit(x_parts.train, y_parts.train[masks["train"]], lagged.feature_names)
        prepared = PreparedData(feature_names=lagged.feature_names, standardizer=standardizer)
        for name in SPLIT_NAMES:
            x_raw, y_raw = getattr(x_parts, name), getattr(y_parts, name)
            prepared.splits[name] = SplitData(
                x_raw=x_raw, y_raw=y_raw,
                x=standardizer.transform_x(x_raw), y=standardizer.transform_y(y_raw),
                mask=masks[name],
            )
        logger.info(f"Labelled rows: train {masks['train'].sum()}, validation {masks['validation'].sum()}")
        return prepared

    def describe(self, settings: DatasetSettings) -> pd.DataFrame:
        """Per-column summary (count, mean, std, min, max) of the raw series."""
        series = self.load_series(settings)
        summary = series.frame.agg(["count", "mean", "std", "min", "max"]).T
        summary["role"] = ["label" if c == series.label_column else
                           "process" if c in series.process_columns else "unused" for c in summary.index]
        return summary


def get_dataset_service() -> DatasetService:
    """Return the singleton :class:`DatasetService`."""
    return DatasetService()
