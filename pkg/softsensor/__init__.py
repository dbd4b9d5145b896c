from .Autodiff import Graph, Tensor, backward, check_gradients, forward_op
from .DatasetService import (
    DatasetService,
    DatasetSettings,
    SampleBatch,
    Standardizer,
    build_lagged,
    load_csv,
    make_pairs,
    mask_labels,
    split,
)
from .ExperimentService import (
    Checkpoint,
    ExperimentConfig,
    ExperimentService,
    MetricsLog,
    confidence_bounds,
    get_experiment_service,
    load_checkpoint,
    save_checkpoint,
)
from .Models import FcnnModel, NetworkSizes, SsvaerModel, SvaerModel, TermWeights, build_model
from .Optimizer import AdamState, LrSchedule, adam_step, lr_at

__all__ = [
    'Graph', 'Tensor', 'backward', 'check_gradients', 'forward_op',
    'DatasetService', 'DatasetSettings', 'SampleBatch', 'Standardizer',
    'build_lagged', 'load_csv', 'make_pairs', 'mask_labels', 'split',
    'Checkpoint', 'ExperimentConfig', 'ExperimentService', 'MetricsLog',
    'confidence_bounds', 'get_experiment_service', 'load_checkpoint', 'save_checkpoint',
    'FcnnModel', 'NetworkSizes', 'SsvaerModel', 'SvaerModel', 'TermWeights', 'build_model',
    'AdamState', 'LrSchedule', 'adam_step', 'lr_at',
]
