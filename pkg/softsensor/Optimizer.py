"""Adam updates and the warmup + cosine-annealing learning-rate schedule."""
import logging
import math
from dataclasses import dataclass, field
from typing import Dict, Mapping, Optional

import numpy as np

from softsensor.Autodiff import Tensor
from softsensor.exceptions import ConfigError, NumericOverflowError, ShapeError

logger = logging.getLogger(__name__)


@dataclass
class AdamState:
    """
    Moment estimates and step counter of the Adam optimizer.

    Attributes:
        first_moment (Dict[str, np.ndarray]): Running mean of gradients per parameter
        second_moment (Dict[str, np.ndarray]): Running mean of squared gradients
        step (int): Number of completed updates
        beta1 (float): Decay of the first moment
        beta2 (float): Decay of the second moment
        eps (float): Denominator offset
    """
    first_moment: Dict[str, np.ndarray] = field(default_factory=dict)
    second_moment: Dict[str, np.ndarray] = field(default_factory=dict)
    step: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def for_params(cls, params: Mapping[str, Tensor], **hyper) -> "AdamState":
        return cls(
            first_moment={name: np.zeros_like(p.values) for name, p in params.items()},
            second_moment={name: np.zeros_like(p.values) for name, p in params.items()},
            **hyper,
        )


def clip_by_global_norm(grads: Mapping[str, np.ndarray], max_norm: float) -> Dict[str, np.ndarray]:
    """Rescale all gradients together so their joint 2-norm is at most ``max_norm``."""
    norm = math.sqrt(sum(float(np.sum(g * g)) for g in grads.values()))
    if norm <= max_norm or norm == 0.0:
        return dict(grads)
    scale = max_norm / norm
    return {name: g * scale for name, g in grads.items()}


def adam_step(params: Mapping[str, Tensor], grads: Mapping[str, np.ndarray], state: AdamState,
              lr: float, clip_norm: Optional[float] = None) -> AdamState:
    """
    Apply one bias-corrected Adam update in place.

    Args:
        params: Named parameter tensors, updated in place
        grads: Gradient per parameter name; names missing here are treated as zero
        state: Moment estimates, updated in place
        lr: Learning rate, strictly positive
        clip_norm: Optional global-norm clipping threshold

    Returns:
        AdamState: The same state object, step counter incremented once

    Raises:
        ValueError: If lr is not positive
        ShapeError: If a gradient or moment shape differs from its parameter
        NumericOverflowError: If a gradient is non-finite
    """
    if not lr > 0:
        raise ValueError(f"learning rate must be positive, got {lr}")

    full = {}
    for name, param in params.items():
        grad = np.asarray(grads.get(name, np.zeros_like(param.values)), dtype=np.float64)
        if grad.shape != param.shape:
            raise ShapeError(f"gradient for '{name}' has shape {grad.shape}, parameter has {param.shape}")
        if not np.all(np.isfinite(grad)):
            raise NumericOverflowError(f"non-finite gradient for parameter '{name}'")
        full[name] = grad
    if clip_norm is not None:
        full = clip_by_global_norm(full, clip_norm)

    state.step += 1
    correction1 = 1.0 - state.beta1 ** state.step
    correction2 = 1.0 - state.beta2 ** state.step
    for name, param in params.items():
        grad = full[name]
        m = state.first_moment.setdefault(name, np.zeros_like(param.values))
        v = state.second_moment.setdefault(name, np.zeros_like(param.values))
        if m.shape != param.shape or v.shape != param.shape:
            raise ShapeError(f"moment shapes for '{name}' do not match parameter shape {param.shape}")
        m = state.beta1 * m + (1.0 - state.beta1) * grad
        v = state.beta2 * v + (1.0 - state.beta2) * grad ** 2
        state.first_moment[name] = m
        state.second_moment[name] = v
        param.values = param.values - lr * (m / correction1) / (np.sqrt(v / correction2) + state.eps)
    return state


@dataclass(frozen=True)
class LrSchedule:
    """
    Linear warmup from ``lr_min`` to ``lr_max``, then cosine annealing back to ``lr_min``.

    The schedule is indexed by epoch.
    """
    lr_max: float = 0.01
    lr_min: float = 0.0001
    warmup_epochs: int = 60
    total_epochs: int = 300

    def __post_init__(self):
        if not 0 < self.lr_min <= self.lr_max:
            raise ConfigError(f"need 0 < lr_min <= lr_max, got {self.lr_min} and {self.lr_max}")
        if not 0 <= self.warmup_epochs < self.total_epochs:
            raise ConfigError(
                f"need 0 <= warmup < total epochs, got {self.warmup_epochs} and {self.total_epochs}")


def lr_at(schedule: LrSchedule, epoch: int) -> float:
    """
    Learning rate for a zero-based epoch index.

    Example:
        >>> round(lr_at(LrSchedule(), 60), 12)
        0.01
    """
    if not 0 <= epoch < schedule.total_epochs:
        raise ValueError(f"epoch {epoch} outside [0, {schedule.total_epochs})")
    span = schedule.lr_max - schedule.lr_min
    if epoch < schedule.warmup_epochs:
        return schedule.lr_min + span * (epoch + 1) / schedule.warmup_epochs
    cosine_epochs = schedule.total_epochs - 1 - schedule.warmup_epochs
    phase = 0.0 if cosine_epochs == 0 else (epoch - schedule.warmup_epochs) / cosine_epochs
    return schedule.lr_min + 0.5 * span * (1.0 + math.cos(math.pi * phase))
