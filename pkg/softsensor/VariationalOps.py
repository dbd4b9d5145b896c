"""
Closed-form diagonal-Gaussian quantities used by every loss term.

All functions reduce over the last axis: a width-d vector gives a scalar
tensor, a (batch x d) matrix gives one value per row.
"""
import math
from dataclasses import dataclass

import numpy as np

from softsensor.Autodiff import Tensor, as_tensor, stop_gradient
from softsensor.exceptions import ShapeError

LOG_2PI = math.log(2.0 * math.pi)


@dataclass
class DiagGaussian:
    """Mean and natural-log variance of a diagonal Gaussian, same shape."""
    mean: Tensor
    logvar: Tensor

    def __post_init__(self):
        if self.mean.shape != self.logvar.shape:
            raise ShapeError(f"mean shape {self.mean.shape} differs from logvar shape {self.logvar.shape}")

    @property
    def width(self) -> int:
        return self.mean.shape[-1]

    @property
    def variance(self) -> np.ndarray:
        return np.exp(self.logvar.values)

    def detached(self) -> "DiagGaussian":
        return DiagGaussian(stop_gradient(self.mean), stop_gradient(self.logvar))


def _require_same_shape(name: str, a: Tensor, b: Tensor) -> None:
    if a.shape != b.shape:
        raise ShapeError(f"{name}: widths differ, {a.shape} vs {b.shape}")


def kl_diag(q: DiagGaussian, p: DiagGaussian) -> Tensor:
    """
    KL(q || p) between diagonal Gaussians.

    Example:
        >>> q = DiagGaussian(Tensor([1.0]), Tensor([0.0]))
        >>> p = DiagGaussian(Tensor([0.0]), Tensor([0.0]))
        >>> kl_diag(q, p).item()
        0.5
    """
    _require_same_shape("kl_diag", q.mean, p.mean)
    diff = q.mean - p.mean
    terms = (p.logvar - q.logvar) * 0.5 \
        + ((q.logvar - p.logvar).exp() + diff.square() * (-p.logvar).exp()) * 0.5 \
        - 0.5
    return terms.sum(axis=-1)


def gauss_entropy(q: DiagGaussian) -> Tensor:
    """Differential entropy: sum of 0.5 * (ln 2pi + 1 + logvar)."""
    return ((q.logvar + (LOG_2PI + 1.0)) * 0.5).sum(axis=-1)


def gauss_nll(q: DiagGaussian, target) -> Tensor:
    """Negative log-density of ``target`` under ``q``."""
    target = as_tensor(target)
    _require_same_shape("gauss_nll", q.mean, target)
    terms = (q.logvar + (target - q.mean).square() * (-q.logvar).exp() + LOG_2PI) * 0.5
    return terms.sum(axis=-1)


def reparameterize(q: DiagGaussian, noise) -> Tensor:
    """
    Draw ``mean + exp(logvar / 2) * noise``.

    ``noise`` is a standard-normal array of the same shape; it is treated as a
    constant, so gradients reach the mean and log-variance only.
    """
    noise = np.asarray(noise, dtype=np.float64)
    if noise.shape != q.mean.shape:
        raise ShapeError(f"reparameterize: noise shape {noise.shape} differs from {q.mean.shape}")
    return q.mean + (q.logvar * 0.5).exp() * noise
