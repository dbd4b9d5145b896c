"""Fully connected blocks: layer specs, Glorot initialization and forward passes."""
import logging
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import numpy as np

from softsensor.Autodiff import Tensor, stop_gradient
from softsensor.exceptions import ConfigError, ShapeError

logger = logging.getLogger(__name__)

ACTIVATIONS = ("relu", "tanh", "linear")
LOGVAR_RANGE = (-7.0, 7.0)


@dataclass(frozen=True)
class MlpSpec:
    """
    Shape of a fully connected network.

    ``layer_sizes`` lists every width from input to output, so ``(12, 6, 1)``
    is one hidden layer of 6 units followed by an output of width 1. With
    ``heads=2`` the last layer is duplicated into a mean head and a
    log-variance head of identical width. Output heads are linear unless
    ``output_activation`` names an activation, which trunk networks such as
    the shared encoder use.

    Attributes:
        layer_sizes (Tuple[int, ...]): Widths, at least two entries, all positive
        activation (str): Hidden activation, one of ``relu``, ``tanh``, ``linear``
        heads (int): 1 for mean only, 2 for mean and log-variance
        output_activation (Optional[str]): Activation applied to a single-head output
    """
    layer_sizes: Tuple[int, ...]
    activation: str = "relu"
    heads: int = 1
    output_activation: Optional[str] = None

    def __post_init__(self):
        object.__setattr__(self, "layer_sizes", tuple(int(size) for size in self.layer_sizes))
        if len(self.layer_sizes) < 2:
            raise ConfigError(f"an MLP needs at least two layer sizes, got {self.layer_sizes}")
        if any(size <= 0 for size in self.layer_sizes):
            raise ConfigError(f"layer sizes must be positive, got {self.layer_sizes}")
        if self.heads not in (1, 2):
            raise ConfigError(f"heads must be 1 or 2, got {self.heads}")
        for name in (self.activation, self.output_activation or "linear"):
            if name not in ACTIVATIONS:
                raise ConfigError(f"unknown activation '{name}', expected one of {ACTIVATIONS}")
        if self.heads == 2 and self.output_activation is not None:
            raise ConfigError("dual-head networks have linear heads")

    @property
    def input_width(self) -> int:
        return self.layer_sizes[0]

    @property
    def output_width(self) -> int:
        return self.layer_sizes[-1]

    @property
    def depth(self) -> int:
        return len(self.layer_sizes) - 1


@dataclass
class LayerParams:
    """Weight matrix (in x out) and bias vector (out) of one dense layer."""
    weight: Tensor
    bias: Tensor


def init_mlp(spec: MlpSpec, seed) -> List[LayerParams]:
    """
    Draw Glorot-uniform weights and zero biases for ``spec``.

    The returned list holds the trunk layers in order, then the mean head and,
    for dual-head specs, the log-variance head.

    Args:
        spec: Network shape
        seed: Anything ``np.random.default_rng`` accepts; equal seeds give
            bit-identical parameters

    Returns:
        List[LayerParams]: ``spec.depth`` entries, plus one for a second head
    """
    rng = np.random.default_rng(seed)
    sizes = spec.layer_sizes
    shapes = [(sizes[i], sizes[i + 1]) for i in range(spec.depth)]
    if spec.heads == 2:
        shapes.append(shapes[-1])

    layers = []
    for fan_in, fan_out in shapes:
        bound = np.sqrt(6.0 / (fan_in + fan_out))
        weight = rng.uniform(-bound, bound, size=(fan_in, fan_out))
        layers.append(LayerParams(
            weight=Tensor(weight, requires_grad=True),
            bias=Tensor(np.zeros(fan_out), requires_grad=True),
        ))
    return layers


def _activate(x: Tensor, name: str) -> Tensor:
    if name == "relu":
        return x.relu()
    if name == "tanh":
        return x.tanh()
    return x


def _dense(layer: LayerParams, x: Tensor, frozen: bool) -> Tensor:
    weight, bias = layer.weight, layer.bias
    if frozen:
        weight, bias = stop_gradient(weight), stop_gradient(bias)
    return x @ weight + bias


def mlp_forward(params: Sequence[LayerParams], spec: MlpSpec, x: Tensor,
                frozen: bool = False) -> Tuple[Tensor, Optional[Tensor]]:
    """
    Run a batch through the network.

    Args:
        params: Layers produced by :func:`init_mlp` for the same spec
        spec: Network shape
        x: Batch matrix with ``spec.input_width`` columns
        frozen: Block gradients into this network's own parameters while still
            letting them flow into ``x``

    Returns:
        Tuple[Tensor, Optional[Tensor]]: Mean output and, for dual-head specs,
        the log-variance clamped to [-7, 7]

    Raises:
        ShapeError: If the batch width differs from the network's input width
    """
    if len(x.shape) != 2 or x.shape[1] != spec.input_width:
        raise ShapeError(f"network expects input width {spec.input_width}, got shape {x.shape}")
    expected = spec.depth + (1 if spec.heads == 2 else 0)
    if len(params) != expected:
        raise ShapeError(f"network spec {spec.layer_sizes} needs {expected} layers, got {len(params)}")

    hidden = x
    for layer in params[:spec.depth - 1]:
        hidden = _activate(_dense(layer, hidden, frozen), spec.activation)

    mean = _dense(params[spec.depth - 1], hidden, frozen)
    if spec.heads == 1:
        if spec.output_activation is not None:
            mean = _activate(mean, spec.output_activation)
        return mean, None
    logvar = _dense(params[spec.depth], hidden, frozen).clip(*LOGVAR_RANGE)
    return mean, logvar


def named_parameters(prefix: str, params: Sequence[LayerParams]) -> List[Tuple[str, Tensor]]:
    """Flatten layers into ``(prefix.index.weight, tensor)`` pairs in a stable order."""
    named = []
    for index, layer in enumerate(params):
        named.append((f"{prefix}.{index}.weight", layer.weight))
        named.append((f"{prefix}.{index}.bias", layer.bias))
    return named
