"""
Dense float64 tensors with reverse-mode automatic differentiation.

Operations are recorded on the active :class:`Graph` (entered with ``with
Graph() as graph:``). Outside of any graph the same operations compute forward
values only, which is what inference paths use.

Example:
    >>> w = Tensor([3.0], requires_grad=True)
    >>> with Graph() as graph:
    ...     loss = w.square().sum()
    ...     grads = graph.backward(loss)
    >>> float(w.grad[0])
    6.0
"""
import contextvars
import itertools
import logging
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from softsensor.exceptions import (
    GraphError,
    NonDeterministicError,
    NumericOverflowError,
    ShapeError,
)

logger = logging.getLogger(__name__)

# Lower clamp applied to log and division inputs in forward.
FLOOR = 1e-12

KINDS = (
    "matmul", "add", "sub", "mul", "div", "exp", "log", "tanh", "relu",
    "square", "sum", "mean", "broadcast", "stop_gradient", "clip", "concat",
    "take_rows",
)

_tensor_ids = itertools.count(1)
_graph_ids = itertools.count(1)
_active_graph: contextvars.ContextVar = contextvars.ContextVar("active_graph", default=None)

Operand = Union["Tensor", float, int, np.ndarray, Sequence[float]]


class Tensor:
    """
    Dense float64 array with an attached gradient slot.

    Attributes:
        values (np.ndarray): Forward values, always float64
        grad (Optional[np.ndarray]): Gradient populated by backward for leaves
            created with ``requires_grad=True``
        requires_grad (bool): Marks trainable leaves (parameters)
        name (Optional[str]): Optional label used in error messages
        id (int): Process-unique identifier
        graph (Optional[Graph]): Graph holding the producing operation, None for leaves
    """

    def __init__(self, values, requires_grad: bool = False, name: Optional[str] = None):
        self.values = np.array(values, dtype=np.float64)
        self.grad: Optional[np.ndarray] = None
        self.requires_grad = requires_grad
        self.name = name
        self.id = next(_tensor_ids)
        self.graph: Optional["Graph"] = None

    @property
    def shape(self) -> Tuple[int, ...]:
        return self.values.shape

    @property
    def size(self) -> int:
        return int(self.values.size)

    def item(self) -> float:
        if self.size != 1:
            raise ShapeError(f"item() needs a single-element tensor, got shape {self.shape}")
        return float(self.values.reshape(-1)[0])

    def __repr__(self):
        label = f" name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.shape}{label})"

    def __add__(self, other: Operand) -> "Tensor":
        return forward_op("add", self, other)

    def __radd__(self, other: Operand) -> "Tensor":
        return forward_op("add", other, self)

    def __sub__(self, other: Operand) -> "Tensor":
        return forward_op("sub", self, other)

    def __rsub__(self, other: Operand) -> "Tensor":
        return forward_op("sub", other, self)

    def __mul__(self, other: Operand) -> "Tensor":
        return forward_op("mul", self, other)

    def __rmul__(self, other: Operand) -> "Tensor":
        return forward_op("mul", other, self)

    def __truediv__(self, other: Operand) -> "Tensor":
        return forward_op("div", self, other)

    def __neg__(self) -> "Tensor":
        return forward_op("mul", self, -1.0)

    def __matmul__(self, other: Operand) -> "Tensor":
        return forward_op("matmul", self, other)

    def exp(self) -> "Tensor":
        return forward_op("exp", self)

    def log(self) -> "Tensor":
        return forward_op("log", self)

    def tanh(self) -> "Tensor":
        return forward_op("tanh", self)

    def relu(self) -> "Tensor":
        return forward_op("relu", self)

    def square(self) -> "Tensor":
        return forward_op("square", self)

    def sum(self, axis: Optional[int] = None) -> "Tensor":
        return forward_op("sum", self, axis=axis)

    def mean(self, axis: Optional[int] = None) -> "Tensor":
        return forward_op("mean", self, axis=axis)

    def broadcast_to(self, shape: Tuple[int, ...]) -> "Tensor":
        return forward_op("broadcast", self, shape=tuple(shape))

    def stop_gradient(self) -> "Tensor":
        return forward_op("stop_gradient", self)

    def clip(self, low: float, high: float) -> "Tensor":
        return forward_op("clip", self, low=low, high=high)

    def take_rows(self, indices) -> "Tensor":
        return forward_op("take_rows", self, indices=indices)


def as_tensor(value: Operand) -> Tensor:
    """Wrap plain numbers and arrays as constant leaves; tensors pass through."""
    if isinstance(value, Tensor):
        return value
    return Tensor(value)


def concat(tensors: Sequence[Operand], axis: int = -1) -> Tensor:
    """Concatenate tensors along ``axis``."""
    return forward_op("concat", *tensors, axis=axis)


def stop_gradient(tensor: Tensor) -> Tensor:
    """Identity in forward, blocks every gradient in backward."""
    return forward_op("stop_gradient", tensor)


@dataclass
class OpRecord:
    """One recorded operation: kind, operand ids, output id and backward closure."""
    kind: str
    inputs: Tuple[Tensor, ...]
    output: Tensor
    backward: Callable[[np.ndarray], Tuple[Optional[np.ndarray], ...]]
    saved: Dict[str, object] = field(default_factory=dict)

    @property
    def input_ids(self) -> Tuple[int, ...]:
        return tuple(t.id for t in self.inputs)

    @property
    def output_id(self) -> int:
        return self.output.id


class Graph:
    """
    Ordered tape of operation records for one forward/backward pass.

    A graph is activated with a ``with`` block; activation is tracked per
    execution context, so graphs on different threads never see each other.
    ``backward`` may run once per graph until :meth:`reset` is called.
    """

    def __init__(self):
        self.id = next(_graph_ids)
        self.records: List[OpRecord] = []
        self._producer: Dict[int, int] = {}
        self._backward_done = False
        self._tokens: List[contextvars.Token] = []

    def __enter__(self) -> "Graph":
        self._tokens.append(_active_graph.set(self))
        return self

    def __exit__(self, exc_type, exc_val, exc_tb):
        _active_graph.reset(self._tokens.pop())

    @staticmethod
    def active() -> Optional["Graph"]:
        """The graph recording in the current context, or None."""
        return _active_graph.get()

    def record(self, record: OpRecord) -> None:
        """Append an operation to the tape and mark its output as produced here."""
        self._producer[record.output.id] = len(self.records)
        record.output.graph = self
        self.records.append(record)

    def reset(self) -> None:
        """Allow another backward traversal of this graph."""
        self._backward_done = False

    def backward(self, loss: Tensor) -> Dict[int, np.ndarray]:
        """
        Propagate d(loss)/d(tensor) to every tensor on the graph.

        Args:
            loss: Scalar tensor produced by an operation recorded on this graph

        Returns:
            Dict[int, np.ndarray]: Gradient per tensor id; tensors the loss does
            not depend on map to zeros

        Raises:
            GraphError: If the loss is not scalar, belongs to another graph,
                backward already ran, or the tape is not topologically ordered
            NumericOverflowError: If a gradient becomes non-finite
        """
        if loss.size != 1:
            raise GraphError(f"backward needs a scalar loss, got shape {loss.shape}")
        if loss.graph is not self or loss.id not in self._producer:
            raise GraphError("loss was not produced by an operation on this graph")
        if self._backward_done:
            raise GraphError(f"backward already ran on graph {self.id}; call reset() first")

        end = self._producer[loss.id]
        for index, record in enumerate(self.records[:end + 1]):
            for tensor_id in record.input_ids:
                producer = self._producer.get(tensor_id)
                if producer is not None and producer >= index:
                    raise GraphError(
                        f"cycle detected: '{record.kind}' at position {index} consumes "
                        f"tensor {tensor_id} produced at position {producer}"
                    )

        grads: Dict[int, np.ndarray] = {loss.id: np.ones_like(loss.values)}
        for record in reversed(self.records[:end + 1]):
            upstream = grads.get(record.output_id)
            if upstream is None:
                continue
            for tensor, grad in zip(record.inputs, record.backward(upstream)):
                if grad is None:
                    continue
                if not np.all(np.isfinite(grad)):
                    raise NumericOverflowError(
                        f"non-finite gradient flowing into '{record.kind}' operand {tensor!r}"
                    )
                if tensor.id in grads:
                    grads[tensor.id] = grads[tensor.id] + grad
                else:
                    grads[tensor.id] = grad
        self._backward_done = True

        for record in self.records:
            for tensor in record.inputs + (record.output,):
                if tensor.id not in grads:
                    grads[tensor.id] = np.zeros_like(tensor.values)
                if tensor.requires_grad:
                    tensor.grad = grads[tensor.id]
        return grads


def backward(loss: Tensor) -> Dict[int, np.ndarray]:
    """Run backward on the graph that produced ``loss``."""
    if loss.graph is None:
        raise GraphError("loss is not the output of a recorded operation")
    return loss.graph.backward(loss)


def _unbroadcast(grad: np.ndarray, shape: Tuple[int, ...]) -> np.ndarray:
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


def _broadcast_shape(kind: str, a: Tensor, b: Tensor) -> Tuple[int, ...]:
    try:
        return np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise ShapeError(f"{kind}: shapes {a.shape} and {b.shape} are not broadcast-compatible")


def _elementwise(kind: str, a: Tensor, b: Tensor):
    _broadcast_shape(kind, a, b)
    x, y = a.values, b.values
    if kind == "add":
        out = x + y
        grad_fn = lambda g: (_unbroadcast(g, a.shape), _unbroadcast(g, b.shape))
    elif kind == "sub":
        out = x - y
        grad_fn = lambda g: (_unbroadcast(g, a.shape), _unbroadcast(-g, b.shape))
    elif kind == "mul":
        out = x * y
        grad_fn = lambda g: (_unbroadcast(g * y, a.shape), _unbroadcast(g * x, b.shape))
    else:
        denom = np.maximum(y, FLOOR)
        active = (y > FLOOR).astype(np.float64)
        out = x / denom
        grad_fn = lambda g: (
            _unbroadcast(g / denom, a.shape),
            _unbroadcast(-g * x / denom ** 2 * active, b.shape),
        )
    return out, grad_fn


def _unary(kind: str, a: Tensor, attrs: Dict):
    x = a.values
    if kind == "exp":
        with np.errstate(over="ignore"):
            out = np.exp(x)
        return out, lambda g: (g * out,)
    if kind == "log":
        clamped = np.maximum(x, FLOOR)
        active = (x > FLOOR).astype(np.float64)
        return np.log(clamped), lambda g: (g / clamped * active,)
    if kind == "tanh":
        out = np.tanh(x)
        return out, lambda g: (g * (1.0 - out ** 2),)
    if kind == "relu":
        mask = (x > 0).astype(np.float64)
        return x * mask, lambda g: (g * mask,)
    if kind == "square":
        return x ** 2, lambda g: (2.0 * x * g,)
    if kind == "stop_gradient":
        return x.copy(), lambda g: (None,)
    if kind == "clip":
        low, high = attrs["low"], attrs["high"]
        mask = ((x >= low) & (x <= high)).astype(np.float64)
        return np.clip(x, low, high), lambda g: (g * mask,)
    if kind in ("sum", "mean"):
        axis = attrs.get("axis")
        if axis is not None and not -x.ndim <= axis < x.ndim:
            raise ShapeError(f"{kind}: axis {axis} out of range for shape {x.shape}")
        count = x.size if axis is None else x.shape[axis]
        scale = 1.0 if kind == "sum" else 1.0 / max(count, 1)
        out = x.sum(axis=axis) * scale

        def grad_fn(g):
            expanded = g if axis is None else np.expand_dims(g, axis)
            return (np.broadcast_to(expanded * scale, x.shape).copy(),)
        return out, grad_fn
    if kind == "broadcast":
        shape = attrs["shape"]
        try:
            out = np.broadcast_to(x, shape).copy()
        except ValueError:
            raise ShapeError(f"broadcast: cannot broadcast shape {x.shape} to {shape}")
        return out, lambda g: (_unbroadcast(g, x.shape),)
    if kind == "take_rows":
        indices = np.asarray(attrs["indices"], dtype=np.int64)
        if x.ndim == 0 or (indices.size and (indices.max() >= x.shape[0] or indices.min() < -x.shape[0])):
            raise ShapeError(f"take_rows: indices out of range for shape {x.shape}")

        def grad_fn(g):
            grad = np.zeros_like(x)
            np.add.at(grad, indices, g)
            return (grad,)
        return x[indices], grad_fn
    raise ShapeError(f"unknown operation kind '{kind}'")


def _matmul(a: Tensor, b: Tensor):
    if a.values.ndim != 2 or b.values.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul: shapes {a.shape} and {b.shape} do not align")
    x, y = a.values, b.values
    return x @ y, lambda g: (g @ y.T, x.T @ g)


def _concat(inputs: Tuple[Tensor, ...], axis: int):
    if not inputs:
        raise ShapeError("concat: no operands")
    try:
        out = np.concatenate([t.values for t in inputs], axis=axis)
    except ValueError:
        raise ShapeError(f"concat: shapes {[t.shape for t in inputs]} differ off axis {axis}")
    bounds = np.cumsum([t.shape[axis] for t in inputs])[:-1]
    return out, lambda g: tuple(np.split(g, bounds, axis=axis))


def forward_op(kind: str, *operands: Operand, **attrs) -> Tensor:
    """
    Evaluate one primitive and record it on the active graph.

    Args:
        kind: One of :data:`KINDS`
        *operands: Tensors or plain numbers (wrapped as constants)
        **attrs: Kind-specific attributes (``axis``, ``shape``, ``low``/``high``,
            ``indices``)

    Returns:
        Tensor: The result; recorded on the active graph when there is one

    Raises:
        ShapeError: If operand shapes are incompatible for the kind
        NumericOverflowError: If the result contains a non-finite value

    Example:
        >>> forward_op("relu", Tensor([-1.0, 0.0, 2.0])).values
        array([0., 0., 2.])
    """
    inputs = tuple(as_tensor(operand) for operand in operands)
    if kind == "matmul":
        out, grad_fn = _matmul(*inputs)
    elif kind in ("add", "sub", "mul", "div"):
        out, grad_fn = _elementwise(kind, *inputs)
    elif kind == "concat":
        out, grad_fn = _concat(inputs, attrs.get("axis", -1))
    else:
        if len(inputs) != 1:
            raise ShapeError(f"{kind}: expected one operand, got {len(inputs)}")
        out, grad_fn = _unary(kind, inputs[0], attrs)

    if not np.all(np.isfinite(out)):
        raise NumericOverflowError(
            f"{kind}: non-finite output for operand shapes {[t.shape for t in inputs]}"
        )

    result = Tensor(out)
    graph = Graph.active()
    if graph is not None:
        graph.record(OpRecord(kind=kind, inputs=inputs, output=result, backward=grad_fn, saved=dict(attrs)))
    return result


def check_gradients(loss_builder: Callable[[], Tensor], params: Sequence[Tensor], step: float = 1e-5) -> float:
    """
    Compare analytic gradients with central finite differences.

    Args:
        loss_builder: Zero-argument callable building a scalar loss from the
            current parameter values; any noise it uses must be fixed
        params: Parameter tensors to perturb entry by entry
        step: Finite-difference step, strictly positive

    Returns:
        float: max |analytic - numeric| / max(1, |numeric|) over all entries

    Raises:
        ValueError: If step is not positive
        NonDeterministicError: If two evaluations at the same point disagree
    """
    if not step > 0:
        raise ValueError(f"finite-difference step must be positive, got {step}")

    def evaluate() -> float:
        with Graph():
            return loss_builder().item()

    with Graph() as graph:
        loss = loss_builder()
        grads = graph.backward(loss)
    baseline = loss.item()
    analytic = {p.id: grads.get(p.id, np.zeros_like(p.values)).copy() for p in params}

    repeat = evaluate()
    if repeat != baseline:
        raise NonDeterministicError(
            f"loss builder returned {baseline!r} then {repeat!r} for identical parameters"
        )

    worst = 0.0
    for param in params:
        flat = param.values.reshape(-1)
        expected = analytic[param.id].reshape(-1)
        for index in range(flat.size):
            original = flat[index]
            flat[index] = original + step
            upper = evaluate()
            flat[index] = original - step
            lower = evaluate()
            flat[index] = original
            numeric = (upper - lower) / (2.0 * step)
            error = abs(expected[index] - numeric) / max(1.0, abs(numeric))
            worst = max(worst, error)
    logger.debug(f"Gradient check over {len(params)} tensors: max relative error {worst:.3e}")
    return worst
