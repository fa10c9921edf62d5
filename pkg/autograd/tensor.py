"""Dense tensors with a reverse-mode gradient tape"""

import logging
import threading
from collections import Counter
from contextlib import contextmanager
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np

logger = logging.getLogger(__name__)


class ShapeError(ValueError):
    """Operand shapes violate an operation's preconditions."""


class DomainError(ValueError):
    """Operand values lie outside an operation's domain (strict mode)."""


class UsageError(RuntimeError):
    """An API was used out of contract, e.g. backward on a non-scalar."""


@dataclass
class NumericsOptions:
    """Process-wide numeric policy for log/div.

    Attributes:
        strict: Raise DomainError on non-positive log operands and zero divisors.
            Nothing is clamped or counted in strict mode.
        eps: Clamp value used when not strict.
        clamp_counts: How many elements each op clamped so far.
    """

    strict: bool = False
    eps: float = 1e-12
    clamp_counts: Counter = field(default_factory=Counter)


numerics = NumericsOptions()

_local = threading.local()


def _tape_stack() -> List["Tape"]:
    if not hasattr(_local, "tapes"):
        _local.tapes = []
    return _local.tapes


def default_dtype() -> np.dtype:
    return getattr(_local, "dtype", np.dtype(np.float32))


@contextmanager
def precision(dtype):
    """Select the dtype of newly created tensors for the current thread."""
    previous = default_dtype()
    _local.dtype = np.dtype(dtype)
    try:
        yield
    finally:
        _local.dtype = previous


def current_tape() -> Optional["Tape"]:
    stack = _tape_stack()
    return stack[-1] if stack else None


class Tensor:
    """A numpy-backed n-D array that can take part in a gradient tape.

    Tensors are value-semantic: operations never mutate their inputs. Only
    leaves (tensors not produced on the active tape) with ``requires_grad``
    receive entries in the gradient map returned by ``Tape.backward``.
    """

    __array_priority__ = 100

    def __init__(self, data, requires_grad: bool = False, dtype=None):
        if isinstance(data, Tensor):
            data = data.data
        self.data = np.asarray(data, dtype=dtype or default_dtype(), order="C")
        self.requires_grad = requires_grad
        self.node_id: Optional[int] = None
        self._tape: Optional["Tape"] = None
        self.grad: Optional[np.ndarray] = None

    @property
    def shape(self) -> Tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def dtype(self) -> np.dtype:
        return self.data.dtype

    @property
    def size(self) -> int:
        return int(self.data.size)

    def item(self) -> float:
        if self.size != 1:
            raise UsageError(f"item() on tensor of shape {self.shape}")
        return float(self.data.reshape(-1)[0])

    def numpy(self) -> np.ndarray:
        return self.data

    def detach(self) -> "Tensor":
        return Tensor(self.data, requires_grad=False, dtype=self.data.dtype)

    def __repr__(self):
        grad = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.shape}, dtype={self.dtype}{grad})"

    def __len__(self):
        return self.shape[0]


def as_tensor(value: Any, like: Optional[Tensor] = None) -> Tensor:
    """Wrap constants; python scalars adopt the dtype of ``like``."""
    if isinstance(value, Tensor):
        return value
    dtype = like.dtype if like is not None else None
    return Tensor(np.asarray(value), dtype=dtype)


class Function:
    """A differentiable operation.

    Subclasses implement ``forward`` on numpy arrays and ``backward`` that
    maps the output gradient to one gradient (or None) per input.
    """

    differentiable = True

    def __init__(self, **attrs):
        self.needs_input_grad: Tuple[bool, ...] = ()
        for key, value in attrs.items():
            setattr(self, key, value)

    def forward(self, *arrays: np.ndarray) -> np.ndarray:
        raise NotImplementedError("Forward pass not implemented for this function")

    def backward(self, grad: np.ndarray) -> Sequence[Optional[np.ndarray]]:
        raise NotImplementedError("Backward pass not implemented for this function")

    @classmethod
    def apply(cls, *inputs: Tensor, **attrs) -> Tensor:
        fn = cls(**attrs)
        fn.needs_input_grad = tuple(t.requires_grad for t in inputs)
        out_data = fn.forward(*(t.data for t in inputs))
        tape = current_tape()
        record = tape is not None and cls.differentiable and any(fn.needs_input_grad)
        out = Tensor(out_data, requires_grad=record, dtype=out_data.dtype)
        if record:
            tape.record(fn, inputs, out)
        return out


@dataclass
class TapeEntry:
    fn: Function
    inputs: Tuple[Tensor, ...]
    output: Tensor


class Tape:
    """Ordered record of executed operations for one forward/backward pass.

    A tape is single-owner: it is activated on one thread with ``with Tape()``
    and consumed once by ``backward``.
    """

    def __init__(self):
        self.entries: List[TapeEntry] = []

    def __enter__(self) -> "Tape":
        _tape_stack().append(self)
        return self

    def __exit__(self, exc_type, exc, tb):
        _tape_stack().remove(self)
        return False

    def record(self, fn: Function, inputs: Sequence[Tensor], output: Tensor) -> int:
        output.node_id = len(self.entries)
        output._tape = self
        self.entries.append(TapeEntry(fn, tuple(inputs), output))
        return output.node_id

    def backward(self, loss: Tensor) -> Dict[Tensor, np.ndarray]:
        """Propagate d(loss)/d(leaf) for every requires_grad leaf on the tape.

        Gradients are accumulated by summation, also into ``leaf.grad``.

        Returns:
            dict: leaf tensor -> gradient array of the leaf's shape.
        """
        if loss.size != 1:
            raise UsageError(f"backward expects a scalar loss, got shape {loss.shape}")
        if loss._tape is not self:
            raise UsageError("loss was not recorded on this tape")

        grads: Dict[int, np.ndarray] = {id(loss): np.ones_like(loss.data)}
        leaves: Dict[int, Tensor] = {}
        for entry in reversed(self.entries):
            grad = grads.pop(id(entry.output), None)
            if grad is None:
                continue
            input_grads = entry.fn.backward(grad)
            for tensor, g in zip(entry.inputs, input_grads):
                if g is None or not tensor.requires_grad:
                    continue
                key = id(tensor)
                if tensor._tape is not self:
                    leaves[key] = tensor
                grads[key] = g if key not in grads else grads[key] + g

        gradient_map = {}
        for key, leaf in leaves.items():
            g = np.asarray(grads[key], dtype=leaf.dtype).reshape(leaf.shape)
            leaf.grad = g if leaf.grad is None else leaf.grad + g
            gradient_map[leaf] = g
        logger.debug(f"backward over {len(self.entries)} ops, {len(gradient_map)} leaves")
        self.entries.clear()
        return gradient_map


def backward(loss: Tensor) -> Dict[Tensor, np.ndarray]:
    """Run backward on the tape that recorded ``loss``."""
    if loss._tape is None:
        raise UsageError("loss is not attached to a gradient tape")
    return loss._tape.backward(loss)
