"""
Dense tensor with reverse-mode automatic differentiation.

Every op records its parents and a closure mapping the output gradient to the
parent gradients; backward() walks the graph in reverse topological order.
Leaves (tensors created by the user with requires_grad=True) accumulate
gradients in `.grad`; intermediate gradients live only during the walk.

Data is float32 unless a dtype is requested explicitly at construction, in
which case ops keep that dtype (gradient oracles run in float64).
"""

import threading
from contextlib import contextmanager
from typing import Callable, List, Optional, Sequence, Tuple, Union

import numpy as np
from scipy.special import expit

from ..errors import GradientError, ShapeError

ArrayLike = Union[np.ndarray, float, int, Sequence[float]]

_state = threading.local()


def is_grad_enabled() -> bool:
    return getattr(_state, "grad_enabled", True)


@contextmanager
def no_grad():
    """Disable graph recording for the current thread"""
    previous = is_grad_enabled()
    _state.grad_enabled = False
    try:
        yield
    finally:
        _state.grad_enabled = previous


def _unbroadcast(grad: np.ndarray, shape: Tuple[int, ...]) -> np.ndarray:
    """Sum a broadcast gradient back down to `shape`"""
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, size in enumerate(shape) if size == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad.reshape(shape)


class DiffTensor:
    """n-dimensional array that can take part in the gradient tape"""

    __array_priority__ = 100
    __array_ufunc__ = None

    def __init__(self, data: ArrayLike, requires_grad: bool = False, dtype=None, name: Optional[str] = None):
        self.data = np.array(data, dtype=dtype if dtype is not None else np.float32)
        self.requires_grad = bool(requires_grad)
        self.grad: Optional[np.ndarray] = None
        self.name = name
        self._parents: Tuple["DiffTensor", ...] = ()
        self._backward: Optional[Callable[[np.ndarray], Sequence[Optional[np.ndarray]]]] = None

    @staticmethod
    def _from_op(data: np.ndarray, parents: Sequence["DiffTensor"], backward) -> "DiffTensor":
        out = DiffTensor.__new__(DiffTensor)
        out.data = data
        out.grad = None
        out.name = None
        track = is_grad_enabled() and any(p.requires_grad for p in parents)
        out.requires_grad = track
        out._parents = tuple(parents) if track else ()
        out._backward = backward if track else None
        return out

    def _lift(self, other) -> "DiffTensor":
        if isinstance(other, DiffTensor):
            return other
        return DiffTensor(np.asarray(other, dtype=self.data.dtype), dtype=self.data.dtype)

    # --- Properties ---

    @property
    def shape(self) -> Tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    @property
    def dtype(self):
        return self.data.dtype

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        return float(self.data.reshape(-1)[0])

    def detach(self) -> "DiffTensor":
        return DiffTensor(self.data, dtype=self.data.dtype)

    def __repr__(self):
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"DiffTensor(shape={self.shape}, dtype={self.dtype}{flag})"

    # --- Arithmetic ---

    def __add__(self, other):
        other = self._lift(other)
        a_shape, b_shape = self.shape, other.shape

        def backward(g):
            return _unbroadcast(g, a_shape), _unbroadcast(g, b_shape)

        return DiffTensor._from_op(self.data + other.data, (self, other), backward)

    __radd__ = __add__

    def __sub__(self, other):
        other = self._lift(other)
        a_shape, b_shape = self.shape, other.shape

        def backward(g):
            return _unbroadcast(g, a_shape), _unbroadcast(-g, b_shape)

        return DiffTensor._from_op(self.data - other.data, (self, other), backward)

    def __rsub__(self, other):
        return self._lift(other) - self

    def __mul__(self, other):
        other = self._lift(other)
        a, b = self.data, other.data

        def backward(g):
            return _unbroadcast(g * b, a.shape), _unbroadcast(g * a, b.shape)

        return DiffTensor._from_op(a * b, (self, other), backward)

    __rmul__ = __mul__

    def __truediv__(self, other):
        other = self._lift(other)
        a, b = self.data, other.data

        def backward(g):
            return _unbroadcast(g / b, a.shape), _unbroadcast(-g * a / (b * b), b.shape)

        return DiffTensor._from_op(a / b, (self, other), backward)

    def __rtruediv__(self, other):
        return self._lift(other) / self

    def __neg__(self):
        return DiffTensor._from_op(-self.data, (self,), lambda g: (-g,))

    def __pow__(self, exponent: float):
        if isinstance(exponent, DiffTensor):
            raise TypeError("only constant exponents are supported")
        a = self.data
        out = a ** exponent

        def backward(g):
            return (g * exponent * a ** (exponent - 1),)

        return DiffTensor._from_op(out, (self,), backward)

    # --- Elementwise functions ---

    def exp(self):
        out = np.exp(self.data)
        return DiffTensor._from_op(out, (self,), lambda g: (g * out,))

    def log(self):
        a = self.data
        return DiffTensor._from_op(np.log(a), (self,), lambda g: (g / a,))

    def sigmoid(self):
        out = expit(self.data)
        return DiffTensor._from_op(out, (self,), lambda g: (g * out * (1 - out),))

    def abs(self):
        a = self.data
        return DiffTensor._from_op(np.abs(a), (self,), lambda g: (g * np.sign(a),))

    def clip(self, low: float, high: float):
        a = self.data
        inside = (a >= low) & (a <= high)
        return DiffTensor._from_op(np.clip(a, low, high), (self,), lambda g: (g * inside,))

    # --- Reductions ---

    def sum(self, axis=None, keepdims: bool = False):
        shape = self.shape
        out = self.data.sum(axis=axis, keepdims=keepdims)

        def backward(g):
            if axis is not None and not keepdims:
                g = np.expand_dims(g, axis)
            return (np.broadcast_to(g, shape).copy(),)

        return DiffTensor._from_op(np.asarray(out, dtype=self.dtype), (self,), backward)

    def mean(self, axis=None, keepdims: bool = False):
        if axis is None:
            count = self.size
        else:
            axes = (axis,) if isinstance(axis, int) else tuple(axis)
            count = int(np.prod([self.shape[a] for a in axes]))
        return self.sum(axis=axis, keepdims=keepdims) * (1.0 / count)

    # --- Shape manipulation ---

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        original = self.shape
        try:
            out = self.data.reshape(shape)
        except ValueError as exc:
            raise ShapeError(f"cannot reshape {original} into {shape}") from exc
        return DiffTensor._from_op(out, (self,), lambda g: (g.reshape(original),))

    def transpose(self, *axes):
        if len(axes) == 1 and isinstance(axes[0], (tuple, list)):
            axes = tuple(axes[0])
        inverse = np.argsort(axes)
        return DiffTensor._from_op(self.data.transpose(axes), (self,), lambda g: (g.transpose(inverse),))

    def __getitem__(self, index):
        shape, dtype = self.shape, self.dtype

        def backward(g):
            full = np.zeros(shape, dtype=dtype)
            if _is_basic_index(index):
                full[index] += g
            else:
                np.add.at(full, index, g)
            return (full,)

        return DiffTensor._from_op(self.data[index], (self,), backward)

    def pad(self, pad_width: Sequence[Tuple[int, int]]):
        """Zero padding; `pad_width` follows numpy.pad"""
        pad_width = tuple((int(a), int(b)) for a, b in pad_width)
        window = tuple(slice(a, a + n) for (a, _), n in zip(pad_width, self.shape))
        out = np.pad(self.data, pad_width)
        return DiffTensor._from_op(out, (self,), lambda g: (g[window],))

    # --- Backward ---

    def backward(self) -> None:
        if self.size != 1:
            raise GradientError(f"backward() needs a scalar loss, got shape {self.shape}")
        if not self.requires_grad:
            return
        grads = {id(self): np.ones_like(self.data)}
        for node in reversed(_topological_order(self)):
            g = grads.pop(id(node), None)
            if g is None:
                continue
            if node._backward is None:
                g = g.astype(node.dtype, copy=False)
                node.grad = g.copy() if node.grad is None else node.grad + g
                continue
            for parent, parent_grad in zip(node._parents, node._backward(g)):
                if parent_grad is None or not parent.requires_grad:
                    continue
                key = id(parent)
                grads[key] = parent_grad if key not in grads else grads[key] + parent_grad


def _topological_order(root: DiffTensor) -> List[DiffTensor]:
    order: List[DiffTensor] = []
    visited = set()
    stack = [(root, False)]
    while stack:
        node, finished = stack.pop()
        if finished:
            order.append(node)
            continue
        if id(node) in visited:
            continue
        visited.add(id(node))
        stack.append((node, True))
        for parent in node._parents:
            if parent.requires_grad and id(parent) not in visited:
                stack.append((parent, False))
    return order


def concat(tensors: Sequence[DiffTensor], axis: int = 0) -> DiffTensor:
    """Concatenate along `axis`; gradients are split back to each input"""
    sizes = [t.shape[axis] for t in tensors]
    bounds = np.cumsum([0] + sizes)
    out = np.concatenate([t.data for t in tensors], axis=axis)

    def backward(g):
        parts = []
        for start, stop in zip(bounds[:-1], bounds[1:]):
            index = [slice(None)] * g.ndim
            index[axis] = slice(int(start), int(stop))
            parts.append(g[tuple(index)])
        return parts

    return DiffTensor._from_op(out, tuple(tensors), backward)


def _is_basic_index(index) -> bool:
    parts = index if isinstance(index, tuple) else (index,)
    return all(isinstance(p, (slice, int, type(Ellipsis))) or p is None for p in parts)
